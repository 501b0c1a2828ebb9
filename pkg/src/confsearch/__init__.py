"""Conformational search over discretized torsion angles.

Low-energy conformers are found by variable neighbourhood descent: each
iteration selects a 2-torsion-dependent subset of rotatable bonds, encodes
the restricted minimization as a one-hot QUBO, and hands it to a pluggable
solver (exact enumeration, simulated annealing, or a remote service).
Local search and parallel tempering are included as baselines, along with
an experiment harness for success-rate / residual / time-to-solution
benchmarking.
"""

from .molmodel import (
    Atom,
    Conformation,
    MoleculeSpec,
    MoleculeError,
    RigidBody,
    RigidBodyGraph,
    TorsionVector,
    apply_torsions,
    format_molecule,
    generate_alkane,
    generate_star,
    parse_molecule,
    partition_rigid_bodies,
    torsion_path,
    with_positions,
)
from .energy import EnergyModel, EvalCounter, lj_pair, load_uff_params
from .encoding import (
    Discretization,
    InfeasibleSampleError,
    IsingProblem,
    OneHotLayout,
    QuboProblem,
    build_neighbourhood_qubo,
    decode_bits,
    ising_energy,
    qubo_energy,
    qubo_to_ising,
)
from .neighbourhoods import (
    TorsionSubset,
    allocate_levels,
    is_two_torsion_dependent,
    neighbourhood_change,
    neighbourhood_counts,
)
from .solvers import (
    SaConfig,
    SolverResult,
    solve_brute,
    solve_exact,
    solve_remote,
    solve_sa,
)
from .search import PtmcConfig, RunResult, SearchConfig, local_search, ls_vnd, ptmc, vnd
from .harness import (
    ExperimentConfig,
    Metrics,
    ReferenceRecord,
    generate_reference,
    load_reference,
    run_experiment,
    save_reference,
    sweep_neighbourhood_size,
)

__version__ = "0.1.0"
