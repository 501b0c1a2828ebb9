"""Shared fixtures and independent test oracles.

The oracle helpers recompute energies and geometry facts through a path
that shares nothing with the package internals: networkx for graph
reasoning, explicit python loops over atom pairs for energies, and the
textbook atan2 formula for dihedrals.
"""

import math

import networkx as nx
import numpy as np
import pytest

from confsearch import (
    EnergyModel,
    EvalCounter,
    TorsionVector,
    apply_torsions,
    generate_alkane,
    generate_star,
    load_uff_params,
    parse_molecule,
)

BUTANE_TEXT = """\
# hand-written butane fixture (anti), standard geometry
atom 0 C C_3 0.0 0.0 0.0
atom 1 C C_3 1.54 0.0 0.0
atom 2 C C_3 2.0533333333 1.4520663774 0.0
atom 3 C C_3 3.5933333333 1.4520663774 0.0
bond 0 1
bond 1 2
bond 2 3
torsion 1 2
atom 4 H H_ -0.3633333333 -0.5140235003 -0.8903263992
atom 5 H H_ -0.3633333333 -0.5140235003 0.8903263992
atom 6 H H_ -0.3633333333 1.0280470006 0.0
atom 7 H H_ 1.9033333333 -0.5140235003 -0.8903263992
atom 8 H H_ 1.9033333333 -0.5140235003 0.8903263992
bond 0 4
bond 0 5
bond 0 6
bond 1 7
bond 1 8
atom 9 H H_ 1.6900000000 1.9660898777 -0.8903263992
atom 10 H H_ 1.6900000000 1.9660898777 0.8903263992
atom 11 H H_ 3.9566666666 0.9380428771 -0.8903263992
atom 12 H H_ 3.9566666666 0.9380428771 0.8903263992
atom 13 H H_ 3.9566666666 2.4801134549 0.0
bond 2 9
bond 2 10
bond 3 11
bond 3 12
bond 3 13
"""


@pytest.fixture(scope="session")
def butane():
    return generate_alkane(4)


@pytest.fixture(scope="session")
def pentane():
    return generate_alkane(5)


@pytest.fixture(scope="session")
def hexane():
    return generate_alkane(6)


@pytest.fixture(scope="session")
def decane():
    return generate_alkane(10)


@pytest.fixture(scope="session")
def star4():
    return generate_star(arms=4, arm_carbons=2)


@pytest.fixture(scope="session")
def butane_parsed():
    return parse_molecule(BUTANE_TEXT, name="butane-fixture")


def bond_graph(spec) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(spec.n_atoms))
    g.add_edges_from(spec.bonds)
    return g


def measure_dihedral(p0, p1, p2, p3) -> float:
    """Signed dihedral (degrees) of the chain p0-p1-p2-p3, IUPAC convention."""
    b1 = np.asarray(p1) - np.asarray(p0)
    b2 = np.asarray(p2) - np.asarray(p1)
    b3 = np.asarray(p3) - np.asarray(p2)
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    m1 = np.cross(n1, b2 / np.linalg.norm(b2))
    x = np.dot(n1, n2)
    y = np.dot(m1, n2)
    return math.degrees(math.atan2(y, x))


def oracle_total_energy(spec, t: TorsionVector, scale_14: float = 1.0) -> float:
    """Full energy recomputed with explicit loops and networkx distances."""
    coords = apply_torsions(spec, t).positions
    params = load_uff_params()
    g = bond_graph(spec)
    sep = dict(nx.all_pairs_shortest_path_length(g, cutoff=3))
    total = 0.0
    for i in range(spec.n_atoms):
        for j in range(i + 1, spec.n_atoms):
            d = sep.get(i, {}).get(j)
            if d is not None and d <= 2:
                continue
            weight = scale_14 if d == 3 else 1.0
            eps_i, sig_i = params[spec.atoms[i].uff_type]
            eps_j, sig_j = params[spec.atoms[j].uff_type]
            eps = math.sqrt(eps_i * eps_j)
            sig = math.sqrt(sig_i * sig_j)
            r = float(np.linalg.norm(coords[i] - coords[j]))
            if r < 1e-6:
                total += weight * 1e12
                continue
            x = (sig / r) ** 6
            total += weight * eps * x * (x - 2.0)
    return total


def grid_scan(spec, d: int, scale_14: float = 1.0):
    """Exhaustive energies over the full d^M torsion grid via the model.

    Returns (levels, energy array indexed by level tuples).
    """
    import itertools

    model = EnergyModel(spec, scale_14=scale_14)
    levels = [360.0 * k / d for k in range(d)]
    m = spec.n_torsions
    shape = (d,) * m
    energies = np.empty(shape)
    counter = EvalCounter()
    for combo in itertools.product(range(d), repeat=m):
        t = TorsionVector(tuple(levels[k] for k in combo))
        energies[combo] = model.total_energy(t, counter)
    return levels, energies
