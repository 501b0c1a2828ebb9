"""Search drivers: VND, single-torsion local search, the LS-VND hybrid,
and a parallel-tempering Monte Carlo baseline.

VND loops: draw a random maximal 2-torsion-dependent subset, spread the
level budget over it, build the one-hot neighbourhood objective, hand it to
the configured solver, decode the best feasible sample, and accept strictly
lower energy.  It stops after ``max_iters`` iterations, after
``max_no_improve`` consecutive non-improving iterations, or as soon as the
best energy reaches ``target_energy``.

Counting follows the conventions of the individual methods: VND counts only
the coefficient pre-evaluations of each neighbourhood objective; LS counts
one full-molecule evaluation per candidate level; PTMC counts one per
Monte Carlo proposal.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .encoding import (
    Discretization,
    InfeasibleSampleError,
    build_neighbourhood_qubo,
    decode_bits,
)
from .energy import EnergyModel, EvalCounter, _lj_terms
from .molmodel import MoleculeSpec, TorsionVector
from .neighbourhoods import allocate_levels, neighbourhood_change
from .solvers import RemoteSolverError, solve_exact

__all__ = [
    "SearchConfig",
    "PtmcConfig",
    "RunResult",
    "vnd",
    "local_search",
    "ls_vnd",
    "ptmc",
]


@dataclass(frozen=True)
class SearchConfig:
    """Settings shared by the VND and LS drivers."""

    d: int = 16
    s: int = 63
    max_iters: int = 200
    max_no_improve: int = 10
    penalty: float | None = None  # None selects the automatic bound
    solver: str = "exact"
    seed: int | None = None
    target_energy: float | None = None
    reference_energy: float | None = None
    scale_14: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.max_no_improve < 1:
            raise ValueError("max_no_improve must be at least 1")
        if self.s < 2:
            raise ValueError("neighbourhood budget s must be at least 2")
        if self.d < 2:
            raise ValueError("discretization needs at least 2 levels")


@dataclass(frozen=True)
class PtmcConfig:
    """Parallel-tempering settings; temperatures are kcal/mol."""

    replicas: int = 10
    sweeps: int = 5000
    t_min: float = 0.5
    t_max: float = 100.0
    exchange_interval: int = 1
    d: int = 16
    seed: int | None = None
    target_energy: float | None = None
    scale_14: float = 1.0

    def __post_init__(self):
        if self.replicas < 2:
            raise ValueError("need at least 2 replicas")
        if not 0.0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if self.sweeps < 0:
            raise ValueError("sweeps must be non-negative")
        if self.exchange_interval < 1:
            raise ValueError("exchange interval must be at least 1")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one search run.

    ``trajectory`` records (iteration, energy) at the start and at every
    acceptance; ``time_to_best`` is the wall time at which the eventual best
    conformation was first reached.
    """

    best_t: TorsionVector
    best_energy: float
    trajectory: tuple[tuple[int, float], ...]
    energy_evals: int
    wall_time: float
    time_to_best: float
    terminated_by: str  # iter_budget | no_improve | target_reached
    iteration_log: tuple[dict, ...] = ()
    stats: dict = field(default_factory=dict)


def _random_vector(theta: Discretization, m: int, rng: np.random.Generator) -> TorsionVector:
    idx = rng.integers(0, theta.d, size=m)
    return TorsionVector(tuple(theta.values[int(k)] for k in idx))


def _degenerate_result(model: EnergyModel, t0: float) -> RunResult:
    energy = model.total_energy(TorsionVector(()), EvalCounter())
    now = time.perf_counter() - t0
    return RunResult(
        TorsionVector(()),
        energy,
        ((0, energy),),
        0,
        now,
        now,
        "no_improve",
    )


def _check_t_init(t: TorsionVector, theta: Discretization, m: int) -> None:
    if len(t) != m:
        raise ValueError(f"initial torsion vector has length {len(t)}, expected {m}")
    for i, angle in enumerate(t.angles):
        if theta.index_of(angle) is None:
            raise ValueError(
                f"initial angle {angle} of torsion {i} is not a discretization level"
            )


def vnd(
    spec: MoleculeSpec,
    cfg: SearchConfig,
    solver=None,
    rng: np.random.Generator | None = None,
    t_init: TorsionVector | None = None,
    model: EnergyModel | None = None,
) -> RunResult:
    """Variable neighbourhood descent from a random (or given) conformation.

    ``solver`` maps a QuboProblem to a SolverResult; it defaults to the
    exact feasible-space solver.  Remote-solver errors and iterations whose
    samples are all infeasible count as non-improving iterations.
    """
    t0 = time.perf_counter()
    solver = solver or solve_exact
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = model or EnergyModel(spec, scale_14=cfg.scale_14)
    theta = Discretization.uniform(cfg.d)
    m = spec.n_torsions
    if m == 0:
        return _degenerate_result(model, t0)
    if t_init is not None:
        _check_t_init(t_init, theta, m)
        t_c = t_init
    else:
        t_c = _random_vector(theta, m, rng)

    scratch = EvalCounter()  # bookkeeping evaluations, excluded from the metric
    counter = EvalCounter()  # coefficient pre-evaluations, the reported count
    e_c = model.total_energy(t_c, scratch)
    best_t, e_best = t_c, e_c
    trajectory = [(0, e_c)]
    time_to_best = time.perf_counter() - t0
    log: list[dict] = []
    a = 0  # iterations done
    b = 0  # consecutive non-improving iterations
    terminated = None

    target = cfg.target_energy
    if target is not None and e_best <= target:
        terminated = "target_reached"

    while terminated is None and a < cfg.max_iters and b < cfg.max_no_improve:
        subset = neighbourhood_change(model.graph, rng)
        layout = allocate_levels(subset, cfg.s, theta, t_c, rng)
        evals_before = counter.count
        qubo = build_neighbourhood_qubo(model, t_c, subset, layout, cfg.penalty, counter)
        candidate: TorsionVector | None = None
        try:
            result = solver(qubo)
        except RemoteSolverError:
            result = None
        if result is not None:
            for bits, _raw in result.samples:
                try:
                    candidate = decode_bits(bits, layout, t_c)
                    break
                except InfeasibleSampleError:
                    continue
        improved = False
        if candidate is not None:
            e_new = model.total_energy(candidate, scratch)
            if e_new < e_c:
                t_c, e_c = candidate, e_new
                improved = True
                trajectory.append((a + 1, e_c))
                if e_c < e_best:
                    best_t, e_best = t_c, e_c
                    time_to_best = time.perf_counter() - t0
        b = 0 if improved else b + 1
        a += 1
        log.append(
            {
                "iteration": a,
                "torsions": subset.torsions,
                "sizes": layout.sizes,
                "evals": counter.count - evals_before,
                "improved": improved,
                "feasible_found": candidate is not None,
                "energy": e_c,
                "penalty": qubo.penalty,
            }
        )
        if target is not None and e_best <= target:
            terminated = "target_reached"
    if terminated is None:
        terminated = "no_improve" if b >= cfg.max_no_improve else "iter_budget"

    return RunResult(
        best_t,
        e_best,
        tuple(trajectory),
        counter.count,
        time.perf_counter() - t0,
        time_to_best,
        terminated,
        tuple(log),
    )


def local_search(
    spec: MoleculeSpec,
    cfg: SearchConfig,
    rng: np.random.Generator | None = None,
    t_init: TorsionVector | None = None,
    model: EnergyModel | None = None,
) -> RunResult:
    """Single-torsion descent: scan torsions in random order each pass and
    move to the best strictly improving level; stop at a 1-opt solution.

    Every candidate level costs one counted full-molecule evaluation (the
    initial conformation is counted too).
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = model or EnergyModel(spec, scale_14=cfg.scale_14)
    theta = Discretization.uniform(cfg.d)
    m = spec.n_torsions
    if m == 0:
        return _degenerate_result(model, t0)
    if t_init is not None:
        _check_t_init(t_init, theta, m)
        t_c = t_init
    else:
        t_c = _random_vector(theta, m, rng)

    counter = EvalCounter()
    e_c = model.total_energy(t_c, counter)
    best_t, e_best = t_c, e_c
    trajectory = [(0, e_c)]
    time_to_best = time.perf_counter() - t0
    target = cfg.target_energy
    terminated = "iter_budget"
    if target is not None and e_best <= target:
        terminated = "target_reached"
    else:
        for pass_no in range(1, cfg.max_iters + 1):
            improved_pass = False
            for torsion in rng.permutation(m):
                best_angle = None
                e_move = e_c
                for angle in theta.values:
                    e_try = model.total_energy(t_c.replace(int(torsion), angle), counter)
                    if e_try < e_move:
                        e_move, best_angle = e_try, angle
                if best_angle is not None:
                    t_c = t_c.replace(int(torsion), best_angle)
                    e_c = e_move
                    improved_pass = True
                    trajectory.append((pass_no, e_c))
                    if e_c < e_best:
                        best_t, e_best = t_c, e_c
                        time_to_best = time.perf_counter() - t0
                    if target is not None and e_best <= target:
                        terminated = "target_reached"
                        break
            if terminated == "target_reached":
                break
            if not improved_pass:
                terminated = "no_improve"
                break

    return RunResult(
        best_t,
        e_best,
        tuple(trajectory),
        counter.count,
        time.perf_counter() - t0,
        time_to_best,
        terminated,
    )


def ls_vnd(
    spec: MoleculeSpec,
    cfg: SearchConfig,
    solver=None,
    rng: np.random.Generator | None = None,
    model: EnergyModel | None = None,
) -> RunResult:
    """Local search from a random start, then VND seeded with its result.

    Evaluation counts and wall time accumulate across both phases.
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = model or EnergyModel(spec, scale_14=cfg.scale_14)
    ls = local_search(spec, cfg, rng=rng, model=model)
    if spec.n_torsions == 0 or ls.terminated_by == "target_reached":
        return ls
    ls_passes = ls.trajectory[-1][0]
    refine = vnd(spec, cfg, solver=solver, rng=rng, t_init=ls.best_t, model=model)
    trajectory = list(ls.trajectory)
    for it, e in refine.trajectory[1:]:
        trajectory.append((ls_passes + it, e))
    if refine.best_energy < ls.best_energy:
        best_t, best_e = refine.best_t, refine.best_energy
        time_to_best = (time.perf_counter() - t0) - (refine.wall_time - refine.time_to_best)
    else:
        best_t, best_e = ls.best_t, ls.best_energy
        time_to_best = ls.time_to_best
    return RunResult(
        best_t,
        best_e,
        tuple(trajectory),
        ls.energy_evals + refine.energy_evals,
        time.perf_counter() - t0,
        time_to_best,
        refine.terminated_by,
        refine.iteration_log,
    )


# ---------------------------------------------------------------------------
# parallel tempering


def _rotation_matrices(axes: np.ndarray, angles_deg: np.ndarray) -> np.ndarray:
    """Batch of right-hand-rule rotation matrices, one per replica."""
    u = axes / np.linalg.norm(axes, axis=1, keepdims=True)
    theta = np.radians(angles_deg)
    c = np.cos(theta)[:, None, None]
    s = np.sin(theta)[:, None, None]
    n = len(axes)
    k = np.zeros((n, 3, 3))
    k[:, 0, 1] = -u[:, 2]
    k[:, 0, 2] = u[:, 1]
    k[:, 1, 0] = u[:, 2]
    k[:, 1, 2] = -u[:, 0]
    k[:, 2, 0] = -u[:, 1]
    k[:, 2, 1] = u[:, 0]
    outer = u[:, :, None] * u[:, None, :]
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    return c * eye + s * k + (1.0 - c) * outer


_RESYNC_SWEEPS = 200  # exact energy/coordinate refresh cadence


def ptmc(
    spec: MoleculeSpec,
    cfg: PtmcConfig,
    rng: np.random.Generator | None = None,
    model: EnergyModel | None = None,
    on_sweep=None,
) -> RunResult:
    """Parallel-tempering Monte Carlo over the discretized torsion grid.

    Each sweep proposes one uniformly drawn level per torsion per replica
    (Metropolis acceptance at the replica's temperature); adjacent replicas
    attempt configuration swaps every ``exchange_interval`` sweeps.  Replica
    temperatures interpolate geometrically between ``t_min`` and ``t_max``
    (coldest first).  Each proposal counts one energy evaluation.

    ``on_sweep(sweep, levels, energies)`` is an optional diagnostics hook
    called after every sweep with the replica level indices and energies.
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    model = model or EnergyModel(spec, scale_14=cfg.scale_14)
    theta = Discretization.uniform(cfg.d)
    m = spec.n_torsions
    if m == 0:
        return _degenerate_result(model, t0)

    n_rep = cfg.replicas
    temps = cfg.t_min * (cfg.t_max / cfg.t_min) ** (np.arange(n_rep) / (n_rep - 1))
    theta_vals = np.array(theta.values)
    counter = EvalCounter()
    scratch = EvalCounter()

    levels = rng.integers(0, theta.d, size=(n_rep, m))
    coords = np.stack(
        [
            model.realize(TorsionVector(tuple(theta_vals[levels[r]])))
            for r in range(n_rep)
        ]
    )
    energies = np.array(
        [model._total_sum(coords[r]) for r in range(n_rep)]
    )

    sides = []
    for i in range(m):
        near, far = model.torsion_sides(i)
        w, eps, sig = model.pair_tables(near, far)
        edge = model.graph.torsions[i]
        root_side = set(near.tolist())
        u, v = edge.bond
        near_axis, far_axis = (u, v) if u in root_side else (v, u)
        # Flatten to eligible pairs only: (near atom, far-side slot) indices.
        ia, ib = np.nonzero(w > 0)
        sides.append(
            (
                far,
                near[ia],  # absolute indices of the near atom of each pair
                ib,  # index into the moved far-side block
                w[ia, ib],
                eps[ia, ib],
                sig[ia, ib],
                near_axis,
                far_axis,
            )
        )

    best_r = int(np.argmin(energies))
    best_levels = levels[best_r].copy()
    e_best = float(energies[best_r])
    trajectory = [(0, e_best)]
    time_to_best = time.perf_counter() - t0
    target = cfg.target_energy
    terminated = "iter_budget"
    proposals = 0
    accepts = 0
    swap_attempts = 0
    swaps = 0

    if target is not None and e_best <= target:
        terminated = "target_reached"
        sweeps_budget = 0
    else:
        sweeps_budget = cfg.sweeps

    for sweep in range(1, sweeps_budget + 1):
        for i in range(m):
            far, pair_near, pair_far, w, eps, sig, near_axis, far_axis = sides[i]
            new_levels = rng.integers(0, theta.d, size=n_rep)
            delta_deg = theta_vals[new_levels] - theta_vals[levels[:, i]]
            counter.add(n_rep)
            proposals += n_rep

            origin = coords[:, near_axis]
            axes = coords[:, far_axis] - origin
            rot = _rotation_matrices(axes, delta_deg)
            moved = coords[:, far] - origin[:, None, :]
            new_pos = np.einsum("rij,rfj->rfi", rot, moved) + origin[:, None, :]

            fixed = coords[:, pair_near]  # (replicas, pairs, 3)
            d_old = fixed - coords[:, far][:, pair_far]
            d_new = fixed - new_pos[:, pair_far]
            r = np.sqrt(
                np.concatenate(((d_new**2).sum(-1), (d_old**2).sum(-1)), axis=0)
            )
            v = (w * _lj_terms(r, eps, sig)).sum(axis=1)
            delta_e = v[:n_rep] - v[n_rep:]

            accept = delta_e <= 0.0
            hot = ~accept
            if hot.any():
                with np.errstate(over="ignore"):
                    prob = np.exp(-delta_e[hot] / temps[hot])
                accept[hot] = rng.random(int(hot.sum())) < prob
            if accept.any():
                idx = np.flatnonzero(accept)
                coords[np.ix_(idx, far)] = new_pos[idx]
                energies[idx] += delta_e[idx]
                levels[idx, i] = new_levels[idx]
                accepts += int(len(idx))
                r_min = int(idx[np.argmin(energies[idx])])
                if energies[r_min] < e_best:
                    e_best = float(energies[r_min])
                    best_levels = levels[r_min].copy()
                    trajectory.append((sweep, e_best))
                    time_to_best = time.perf_counter() - t0

        if sweep % cfg.exchange_interval == 0:
            for r in range(n_rep - 1):
                swap_attempts += 1
                arg = (1.0 / temps[r] - 1.0 / temps[r + 1]) * (
                    energies[r] - energies[r + 1]
                )
                if arg >= 0.0 or rng.random() < math.exp(arg):
                    coords[[r, r + 1]] = coords[[r + 1, r]]
                    energies[[r, r + 1]] = energies[[r + 1, r]]
                    levels[[r, r + 1]] = levels[[r + 1, r]]
                    swaps += 1

        if sweep % _RESYNC_SWEEPS == 0:
            for r in range(n_rep):
                coords[r] = model.realize(TorsionVector(tuple(theta_vals[levels[r]])))
                energies[r] = model._total_sum(coords[r])

        if on_sweep is not None:
            on_sweep(sweep, levels, energies)
        if target is not None and e_best <= target:
            terminated = "target_reached"
            break

    best_t = TorsionVector(tuple(theta_vals[best_levels]))
    best_energy = model.total_energy(best_t, scratch)
    return RunResult(
        best_t,
        best_energy,
        tuple(trajectory),
        counter.count,
        time.perf_counter() - t0,
        time_to_best,
        terminated,
        (),
        {
            "proposals": proposals,
            "accepted": accepts,
            "acceptance_rate": accepts / proposals if proposals else 0.0,
            "swap_attempts": swap_attempts,
            "swaps": swaps,
            "temperatures": [float(t) for t in temps],
        },
    )
