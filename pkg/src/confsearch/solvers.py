"""Pluggable QUBO minimizers.

``solve_exact`` enumerates only the one-hot-feasible assignments of a
layout-carrying problem (the product of the block sizes, far smaller than
2^n).  ``solve_brute`` is the unconstrained oracle over all bitstrings.
``solve_sa`` runs independent Metropolis anneals on the Ising image and is
the software stand-in for an annealing device; its best sample need not be
feasible, so callers decode defensively.  ``solve_remote`` posts the wire
document to an HTTP endpoint and re-scores the returned samples locally.

All solvers report a best energy that is re-derivable exactly via
``qubo_energy(best_bits)``, and break ties by the lexicographically
smallest bitstring.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import requests

from .encoding import QuboProblem, qubo_energy, qubo_to_ising, qubo_to_wire

__all__ = [
    "SolverResult",
    "SaConfig",
    "solve_exact",
    "solve_brute",
    "solve_sa",
    "solve_remote",
    "SolverSizeError",
    "RemoteSolverError",
    "RemoteNetworkError",
    "RemoteTimeoutError",
    "RemoteProtocolError",
    "RemoteSampleError",
]

BRUTE_MAX_VARS = 24
EXACT_DEFAULT_CAP = 10_000_000


class SolverSizeError(ValueError):
    """Problem too large for the requested solver."""


class RemoteSolverError(RuntimeError):
    """Base class for remote-solver failures."""


class RemoteNetworkError(RemoteSolverError):
    """Endpoint unreachable."""


class RemoteTimeoutError(RemoteSolverError):
    """Request timed out."""


class RemoteProtocolError(RemoteSolverError):
    """Non-success HTTP status or malformed response body."""


class RemoteSampleError(RemoteSolverError):
    """Returned sample bits do not match the problem size."""


@dataclass(frozen=True)
class SolverResult:
    """Best sample plus the sample pool the caller may filter.

    ``samples`` holds distinct (bits, energy) pairs sorted by energy then
    bits; feasibility counts are with multiplicity over everything the
    solver drew.
    """

    best_bits: tuple[int, ...]
    best_energy: float
    samples_feasible: int
    samples_total: int
    wall_time: float
    samples: tuple[tuple[tuple[int, ...], float], ...] = field(default_factory=tuple)


def _is_feasible(q: QuboProblem, bits) -> bool:
    if q.layout is None:
        return True
    pos = 0
    for _, levels in q.layout.blocks:
        if sum(bits[pos : pos + len(levels)]) != 1:
            return False
        pos += len(levels)
    return True


def _finish(q, bits_energy_pairs, feasible, total, t0) -> SolverResult:
    ordered = sorted(bits_energy_pairs, key=lambda be: (be[1], be[0]))
    best_bits = ordered[0][0]
    # Candidates within float fuzz of the minimum are re-scored exactly so the
    # reported energy and tie-break never depend on accumulation order.
    exact = [(b, qubo_energy(q, b)) for b, e in ordered[:64]]
    exact.sort(key=lambda be: (be[1], be[0]))
    best_bits, best_energy = exact[0]
    return SolverResult(
        best_bits,
        best_energy,
        feasible,
        total,
        time.perf_counter() - t0,
        tuple(ordered),
    )


def solve_exact(q: QuboProblem, cap: int = EXACT_DEFAULT_CAP) -> SolverResult:
    """Exact minimum over the one-hot-feasible assignments of ``q.layout``."""
    t0 = time.perf_counter()
    if q.layout is None:
        raise ValueError("solve_exact requires a problem with a one-hot layout")
    sizes = q.layout.sizes
    offsets = q.layout.offsets
    space = 1
    for s in sizes:
        space *= s
    if space > cap:
        raise SolverSizeError(f"feasible space {space} exceeds cap {cap}")

    m = len(sizes)
    # Feasible energies on the level grid: offset + linear of the chosen level
    # per block + cross-block quadratics (intra-block pairs never fire).
    grid = np.full(sizes, q.offset)
    for bi in range(m):
        shape = [1] * m
        shape[bi] = sizes[bi]
        block_lin = q.linear[offsets[bi] : offsets[bi] + sizes[bi]]
        grid = grid + block_lin.reshape(shape)
    cross: dict[tuple[int, int], np.ndarray] = {}
    for (i, j), v in q.quadratic.items():
        bi = next(k for k in range(m) if offsets[k] <= i < offsets[k] + sizes[k])
        bj = next(k for k in range(m) if offsets[k] <= j < offsets[k] + sizes[k])
        if bi == bj:
            continue  # one-hot penalty pair, infeasible by construction
        mat = cross.setdefault((bi, bj), np.zeros((sizes[bi], sizes[bj])))
        mat[i - offsets[bi], j - offsets[bj]] += v
    for (bi, bj), mat in cross.items():
        shape = [1] * m
        shape[bi] = sizes[bi]
        shape[bj] = sizes[bj]
        grid = grid + mat.reshape(shape)

    flat = grid.ravel()
    min_val = flat.min()
    candidates = np.flatnonzero(flat == min_val)
    pairs = []
    # C-order flat index is lexicographic on level tuples, and a later set bit
    # within a block means a lexicographically smaller bitstring, so the
    # lex-smallest tied bitstring sits at the largest flat index.
    for c in candidates[-64:]:
        levels = np.unravel_index(int(c), sizes)
        bits = [0] * q.n
        for bi, k in enumerate(levels):
            bits[offsets[bi] + int(k)] = 1
        pairs.append((tuple(bits), float(flat[c])))
    return _finish(q, pairs, feasible=space, total=space, t0=t0)


def solve_brute(q: QuboProblem) -> SolverResult:
    """Exhaustive minimum over all 2^n bitstrings (n <= 24)."""
    t0 = time.perf_counter()
    if q.n > BRUTE_MAX_VARS:
        raise SolverSizeError(f"brute force limited to {BRUTE_MAX_VARS} variables")
    n = q.n
    count = 1 << n
    v = np.arange(count, dtype=np.uint32)
    # Bit i is the (n-1-i)-th binary digit, so integer order is lexicographic
    # order on bit tuples.
    bits = [((v >> (n - 1 - i)) & 1).astype(np.float64) for i in range(n)]
    energy = np.full(count, q.offset)
    for i in range(n):
        if q.linear[i] != 0.0:
            energy += q.linear[i] * bits[i]
    for (i, j), coeff in q.quadratic.items():
        if coeff != 0.0:
            energy += coeff * (bits[i] * bits[j])

    min_val = energy.min()
    candidates = np.flatnonzero(energy == min_val)
    pairs = []
    feasible = 0
    if q.layout is not None:
        mask = np.ones(count, dtype=bool)
        pos = 0
        for _, levels in q.layout.blocks:
            width = len(levels)
            block_sum = np.zeros(count, dtype=np.int64)
            for k in range(width):
                block_sum += ((v >> (n - 1 - (pos + k))) & 1).astype(np.int64)
            mask &= block_sum == 1
            pos += width
        feasible = int(mask.sum())
    else:
        feasible = count
    for c in candidates[:64]:
        b = tuple(int((int(c) >> (n - 1 - i)) & 1) for i in range(n))
        pairs.append((b, float(energy[c])))
    return _finish(q, pairs, feasible=feasible, total=count, t0=t0)


@dataclass(frozen=True)
class SaConfig:
    """Simulated-annealing settings; betas default to an auto-scaled range."""

    reads: int = 5000
    sweeps: int = 100
    beta_initial: float | None = None
    beta_final: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.reads < 1:
            raise ValueError("reads must be at least 1")
        if self.sweeps < 0:
            raise ValueError("sweeps must be non-negative")
        if self.beta_initial is not None and self.beta_final is not None:
            if not 0 < self.beta_initial < self.beta_final:
                raise ValueError("need 0 < beta_initial < beta_final")


def solve_sa(q: QuboProblem, cfg: SaConfig | None = None) -> SolverResult:
    """Independent single-spin-flip Metropolis anneals on the Ising image.

    All reads run in lockstep over a geometric inverse-temperature schedule.
    The best sample by energy is returned regardless of feasibility.
    Deterministic for a fixed seed.
    """
    t0 = time.perf_counter()
    cfg = cfg or SaConfig()
    ising = qubo_to_ising(q)
    n = q.n
    rng = np.random.default_rng(cfg.seed)
    if n == 0:
        return SolverResult((), q.offset, 0, 0, time.perf_counter() - t0, ())

    jmat = np.zeros((n, n))
    for (i, j), v in ising.J.items():
        jmat[i, j] = v
        jmat[j, i] = v
    h = ising.h

    scale = max(float(np.abs(h).max(initial=0.0)), float(np.abs(jmat).max(initial=0.0)))
    if scale <= 0.0:
        scale = 1.0
    beta0 = cfg.beta_initial if cfg.beta_initial is not None else 0.1 / scale
    beta1 = cfg.beta_final if cfg.beta_final is not None else 10.0 / scale
    if cfg.sweeps > 1:
        betas = beta0 * (beta1 / beta0) ** (np.arange(cfg.sweeps) / (cfg.sweeps - 1))
    else:
        betas = np.full(cfg.sweeps, beta0)

    spins = rng.choice(np.array([-1.0, 1.0]), size=(cfg.reads, n))
    for beta in betas:
        for i in range(n):
            local = spins @ jmat[i] + h[i]
            delta = -2.0 * spins[:, i] * local
            accept = delta <= 0.0
            hot = ~accept
            if hot.any():
                accept[hot] = rng.random(int(hot.sum())) < np.exp(-beta * delta[hot])
            spins[accept, i] = -spins[accept, i]

    energies = (
        ising.offset
        + spins @ h
        + 0.5 * np.einsum("ri,ij,rj->r", spins, jmat, spins)
    )
    bits = ((spins + 1.0) / 2.0).astype(int)
    feasible = sum(1 for row in bits if _is_feasible(q, tuple(row)))
    unique: dict[tuple[int, ...], float] = {}
    for row, e in zip(bits, energies):
        key = tuple(int(b) for b in row)
        if key not in unique:
            unique[key] = float(e)
    return _finish(q, list(unique.items()), feasible=feasible, total=cfg.reads, t0=t0)


def solve_remote(q: QuboProblem, endpoint: str, timeout: float = 30.0) -> SolverResult:
    """POST the wire document and locally re-score the returned samples.

    The server's energies are advisory: every sample is re-evaluated with
    ``qubo_energy`` and the local value wins.
    """
    t0 = time.perf_counter()
    try:
        response = requests.post(endpoint, json=qubo_to_wire(q), timeout=timeout)
    except requests.Timeout as exc:
        raise RemoteTimeoutError(f"remote solver timed out: {exc}") from None
    except requests.RequestException as exc:
        raise RemoteNetworkError(f"remote solver unreachable: {exc}") from None
    if not response.ok:
        raise RemoteProtocolError(f"remote solver returned status {response.status_code}")
    try:
        doc = response.json()
        raw = doc["samples"]
        parsed = [[int(b) for b in entry["bits"]] for entry in raw]
    except (ValueError, KeyError, TypeError) as exc:
        raise RemoteProtocolError(f"malformed remote response: {exc}") from None
    if not parsed:
        raise RemoteProtocolError("remote response contained no samples")
    for bits in parsed:
        if len(bits) != q.n or any(b not in (0, 1) for b in bits):
            raise RemoteSampleError(
                f"sample length {len(bits)} does not match problem size {q.n}"
            )
    feasible = sum(1 for b in parsed if _is_feasible(q, b))
    unique: dict[tuple[int, ...], float] = {}
    for b in parsed:
        key = tuple(b)
        if key not in unique:
            unique[key] = qubo_energy(q, key)
    return _finish(q, list(unique.items()), feasible=feasible, total=len(parsed), t0=t0)
