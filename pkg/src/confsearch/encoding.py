"""One-hot QUBO encoding of a torsion neighbourhood, and the Ising transform.

Each selected torsion gets one binary variable per candidate angle; a
quadratic penalty enforces that exactly one variable per torsion is set.
With the selected subset contracted to a star, the objective needs only
two kinds of energy coefficients: centre-leaf terms (one torsion) and
leaf-leaf terms (two torsions).  Interactions that involve no selected
torsion are constant and folded into the offset, so a feasible bitstring's
objective value equals the full molecular energy of the conformation it
decodes to.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyModel, EvalCounter, _lj_terms
from .molmodel import TorsionVector

if typing.TYPE_CHECKING:
    from .neighbourhoods import TorsionSubset

__all__ = [
    "Discretization",
    "OneHotLayout",
    "QuboProblem",
    "IsingProblem",
    "InfeasibleSampleError",
    "EncodingError",
    "build_neighbourhood_qubo",
    "penalty_auto",
    "qubo_to_ising",
    "qubo_energy",
    "ising_energy",
    "decode_bits",
    "qubo_to_wire",
    "wire_to_qubo",
]

_QUANTUM = 1e6  # angle quantization (1e-6 degrees) for level matching and memo keys


def _q(angle: float) -> int:
    return round((float(angle) % 360.0) * _QUANTUM)


class EncodingError(ValueError):
    """Raised for inconsistent layout / subset / penalty inputs."""


class InfeasibleSampleError(ValueError):
    """A bitstring violates a one-hot block (zero or multiple set bits)."""


@dataclass(frozen=True)
class Discretization:
    """The global angle grid: d strictly increasing values in [0, 360)."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 2:
            raise EncodingError("discretization needs at least 2 levels")
        if any(not 0.0 <= v < 360.0 for v in vals):
            raise EncodingError("discretization values must lie in [0, 360)")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise EncodingError("discretization values must be strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_lookup", {_q(v): k for k, v in enumerate(vals)})

    @property
    def d(self) -> int:
        return len(self.values)

    @staticmethod
    def uniform(d: int) -> "Discretization":
        return Discretization(tuple(360.0 * k / d for k in range(d)))

    def index_of(self, angle: float) -> int | None:
        """Index of the level matching ``angle`` to 1e-6 degrees, else None."""
        return self._lookup.get(_q(angle))


@dataclass(frozen=True)
class OneHotLayout:
    """Flat variable indexing: one block of binary variables per torsion.

    ``blocks`` is an ordered tuple of (torsion index, candidate angles);
    block variables occupy consecutive flat indices in block order.
    """

    blocks: tuple[tuple[int, tuple[float, ...]], ...]

    def __post_init__(self):
        if any(len(levels) == 0 for _, levels in self.blocks):
            raise EncodingError("every torsion block needs at least one level")

    @property
    def n(self) -> int:
        return sum(len(levels) for _, levels in self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(levels) for _, levels in self.blocks)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for _, levels in self.blocks:
            out.append(acc)
            acc += len(levels)
        return tuple(out)

    @property
    def torsions(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.blocks)


@dataclass(frozen=True)
class QuboProblem:
    """Minimize offset + linear . x + sum over i<j of quadratic[i, j] x_i x_j.

    ``penalty`` records the one-hot penalty strength used during
    construction; coefficient ranges (and with them the faithful resolution
    of the encoding) scale with it.
    """

    n: int
    linear: np.ndarray
    quadratic: dict[tuple[int, int], float]
    offset: float
    layout: OneHotLayout | None = None
    penalty: float | None = None

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float)
        object.__setattr__(self, "linear", lin)
        if lin.shape != (self.n,):
            raise EncodingError("linear coefficient count mismatch")
        if not np.all(np.isfinite(lin)):
            raise EncodingError("non-finite linear coefficient")
        for (i, j), v in self.quadratic.items():
            if not 0 <= i < j < self.n:
                raise EncodingError(f"quadratic key ({i}, {j}) must satisfy i < j")
            if not np.isfinite(v):
                raise EncodingError("non-finite quadratic coefficient")


@dataclass(frozen=True)
class IsingProblem:
    """Minimize offset + h . s + sum over i<j of J[i, j] s_i s_j with s in {-1, +1}."""

    h: np.ndarray
    J: dict[tuple[int, int], float]
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))

    @property
    def n(self) -> int:
        return len(self.h)


def qubo_energy(q: QuboProblem, bits) -> float:
    """Objective value of one bitstring."""
    x = np.asarray(bits, dtype=float)
    if x.shape != (q.n,):
        raise ValueError(f"bitstring length {x.shape} does not match n={q.n}")
    e = q.offset + float(q.linear @ x)
    for (i, j), v in q.quadratic.items():
        if x[i] and x[j]:
            e += v
    return e


def ising_energy(p: IsingProblem, spins) -> float:
    s = np.asarray(spins, dtype=float)
    if s.shape != (p.n,):
        raise ValueError(f"spin vector length {s.shape} does not match n={p.n}")
    e = p.offset + float(p.h @ s)
    for (i, j), v in p.J.items():
        e += v * s[i] * s[j]
    return e


def qubo_to_ising(q: QuboProblem) -> IsingProblem:
    """Exact change of variables x = (s + 1) / 2."""
    h = q.linear / 2.0
    offset = q.offset + float(q.linear.sum()) / 2.0
    J: dict[tuple[int, int], float] = {}
    for (i, j), v in q.quadratic.items():
        J[(i, j)] = v / 4.0
        h[i] += v / 4.0
        h[j] += v / 4.0
        offset += v / 4.0
    return IsingProblem(h, J, offset)


def decode_bits(bits, layout: OneHotLayout, current: TorsionVector) -> TorsionVector:
    """Map a feasible one-hot bitstring back to a torsion vector.

    Raises InfeasibleSampleError when any block has zero or multiple set
    bits; callers sampling from heuristic solvers should catch it and
    discard the sample.
    """
    x = list(bits)
    if len(x) != layout.n:
        raise ValueError(f"bitstring length {len(x)} does not match layout n={layout.n}")
    updates: dict[int, float] = {}
    pos = 0
    for torsion, levels in layout.blocks:
        block = x[pos : pos + len(levels)]
        set_idx = [k for k, b in enumerate(block) if b]
        if len(set_idx) != 1:
            raise InfeasibleSampleError(
                f"torsion {torsion} block has {len(set_idx)} set bits"
            )
        updates[torsion] = levels[set_idx[0]]
        pos += len(levels)
    return current.with_updates(updates)


def penalty_auto(coefficients) -> float:
    """Penalty strong enough that no constraint violation can ever pay off:
    twice the spread of the precomputed energy coefficients, plus one."""
    values = np.asarray(list(coefficients), dtype=float)
    if values.size == 0:
        return 1.0
    return 2.0 * float(values.max() - values.min()) + 1.0


def build_neighbourhood_qubo(
    model: EnergyModel,
    current: TorsionVector,
    subset: "TorsionSubset",
    layout: OneHotLayout,
    penalty: float | None,
    counter: EvalCounter,
) -> QuboProblem:
    """Objective whose feasible minima are the best neighbours of ``current``.

    Coefficients come from the contracted star of ``subset``: centre-leaf
    interaction energies give the linear terms (one per torsion level) and
    leaf-leaf energies give the cross-block quadratic terms.  Torsions
    outside the subset stay frozen at ``current``; interactions that depend
    on none of the subset torsions join the offset, so any feasible
    bitstring's objective equals the molecular energy of its decoding.
    ``penalty=None`` selects the automatic bound.  Cold-cache construction
    counts exactly (sum over block pairs of |block_i| * |block_j|) + total
    level count evaluations.
    """
    from .neighbourhoods import is_two_torsion_dependent

    graph = model.graph
    if not is_two_torsion_dependent(graph, subset.torsions):
        raise EncodingError("subset is not 2-torsion dependent")
    if layout.torsions != tuple(subset.torsions):
        raise EncodingError("layout does not cover exactly the subset torsions")
    if len(current) != model.spec.n_torsions:
        raise EncodingError("current torsion vector has the wrong length")
    for torsion, levels in layout.blocks:
        if _q(current[torsion]) not in {_q(v) for v in levels}:
            raise EncodingError(
                f"torsion {torsion}: current angle {current[torsion]} missing from its levels"
            )

    m = len(layout.blocks)
    root_body = min(subset.center_bodies)
    center_atoms = model.body_atoms(sorted(subset.center_bodies))
    leaf_atoms = [model.body_atoms(sorted(b)) for b in subset.leaf_bodies]

    # Frozen torsions internal to each star vertex (their current angles are
    # part of the memo keys: they shape the merged groups).
    def _frozen_key(body_sets) -> tuple:
        inside = []
        for edge in graph.torsions:
            for bodies in body_sets:
                if edge.body_a in bodies and edge.body_b in bodies:
                    inside.append((edge.index, _q(current[edge.index])))
                    break
        return tuple(inside)

    # Lazy per-level realizations in the centre-rooted frame: leaf positions
    # depend only on their own torsion, centre positions are fixed.
    real_cache: dict[tuple[int, int], np.ndarray] = {}

    def _coords_at(torsion: int, angle: float) -> np.ndarray:
        key = (torsion, _q(angle))
        if key not in real_cache:
            real_cache[key] = model.realize(
                current.with_updates({torsion: angle}), root_body=root_body
            )
        return real_cache[key]

    # Centre-leaf linear coefficients, one energy evaluation per level.
    u_single: list[np.ndarray] = []
    for bi, (torsion, levels) in enumerate(layout.blocks):
        w, eps, sig = model.pair_tables(center_atoms, leaf_atoms[bi])
        frozen = _frozen_key([subset.center_bodies, subset.leaf_bodies[bi]])
        vals = np.empty(len(levels))
        for k, angle in enumerate(levels):
            key = (
                "u1",
                subset.center_bodies,
                subset.leaf_bodies[bi],
                torsion,
                _q(angle),
                frozen,
            )
            hit = model.memo_get(key)
            if hit is not None:
                vals[k] = hit
                continue
            coords = _coords_at(torsion, angle)
            if w.any():
                delta = coords[center_atoms][:, None, :] - coords[leaf_atoms[bi]][None, :, :]
                r = np.sqrt((delta**2).sum(-1))
                vals[k] = float((w * _lj_terms(r, eps, sig)).sum())
            else:
                vals[k] = 0.0
            counter.add(1)
            model.memo_put(key, vals[k])
        u_single.append(vals)

    # Leaf-leaf quadratic coefficient matrices, one block at a time.
    u_pair: dict[tuple[int, int], np.ndarray] = {}
    for bi in range(m):
        ti, levels_i = layout.blocks[bi]
        for bj in range(bi + 1, m):
            tj, levels_j = layout.blocks[bj]
            w, eps, sig = model.pair_tables(leaf_atoms[bi], leaf_atoms[bj])
            frozen = _frozen_key(
                [subset.center_bodies, subset.leaf_bodies[bi], subset.leaf_bodies[bj]]
            )
            key = (
                "u2",
                subset.leaf_bodies[bi],
                subset.leaf_bodies[bj],
                ti,
                tj,
                tuple(_q(v) for v in levels_i),
                tuple(_q(v) for v in levels_j),
                frozen,
            )
            hit = model.memo_get(key)
            if hit is not None:
                u_pair[(bi, bj)] = hit
                continue
            a_pos = np.stack([_coords_at(ti, v)[leaf_atoms[bi]] for v in levels_i])
            b_pos = np.stack([_coords_at(tj, v)[leaf_atoms[bj]] for v in levels_j])
            if w.any():
                delta = a_pos[:, None, :, None, :] - b_pos[None, :, None, :, :]
                r = np.sqrt((delta**2).sum(-1))
                mat = (w * _lj_terms(r, eps, sig)).sum(axis=(2, 3))
            else:
                mat = np.zeros((len(levels_i), len(levels_j)))
            counter.add(len(levels_i) * len(levels_j))
            model.memo_put(key, mat)
            u_pair[(bi, bj)] = mat

    if penalty is None:
        coeffs = np.concatenate(
            [v.ravel() for v in u_single] + [mat.ravel() for mat in u_pair.values()]
        )
        p = penalty_auto(coeffs)
    else:
        p = float(penalty)
        if p <= 0:
            raise EncodingError("penalty must be positive")

    # Interactions that involve no subset torsion are constant: pairs whose
    # endpoints fall in the same star vertex (bookkeeping, not counted).
    group_of = np.full(model.n_atoms, -1, dtype=int)
    group_of[center_atoms] = 0
    for k, atoms in enumerate(leaf_atoms):
        group_of[atoms] = k + 1
    coords_now = model.realize(current, root_body=root_body)
    iu, ju = model._iu, model._ju
    same = group_of[iu] == group_of[ju]
    w_all = model._weight[iu, ju] * same
    delta = coords_now[iu] - coords_now[ju]
    r = np.sqrt((delta**2).sum(-1))
    frozen_energy = float((w_all * _lj_terms(r, model._eps[iu, ju], model._sig[iu, ju])).sum())

    offsets = layout.offsets
    linear = np.empty(layout.n)
    quadratic: dict[tuple[int, int], float] = {}
    for bi, (torsion, levels) in enumerate(layout.blocks):
        o = offsets[bi]
        for k in range(len(levels)):
            linear[o + k] = u_single[bi][k] - p
        for k1 in range(len(levels)):
            for k2 in range(k1 + 1, len(levels)):
                quadratic[(o + k1, o + k2)] = 2.0 * p
    for (bi, bj), mat in u_pair.items():
        oi, oj = offsets[bi], offsets[bj]
        for k1 in range(mat.shape[0]):
            for k2 in range(mat.shape[1]):
                v = float(mat[k1, k2])
                if v != 0.0:
                    quadratic[(oi + k1, oj + k2)] = v
    offset = p * m + frozen_energy
    return QuboProblem(layout.n, linear, quadratic, offset, layout=layout, penalty=p)


def qubo_to_wire(q: QuboProblem) -> dict:
    """JSON-ready document: {"n", "linear", "quadratic": [[i, j, v]], "offset"}."""
    return {
        "n": q.n,
        "linear": [float(v) for v in q.linear],
        "quadratic": [[i, j, float(v)] for (i, j), v in sorted(q.quadratic.items())],
        "offset": float(q.offset),
    }


def wire_to_qubo(doc: dict) -> QuboProblem:
    """Parse the wire document (layout is not transmitted)."""
    try:
        n = int(doc["n"])
        linear = np.asarray(doc["linear"], dtype=float)
        quadratic = {(int(i), int(j)): float(v) for i, j, v in doc["quadratic"]}
        offset = float(doc["offset"])
    except (KeyError, TypeError, ValueError) as exc:
        raise EncodingError(f"malformed QUBO document: {exc}") from None
    return QuboProblem(n, linear, quadratic, offset)
