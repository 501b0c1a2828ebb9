"""Lennard-Jones 6-12 molecular energy and its rigid-body decomposition.

The molecular energy is a sum of pairwise 6-12 terms

    V(eps, sig, r) = eps * ((sig / r)**12 - 2 * (sig / r)**6)

over all eligible atom pairs, with per-type parameters combined
geometrically.  Pairs separated by one or two bonds are excluded (their
distances never change under torsion rotations); 1-4 pairs carry an optional
scale factor.  Grouping terms by the rigid bodies of their endpoints splits
the total into a rotation-invariant constant plus one term per body pair
that depends only on the torsions along the tree path between the two
bodies.

Every counted evaluation goes through an explicit :class:`EvalCounter`;
body-pair values are memoized so repeated coefficient lookups do not
inflate the count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .molmodel import (
    MoleculeSpec,
    RigidBodyGraph,
    TorsionVector,
    partition_rigid_bodies,
    realize,
    torsion_path,
)

__all__ = [
    "EvalCounter",
    "EnergyBreakdown",
    "EnergyModel",
    "load_uff_params",
    "lj_pair",
    "CLASH_DISTANCE",
    "CLASH_ENERGY",
]

# Pairs closer than this are reported as a large finite clash energy instead
# of overflowing; discrete search must be able to rank clashed geometries.
CLASH_DISTANCE = 1e-6  # Angstrom
CLASH_ENERGY = 1e12  # kcal/mol

# Angles are quantized to 1e-6 degrees for memoization keys.
_MEMO_QUANTUM = 1e6


@lru_cache(maxsize=1)
def load_uff_params() -> dict[str, tuple[float, float]]:
    """Bundled UFF table: uff_type -> (epsilon kcal/mol, sigma Angstrom)."""
    table: dict[str, tuple[float, float]] = {}
    text = resources.files("confsearch.data").joinpath("uff_params.txt").read_text()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, eps, sig = line.split()
        eps_f, sig_f = float(eps), float(sig)
        if eps_f <= 0 or sig_f <= 0:
            raise ValueError(f"non-positive UFF parameters for {name}")
        table[name] = (eps_f, sig_f)
    return table


def lj_pair(epsilon: float, sigma: float, r: float) -> float:
    """6-12 pair energy; minimum of -epsilon at r = sigma."""
    if r <= 0.0:
        raise ValueError("pair distance must be positive")
    x = (sigma / r) ** 6
    return epsilon * x * (x - 2.0)


@dataclass
class EvalCounter:
    """Monotone counter of energy evaluations, threaded through every op."""

    count: int = 0

    def add(self, n: int = 1) -> None:
        self.count += n


@dataclass(frozen=True)
class EnergyBreakdown:
    """Constant intra-body energy plus one cross term per body pair."""

    constant: float
    pair_terms: dict[tuple[int, int], float]

    def total(self) -> float:
        return self.constant + sum(self.pair_terms.values())


def _lj_terms(r: np.ndarray, eps: np.ndarray, sig: np.ndarray) -> np.ndarray:
    """Vectorized 6-12 terms with the clash clamp applied."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        x = (sig / r) ** 6
        v = eps * x * (x - 2.0)
    return np.where(r < CLASH_DISTANCE, CLASH_ENERGY, v)


class EnergyModel:
    """Lennard-Jones energy of one molecule, with counting and memoization.

    One model instance belongs to one search run: the evaluation counter and
    the memo cache are shared mutable state and must not be used from two
    threads at once.  Construction precomputes mixed pair parameters and the
    eligibility weights (0 for pairs within two bonds, ``scale_14`` for 1-4
    pairs, 1 beyond).
    """

    def __init__(
        self,
        spec: MoleculeSpec,
        params: dict[str, tuple[float, float]] | None = None,
        scale_14: float = 1.0,
        memoize: bool = True,
    ):
        self.spec = spec
        self.graph: RigidBodyGraph = partition_rigid_bodies(spec)
        self.params = params if params is not None else load_uff_params()
        self.scale_14 = scale_14
        self.memoize = memoize
        n = spec.n_atoms
        self.n_atoms = n

        eps = np.empty(n)
        sig = np.empty(n)
        for k, atom in enumerate(spec.atoms):
            try:
                eps[k], sig[k] = self.params[atom.uff_type]
            except KeyError:
                raise KeyError(f"no UFF parameters for type {atom.uff_type!r}") from None
        # Geometric combination for both well depth and vdW distance.
        self._eps = np.sqrt(np.outer(eps, eps))
        self._sig = np.sqrt(np.outer(sig, sig))

        dist = self._bond_distances()
        weight = np.ones((n, n))
        weight[dist <= 2] = 0.0
        weight[dist == 3] = scale_14
        np.fill_diagonal(weight, 0.0)
        self._weight = weight

        self._iu, self._ju = np.triu_indices(n, k=1)
        self._body_of = np.empty(n, dtype=int)
        for body in self.graph.bodies:
            for a in body.atom_indices:
                self._body_of[a] = body.id

        self._memo: dict = {}
        self._constant: float | None = None

    # -- construction helpers ------------------------------------------------

    def _bond_distances(self) -> np.ndarray:
        """Bond-graph distance between all atom pairs (BFS per atom)."""
        n = self.n_atoms
        adj: list[list[int]] = [[] for _ in range(n)]
        for i, j in self.spec.bonds:
            adj[i].append(j)
            adj[j].append(i)
        dist = np.full((n, n), n + 1, dtype=int)
        for start in range(n):
            dist[start, start] = 0
            frontier = [start]
            d = 0
            while frontier:
                d += 1
                nxt = []
                for u in frontier:
                    for v in adj[u]:
                        if dist[start, v] > d:
                            dist[start, v] = d
                            nxt.append(v)
                frontier = nxt
        return dist

    # -- raw sums (uncounted building blocks) --------------------------------

    def _pair_sum(self, coords: np.ndarray, ia: np.ndarray, ib: np.ndarray) -> float:
        """Weighted LJ sum over the cross pairs ia x ib at ``coords``."""
        w = self._weight[np.ix_(ia, ib)]
        if not w.any():
            return 0.0
        delta = coords[ia][:, None, :] - coords[ib][None, :, :]
        r = np.sqrt((delta**2).sum(-1))
        v = _lj_terms(r, self._eps[np.ix_(ia, ib)], self._sig[np.ix_(ia, ib)])
        return float((w * v).sum())

    def _total_sum(self, coords: np.ndarray) -> float:
        iu, ju = self._iu, self._ju
        w = self._weight[iu, ju]
        delta = coords[iu] - coords[ju]
        r = np.sqrt((delta**2).sum(-1))
        v = _lj_terms(r, self._eps[iu, ju], self._sig[iu, ju])
        return float((w * v).sum())

    def realize(self, t: TorsionVector, root_body: int | None = None) -> np.ndarray:
        return realize(self.spec, t, root_body=root_body)

    # -- counted operations ---------------------------------------------------

    def total_energy(self, t: TorsionVector, counter: EvalCounter) -> float:
        """Full molecular energy at ``t``; counts one evaluation."""
        counter.add(1)
        return self._total_sum(self.realize(t))

    def constant_energy(self) -> float:
        """Rotation-invariant sum over intra-body eligible pairs (cached)."""
        if self._constant is None:
            coords = self.spec.coords()
            iu, ju = self._iu, self._ju
            same = self._body_of[iu] == self._body_of[ju]
            w = self._weight[iu, ju] * same
            delta = coords[iu] - coords[ju]
            r = np.sqrt((delta**2).sum(-1))
            v = _lj_terms(r, self._eps[iu, ju], self._sig[iu, ju])
            self._constant = float((w * v).sum())
        return self._constant

    def body_pair_energy(
        self,
        a: int,
        b: int,
        assignment: dict[int, float],
        counter: EvalCounter,
    ) -> float:
        """Cross energy between bodies ``a`` and ``b``.

        ``assignment`` must give an angle (degrees) for every torsion on the
        tree path between the bodies; torsions off the path are irrelevant.
        Counts one evaluation unless memoized.
        """
        if a == b:
            raise ValueError("body pair requires two distinct bodies")
        lo, hi = (a, b) if a < b else (b, a)
        path = torsion_path(self.graph, lo, hi)
        try:
            angles = tuple(float(assignment[t]) % 360.0 for t in path)
        except KeyError as exc:
            raise ValueError(
                f"assignment missing torsion {exc.args[0]} on the path between "
                f"bodies {a} and {b}"
            ) from None
        key = ("body_pair", lo, hi, tuple(round(x * _MEMO_QUANTUM) for x in angles))
        if self.memoize and key in self._memo:
            return self._memo[key]
        t = TorsionVector.zeros(self.spec.n_torsions).with_updates(
            dict(zip(path, angles))
        )
        ia = np.fromiter(self.graph.bodies[lo].atom_indices, dtype=int)
        ib = np.fromiter(self.graph.bodies[hi].atom_indices, dtype=int)
        value = self._pair_sum(self.realize(t), ia, ib)
        counter.add(1)
        if self.memoize:
            self._memo[key] = value
        return value

    def energy_breakdown(self, t: TorsionVector, counter: EvalCounter) -> EnergyBreakdown:
        """Constant plus every body-pair term at ``t`` (one count per pair)."""
        terms: dict[tuple[int, int], float] = {}
        assignment = {i: t[i] for i in range(len(t))}
        n_bodies = len(self.graph.bodies)
        for a in range(n_bodies):
            for b in range(a + 1, n_bodies):
                terms[(a, b)] = self.body_pair_energy(a, b, assignment, counter)
        return EnergyBreakdown(self.constant_energy(), terms)

    # -- memo plumbing for the neighbourhood-QUBO builder ---------------------

    def memo_get(self, key):
        return self._memo.get(key) if self.memoize else None

    def memo_put(self, key, value) -> None:
        if self.memoize:
            self._memo[key] = value

    def clear_memo(self) -> None:
        self._memo.clear()

    # -- lookup helpers --------------------------------------------------------

    def body_atoms(self, body_ids) -> np.ndarray:
        """Sorted atom indices of the union of the given rigid bodies."""
        atoms: list[int] = []
        for bid in body_ids:
            atoms.extend(self.graph.bodies[bid].atom_indices)
        return np.array(sorted(atoms), dtype=int)

    def torsion_sides(self, torsion_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Atom indices on the root side / distal side of one torsion."""
        from .molmodel import _body_side

        edge = self.graph.torsions[torsion_index]
        root = self.graph.body_of_atom(0)
        root_side = _body_side(self.graph, torsion_index, root)
        near = self.body_atoms(sorted(root_side))
        far_bodies = {b.id for b in self.graph.bodies} - root_side
        far = self.body_atoms(sorted(far_bodies))
        return near, far

    def pair_tables(self, ia: np.ndarray, ib: np.ndarray):
        """(weight, epsilon, sigma) matrices for the cross pairs ia x ib."""
        sel = np.ix_(ia, ib)
        return self._weight[sel], self._eps[sel], self._sig[sel]

    def eligible_pairs(self):
        """Iterate (i, j, weight, eps, sigma, body_i, body_j) for weight > 0."""
        for i, j in zip(self._iu, self._ju):
            w = self._weight[i, j]
            if w > 0.0:
                yield (
                    int(i),
                    int(j),
                    float(w),
                    float(self._eps[i, j]),
                    float(self._sig[i, j]),
                    int(self._body_of[i]),
                    int(self._body_of[j]),
                )
