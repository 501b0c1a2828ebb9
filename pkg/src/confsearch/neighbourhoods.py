"""Torsion-subset neighbourhoods over the rigid-body tree.

A subset of torsions is 2-torsion dependent when contracting every other
edge of the rigid-body tree leaves a star graph, so any two contracted
vertices interact through at most two selected torsions.  Each search
iteration draws a random maximal such subset and spreads a level budget
across its torsions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .molmodel import RigidBodyGraph, TorsionVector
from .encoding import Discretization, OneHotLayout

__all__ = [
    "TorsionSubset",
    "is_two_torsion_dependent",
    "neighbourhood_change",
    "allocate_levels",
    "neighbourhood_counts",
    "LevelBudgetError",
]


class LevelBudgetError(ValueError):
    """Raised when the level budget cannot cover the selected torsions."""


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        self.parent[self.find(a)] = self.find(b)


@dataclass(frozen=True)
class TorsionSubset:
    """A 2-torsion-dependent set of torsion indices with its star centre.

    ``center_bodies`` holds the rigid-body ids merged into the centre vertex
    of the contracted star; ``leaf_bodies[i]`` holds the merged bodies of the
    leaf reached by ``torsions[i]``.
    """

    torsions: tuple[int, ...]
    center_bodies: frozenset[int]
    leaf_bodies: tuple[frozenset[int], ...]


def _contract(graph: RigidBodyGraph, subset) -> tuple[_UnionFind, list[tuple[int, int]]]:
    """Union-find after contracting every edge not in ``subset``."""
    chosen = set(subset)
    for t in chosen:
        if not 0 <= t < graph.n_torsions:
            raise KeyError(f"unknown torsion index {t}")
    uf = _UnionFind(len(graph.bodies))
    for edge in graph.torsions:
        if edge.index not in chosen:
            uf.union(edge.body_a, edge.body_b)
    kept = [
        (uf.find(e.body_a), uf.find(e.body_b))
        for e in graph.torsions
        if e.index in chosen
    ]
    return uf, kept


def is_two_torsion_dependent(graph: RigidBodyGraph, subset) -> bool:
    """True when contracting all edges outside ``subset`` yields a star.

    A star is a tree with at most one vertex of degree greater than one;
    self-loops cannot arise because the rigid-body graph is a tree.
    """
    _, kept = _contract(graph, subset)
    degree: dict[int, int] = {}
    for u, v in kept:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    return sum(1 for d in degree.values() if d > 1) <= 1


def _as_subset(graph: RigidBodyGraph, torsions: tuple[int, ...]) -> TorsionSubset:
    """Materialize the star decomposition of a 2-torsion-dependent set."""
    uf, kept = _contract(graph, torsions)
    groups: dict[int, set[int]] = {}
    for body in graph.bodies:
        groups.setdefault(uf.find(body.id), set()).add(body.id)

    degree: dict[int, int] = {}
    for u, v in kept:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    hubs = [g for g, d in degree.items() if d > 1]
    if len(hubs) > 1:
        raise ValueError("subset is not 2-torsion dependent")
    if hubs:
        center = hubs[0]
    else:
        # Single edge (or empty): pick the group with the smallest body id.
        center = min(degree) if degree else uf.find(0)

    leaves = []
    for t, (u, v) in zip(torsions, kept):
        if u == center:
            leaf = v
        elif v == center:
            leaf = u
        else:
            raise ValueError("subset is not 2-torsion dependent")
        leaves.append(frozenset(groups[leaf]))
    return TorsionSubset(torsions, frozenset(groups[center]), tuple(leaves))


def neighbourhood_change(graph: RigidBodyGraph, rng: np.random.Generator) -> TorsionSubset:
    """Draw a random maximal 2-torsion-dependent subset of the torsions.

    Follows a uniform random ordering of the torsions, greedily adding each
    one whose inclusion keeps the set 2-torsion dependent.  Because the
    property is closed under taking subsets, the greedy result is maximal.
    """
    m = graph.n_torsions
    if m < 1:
        raise ValueError("molecule has no torsions")
    order = rng.permutation(m)
    chosen: list[int] = []
    for t in order:
        if is_two_torsion_dependent(graph, chosen + [int(t)]):
            chosen.append(int(t))
    return _as_subset(graph, tuple(sorted(chosen)))


def allocate_levels(
    subset: TorsionSubset,
    s: int,
    theta: Discretization,
    current: TorsionVector,
    rng: np.random.Generator,
) -> OneHotLayout:
    """Split the level budget ``s`` evenly across the subset's torsions.

    Sizes are floor(s / m) with the remainder given to the lowest torsion
    indices; any size above d is capped at d and the surplus redistributed
    while headroom remains (the layout total never exceeds ``s``).  Every
    torsion keeps its current angle among its levels, so the incumbent
    solution stays feasible; the remaining levels are sampled uniformly
    without replacement.
    """
    m = len(subset.torsions)
    d = theta.d
    if s < m:
        raise LevelBudgetError(f"budget s={s} below the {m} selected torsions")
    base, rem = divmod(s, m)
    sizes = [base + 1 if k < rem else base for k in range(m)]
    surplus = 0
    for k in range(m):
        if sizes[k] > d:
            surplus += sizes[k] - d
            sizes[k] = d
    while surplus > 0:
        grew = False
        for k in range(m):
            if surplus == 0:
                break
            if sizes[k] < d:
                sizes[k] += 1
                surplus -= 1
                grew = True
        if not grew:
            break  # every torsion at the full grid; drop the rest

    blocks = []
    for torsion, size in zip(subset.torsions, sizes):
        cur = current[torsion]
        cur_idx = theta.index_of(cur)
        if cur_idx is None:
            raise LevelBudgetError(
                f"current angle {cur} of torsion {torsion} is not a discretization level"
            )
        others = [k for k in range(d) if k != cur_idx]
        extra = rng.choice(len(others), size=size - 1, replace=False) if size > 1 else []
        level_idx = sorted([cur_idx] + [others[int(k)] for k in extra])
        blocks.append((torsion, tuple(theta.values[k] for k in level_idx)))
    return OneHotLayout(tuple(blocks))


def neighbourhood_counts(layout: OneHotLayout) -> tuple[int, int]:
    """(number of feasible assignments, energy pre-evaluations needed).

    The feasible count is the product of the block sizes; building the
    neighbourhood objective needs one evaluation per cross-block level pair
    plus one per level.
    """
    sizes = [len(levels) for _, levels in layout.blocks]
    s_k = 1
    for n in sizes:
        s_k *= n
    cross = 0
    for i in range(len(sizes)):
        for j in range(i + 1, len(sizes)):
            cross += sizes[i] * sizes[j]
    return s_k, cross + sum(sizes)
