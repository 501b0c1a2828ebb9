"""Molecule specifications, rigid-body trees, and torsion-driven geometry.

A molecule is described by atoms, bonds, and a declared list of rotatable
bonds (torsions).  Removing the rotatable bonds partitions the atoms into
rigid bodies; because every rotatable bond must be a bridge of the bond
graph, the rigid bodies form a tree connected by torsion edges.  A
conformation is identified by one angle per torsion, measured relative to
the input geometry (an all-zero torsion vector reproduces the input
coordinates exactly).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "Atom",
    "MoleculeSpec",
    "RigidBody",
    "TorsionEdge",
    "RigidBodyGraph",
    "TorsionVector",
    "Conformation",
    "MoleculeError",
    "parse_molecule",
    "format_molecule",
    "with_positions",
    "partition_rigid_bodies",
    "torsion_path",
    "apply_torsions",
    "generate_alkane",
    "generate_star",
]

# Elements with entries in the bundled parameter table.
KNOWN_ELEMENTS = frozenset(
    "H B C N O F Si P S Cl Br I Ti Fe Ni Ru Pd Zr Hf".split()
)

CC_BOND = 1.54  # Angstrom
CH_BOND = 1.09  # Angstrom
TETRA_ANGLE = math.degrees(math.acos(-1.0 / 3.0))  # 109.471...


class MoleculeError(ValueError):
    """Raised for malformed or invalid molecule specifications."""


@dataclass(frozen=True)
class Atom:
    """One atom: index, element symbol, position (Angstrom), force-field type."""

    index: int
    element: str
    position: tuple[float, float, float]
    uff_type: str


@dataclass(frozen=True)
class MoleculeSpec:
    """Validated molecule: atoms, bonds, and declared rotatable bonds.

    ``rotatable`` holds indices into ``bonds``; their file order defines the
    torsion indices 0..M-1.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[tuple[int, int], ...]
    rotatable: tuple[int, ...]
    name: str = "molecule"

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_torsions(self) -> int:
        return len(self.rotatable)

    def coords(self) -> np.ndarray:
        """Input-geometry coordinates as an (N, 3) array."""
        return np.array([a.position for a in self.atoms], dtype=float)

    def validate(self, known_uff_types: frozenset[str] | None = None) -> None:
        """Check all structural invariants; raise MoleculeError on violation."""
        n = len(self.atoms)
        if n == 0:
            raise MoleculeError("molecule has no atoms")
        for k, atom in enumerate(self.atoms):
            if atom.index != k:
                raise MoleculeError(
                    f"atom indices must be 0..{n - 1} in order; got {atom.index} at line {k}"
                )
            if not all(math.isfinite(x) for x in atom.position):
                raise MoleculeError(f"atom {k} has non-finite coordinates")
            if atom.element not in KNOWN_ELEMENTS:
                raise MoleculeError(f"unknown element {atom.element!r} for atom {k}")
            if known_uff_types is not None and atom.uff_type not in known_uff_types:
                raise MoleculeError(f"unknown uff_type {atom.uff_type!r} for atom {k}")
        seen = set()
        for i, j in self.bonds:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise MoleculeError(f"invalid bond ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise MoleculeError(f"duplicate bond ({i}, {j})")
            seen.add(key)
        for b in self.rotatable:
            if not 0 <= b < len(self.bonds):
                raise MoleculeError(f"rotatable bond index {b} out of range")
        if len(set(self.rotatable)) != len(self.rotatable):
            raise MoleculeError("duplicate rotatable bond declaration")
        adj = _adjacency(n, self.bonds)
        if _component(adj, 0) != set(range(n)):
            raise MoleculeError("bond graph is disconnected")
        for b in self.rotatable:
            i, j = self.bonds[b]
            if not _is_bridge(adj, i, j):
                raise MoleculeError(
                    f"rotatable bond ({i}, {j}) lies on a cycle of the bond graph"
                )


@dataclass(frozen=True)
class RigidBody:
    """A maximal set of atoms mutually connected by non-rotatable bonds."""

    id: int
    atom_indices: frozenset[int]


@dataclass(frozen=True)
class TorsionEdge:
    """Tree edge: torsion ``index`` joins ``body_a``/``body_b`` via atom bond (u, v)."""

    index: int
    body_a: int
    body_b: int
    bond: tuple[int, int]
    bond_index: int


@dataclass(frozen=True)
class RigidBodyGraph:
    """Tree of rigid bodies (vertices) connected by torsions (edges)."""

    bodies: tuple[RigidBody, ...]
    torsions: tuple[TorsionEdge, ...]

    @property
    def n_torsions(self) -> int:
        return len(self.torsions)

    def body_of_atom(self, atom: int) -> int:
        for body in self.bodies:
            if atom in body.atom_indices:
                return body.id
        raise KeyError(atom)

    def neighbours(self, body_id: int) -> list[tuple[int, int]]:
        """(other body id, torsion index) pairs adjacent to ``body_id``."""
        out = []
        for edge in self.torsions:
            if edge.body_a == body_id:
                out.append((edge.body_b, edge.index))
            elif edge.body_b == body_id:
                out.append((edge.body_a, edge.index))
        return out


@dataclass(frozen=True)
class TorsionVector:
    """Angles in degrees, one per torsion, normalized into [0, 360)."""

    angles: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "angles", tuple(float(a) % 360.0 for a in self.angles)
        )

    def __len__(self) -> int:
        return len(self.angles)

    def __getitem__(self, i: int) -> float:
        return self.angles[i]

    def replace(self, i: int, angle: float) -> "TorsionVector":
        vals = list(self.angles)
        vals[i] = angle
        return TorsionVector(tuple(vals))

    def with_updates(self, updates: dict[int, float]) -> "TorsionVector":
        vals = list(self.angles)
        for i, angle in updates.items():
            vals[i] = angle
        return TorsionVector(tuple(vals))

    @staticmethod
    def zeros(m: int) -> "TorsionVector":
        return TorsionVector((0.0,) * m)


@dataclass(frozen=True)
class Conformation:
    """Realized Cartesian coordinates, one 3-vector per atom (Angstrom)."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if not np.all(np.isfinite(pos)):
            raise MoleculeError("conformation has non-finite coordinates")


# ---------------------------------------------------------------------------
# graph helpers


def _adjacency(n: int, bonds) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in bonds:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def _component(adj: list[list[int]], start: int, skip: tuple[int, int] | None = None) -> set[int]:
    """Vertices reachable from ``start``, optionally ignoring one edge."""
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if skip is not None and {u, v} == {skip[0], skip[1]}:
                continue
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def _is_bridge(adj: list[list[int]], i: int, j: int) -> bool:
    return j not in _component(adj, i, skip=(i, j))


# ---------------------------------------------------------------------------
# parsing and formatting


def _default_uff_types() -> frozenset[str]:
    from .energy import load_uff_params

    return frozenset(load_uff_params().keys())


def parse_molecule(text: str, name: str = "molecule") -> MoleculeSpec:
    """Parse the line-oriented molecule-spec format.

    Recognized lines (``#`` starts a comment, blank lines are ignored)::

        atom <index> <element> <uff_type> <x> <y> <z>
        bond <i> <j>
        torsion <i> <j>     # must also appear as a bond

    Torsion lines define the torsion order T_1..T_M.  The parsed molecule is
    fully validated (connectivity, bridge property of every rotatable bond,
    known elements and force-field types).
    """
    atoms: list[Atom] = []
    bonds: list[tuple[int, int]] = []
    torsion_pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        try:
            if kind == "atom":
                if len(fields) != 7:
                    raise ValueError("expected: atom <index> <element> <uff_type> <x> <y> <z>")
                idx = int(fields[1])
                x, y, z = (float(v) for v in fields[4:7])
                atoms.append(Atom(idx, fields[2], (x, y, z), fields[3]))
            elif kind == "bond":
                if len(fields) != 3:
                    raise ValueError("expected: bond <i> <j>")
                bonds.append((int(fields[1]), int(fields[2])))
            elif kind == "torsion":
                if len(fields) != 3:
                    raise ValueError("expected: torsion <i> <j>")
                torsion_pairs.append((int(fields[1]), int(fields[2])))
            else:
                raise ValueError(f"unknown directive {kind!r}")
        except ValueError as exc:
            raise MoleculeError(f"line {lineno}: {exc}") from None

    bond_lookup = {frozenset(b): k for k, b in enumerate(bonds)}
    rotatable = []
    for i, j in torsion_pairs:
        key = frozenset((i, j))
        if key not in bond_lookup:
            raise MoleculeError(f"torsion ({i}, {j}) is not declared as a bond")
        rotatable.append(bond_lookup[key])

    spec = MoleculeSpec(tuple(atoms), tuple(bonds), tuple(rotatable), name=name)
    spec.validate(known_uff_types=_default_uff_types())
    return spec


def format_molecule(spec: MoleculeSpec) -> str:
    """Serialize a MoleculeSpec back to the molecule-spec text format."""
    lines = [f"# {spec.name}"]
    for a in spec.atoms:
        x, y, z = a.position
        lines.append(
            f"atom {a.index} {a.element} {a.uff_type} {x:.17g} {y:.17g} {z:.17g}"
        )
    for i, j in spec.bonds:
        lines.append(f"bond {i} {j}")
    for b in spec.rotatable:
        i, j = spec.bonds[b]
        lines.append(f"torsion {i} {j}")
    return "\n".join(lines) + "\n"


def with_positions(spec: MoleculeSpec, positions: np.ndarray) -> MoleculeSpec:
    """Copy of ``spec`` with atom coordinates replaced by ``positions``."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (spec.n_atoms, 3):
        raise MoleculeError(f"positions must have shape ({spec.n_atoms}, 3)")
    atoms = tuple(
        Atom(a.index, a.element, tuple(float(v) for v in positions[k]), a.uff_type)
        for k, a in enumerate(spec.atoms)
    )
    return MoleculeSpec(atoms, spec.bonds, spec.rotatable, name=spec.name)


# ---------------------------------------------------------------------------
# rigid-body partition and tree paths


@lru_cache(maxsize=256)
def partition_rigid_bodies(spec: MoleculeSpec) -> RigidBodyGraph:
    """Partition atoms into rigid bodies and build the torsion tree.

    Connected components of the bond graph with all rotatable bonds removed
    become the bodies; each rotatable bond becomes one tree edge between the
    bodies containing its endpoints.
    """
    n = spec.n_atoms
    rotatable_keys = {frozenset(spec.bonds[b]) for b in spec.rotatable}
    fixed_bonds = [b for b in spec.bonds if frozenset(b) not in rotatable_keys]
    adj = _adjacency(n, fixed_bonds)

    body_of = [-1] * n
    bodies: list[RigidBody] = []
    for atom in range(n):
        if body_of[atom] != -1:
            continue
        comp = _component(adj, atom)
        bid = len(bodies)
        for a in comp:
            body_of[a] = bid
        bodies.append(RigidBody(bid, frozenset(comp)))

    edges = []
    for t, b in enumerate(spec.rotatable):
        u, v = spec.bonds[b]
        edges.append(TorsionEdge(t, body_of[u], body_of[v], (u, v), b))

    graph = RigidBodyGraph(tuple(bodies), tuple(edges))
    if len(graph.bodies) != len(graph.torsions) + 1:
        raise MoleculeError("rigid-body graph is not a tree")
    return graph


def torsion_path(graph: RigidBodyGraph, a: int, b: int) -> list[int]:
    """Torsion indices along the unique tree path from body ``a`` to ``b``.

    Returns the empty list when ``a == b``.
    """
    n_bodies = len(graph.bodies)
    if not (0 <= a < n_bodies and 0 <= b < n_bodies):
        raise KeyError(f"invalid body id in ({a}, {b})")
    if a == b:
        return []
    parent: dict[int, tuple[int, int]] = {a: (-1, -1)}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        if u == b:
            break
        for v, t in graph.neighbours(u):
            if v not in parent:
                parent[v] = (u, t)
                queue.append(v)
    path = []
    node = b
    while node != a:
        prev, t = parent[node]
        path.append(t)
        node = prev
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# torsion kinematics


@dataclass(frozen=True)
class _TorsionOp:
    """Rotation recipe for one torsion under a fixed realization root."""

    near_atom: int  # bond atom on the root side; stays put
    far_atom: int  # bond atom on the distal side; on the axis
    moving: tuple[int, ...]  # atoms rotated by this torsion


@lru_cache(maxsize=1024)
def _kinematics(spec: MoleculeSpec, root_body: int) -> tuple[_TorsionOp, ...]:
    graph = partition_rigid_bodies(spec)
    body_of = {}
    for body in graph.bodies:
        for atom in body.atom_indices:
            body_of[atom] = body.id
    ops = []
    for edge in graph.torsions:
        u, v = edge.bond
        # Bodies on the far side of this edge, seen from the root.
        root_side = _body_side(graph, edge.index, root_body)
        if body_of[u] in root_side:
            near, far = u, v
        else:
            near, far = v, u
        far_bodies = {b.id for b in graph.bodies} - root_side
        moving = sorted(
            atom
            for body in graph.bodies
            if body.id in far_bodies
            for atom in body.atom_indices
        )
        ops.append(_TorsionOp(near, far, tuple(moving)))
    return tuple(ops)


def _body_side(graph: RigidBodyGraph, torsion_index: int, start_body: int) -> set[int]:
    """Body ids reachable from ``start_body`` without crossing ``torsion_index``."""
    seen = {start_body}
    queue = deque([start_body])
    while queue:
        u = queue.popleft()
        for v, t in graph.neighbours(u):
            if t == torsion_index or v in seen:
                continue
            seen.add(v)
            queue.append(v)
    return seen


def _rotation_matrix(axis: np.ndarray, angle_deg: float) -> np.ndarray:
    """Right-hand-rule rotation about ``axis`` (Rodrigues form)."""
    axis = axis / np.linalg.norm(axis)
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return c * np.eye(3) + s * k + (1.0 - c) * np.outer(axis, axis)


def realize(
    spec: MoleculeSpec, t: TorsionVector, root_body: int | None = None
) -> np.ndarray:
    """Coordinates with each torsion i rotated by t[i] degrees from the input.

    Rotation is about the rotatable-bond axis oriented from the root side to
    the distal side (right-hand rule) and moves the subtree farther from the
    root body.  The default root is the body containing atom 0; any other
    root yields the same shape in a different frame.
    """
    if len(t) != spec.n_torsions:
        raise MoleculeError(
            f"torsion vector has length {len(t)}, molecule has {spec.n_torsions} torsions"
        )
    if root_body is None:
        graph = partition_rigid_bodies(spec)
        root_body = graph.body_of_atom(0)
    ops = _kinematics(spec, root_body)
    coords = spec.coords()
    for op, angle in zip(ops, t.angles):
        if angle == 0.0:
            continue
        origin = coords[op.near_atom]
        axis = coords[op.far_atom] - origin
        rot = _rotation_matrix(axis, angle)
        idx = list(op.moving)
        coords[idx] = (coords[idx] - origin) @ rot.T + origin
    return coords


def apply_torsions(spec: MoleculeSpec, t: TorsionVector) -> Conformation:
    """Realize a torsion vector as Cartesian coordinates (root = body of atom 0)."""
    return Conformation(realize(spec, t))


# ---------------------------------------------------------------------------
# fixture generators


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _any_perpendicular(v: np.ndarray) -> np.ndarray:
    probe = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(_unit(v), probe)) > 0.9:
        probe = np.array([0.0, 1.0, 0.0])
    return _unit(np.cross(v, probe))


def _sp3_hydrogens(
    center: np.ndarray, heavy: list[np.ndarray], reference: np.ndarray | None
) -> list[np.ndarray]:
    """Positions of the hydrogens completing a tetrahedral carbon.

    ``heavy`` holds the positions of existing heavy-atom neighbours (1-3 of
    them); ``reference`` orients a methyl so one hydrogen sits anti to it.
    """
    half = math.radians(TETRA_ANGLE / 2.0)
    dirs = [_unit(p - center) for p in heavy]
    if len(dirs) >= 4:
        return []
    if len(dirs) == 3:
        h = -_unit(dirs[0] + dirs[1] + dirs[2])
        return [center + CH_BOND * h]
    if len(dirs) == 2:
        u = -_unit(dirs[0] + dirs[1])
        w = _unit(np.cross(dirs[0], dirs[1]))
        out = []
        for sign in (1.0, -1.0):
            h = math.cos(half) * u + sign * math.sin(half) * w
            out.append(center + CH_BOND * h)
        return out
    if len(dirs) == 1:
        a = dirs[0]
        if reference is not None:
            perp = reference - center
            perp = perp - np.dot(perp, a) * a
            if np.linalg.norm(perp) < 1e-9:
                perp = _any_perpendicular(a)
            else:
                perp = _unit(perp)
        else:
            perp = _any_perpendicular(a)
        e3 = np.cross(a, perp)
        out = []
        tilt = math.radians(TETRA_ANGLE)
        for azimuth in (180.0, 60.0, 300.0):  # first H anti to the reference
            phi = math.radians(azimuth)
            h = math.cos(tilt) * a + math.sin(tilt) * (
                math.cos(phi) * perp + math.sin(phi) * e3
            )
            out.append(center + CH_BOND * h)
        return out
    raise ValueError("carbon with no heavy neighbour is not supported")


def _finish_carbon_skeleton(
    carbons: np.ndarray, cc_bonds: list[tuple[int, int]], name: str,
    rotatable_cc: list[tuple[int, int]],
) -> MoleculeSpec:
    """Attach sp3 hydrogens to a carbon skeleton and assemble the spec."""
    nc = len(carbons)
    heavy_nb: list[list[int]] = [[] for _ in range(nc)]
    for i, j in cc_bonds:
        heavy_nb[i].append(j)
        heavy_nb[j].append(i)

    atoms = [
        Atom(k, "C", tuple(float(v) for v in carbons[k]), "C_3") for k in range(nc)
    ]
    bonds = list(cc_bonds)
    for c in range(nc):
        nbs = sorted(heavy_nb[c])
        reference = None
        if len(nbs) == 1:
            # Orient methyls against the neighbour's other lowest-index neighbour.
            others = [x for x in heavy_nb[nbs[0]] if x != c]
            if others:
                reference = carbons[min(others)]
        for pos in _sp3_hydrogens(
            carbons[c], [carbons[x] for x in nbs], reference
        ):
            idx = len(atoms)
            atoms.append(Atom(idx, "H", tuple(float(v) for v in pos), "H_"))
            bonds.append((c, idx))

    bond_lookup = {frozenset(b): k for k, b in enumerate(bonds)}
    rotatable = tuple(bond_lookup[frozenset(b)] for b in rotatable_cc)
    spec = MoleculeSpec(tuple(atoms), tuple(bonds), rotatable, name=name)
    spec.validate()
    return spec


def generate_alkane(n_carbons: int) -> MoleculeSpec:
    """Idealized all-anti n-alkane with the internal C-C bonds rotatable.

    Standard geometry: C-C 1.54 A, C-H 1.09 A, tetrahedral angles.  The
    n-3 internal carbon-carbon bonds (none for n < 4) are declared rotatable.
    """
    if n_carbons < 2:
        raise MoleculeError("an alkane needs at least 2 carbons")
    phi = math.radians((180.0 - TETRA_ANGLE) / 2.0)
    step_x = CC_BOND * math.cos(phi)
    step_y = CC_BOND * math.sin(phi)
    carbons = np.array(
        [[k * step_x, (k % 2) * step_y, 0.0] for k in range(n_carbons)]
    )
    cc_bonds = [(k, k + 1) for k in range(n_carbons - 1)]
    rotatable = [(k, k + 1) for k in range(1, n_carbons - 2)]
    return _finish_carbon_skeleton(
        carbons, cc_bonds, f"C{n_carbons}-alkane", rotatable
    )


def generate_star(arms: int = 4, arm_carbons: int = 2) -> MoleculeSpec:
    """Quaternary carbon hub with alkyl arms; the hub bonds are the torsions.

    The rigid-body graph is a star: the hub carbon alone forms the centre
    body and each arm is one rigid body.  Useful as a synthetic fixture for
    neighbourhoods larger than two torsions.
    """
    if not 2 <= arms <= 4:
        raise MoleculeError("hub carbon supports 2 to 4 arms")
    if arm_carbons < 1:
        raise MoleculeError("arms need at least one carbon")
    tetra_dirs = (
        np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
        / math.sqrt(3.0)
    )
    carbons = [np.zeros(3)]
    cc_bonds: list[tuple[int, int]] = []
    rotatable: list[tuple[int, int]] = []
    for arm in range(arms):
        d0 = tetra_dirs[arm]
        prev_idx = 0
        prev_dir = d0
        for k in range(arm_carbons):
            if k == 0:
                pos = carbons[0] + CC_BOND * d0
            else:
                # Continue the chain at the tetrahedral angle, zigzagging in
                # the plane spanned by the previous bond and a fixed normal.
                normal = _any_perpendicular(prev_dir)
                tilt = math.radians(180.0 - TETRA_ANGLE)
                sign = 1.0 if k % 2 == 1 else -1.0
                new_dir = _unit(
                    math.cos(tilt) * prev_dir + sign * math.sin(tilt) * normal
                )
                pos = carbons[prev_idx] + CC_BOND * new_dir
                prev_dir = new_dir
            idx = len(carbons)
            carbons.append(pos)
            cc_bonds.append((prev_idx, idx))
            if k == 0:
                rotatable.append((0, idx))
            prev_idx = idx
    return _finish_carbon_skeleton(
        np.array(carbons), cc_bonds, f"star-{arms}x{arm_carbons}", rotatable
    )
