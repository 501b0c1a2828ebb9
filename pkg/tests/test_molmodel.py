"""Molecule parsing, rigid-body partition, torsion kinematics, generators."""

import math

import networkx as nx
import numpy as np
import pytest

from confsearch import (
    MoleculeError,
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
from confsearch.molmodel import realize

from conftest import BUTANE_TEXT, bond_graph, measure_dihedral

ETHANE_TEXT = """\
atom 0 C C_3 0.0 0.0 0.0
atom 1 C C_3 1.54 0.0 0.0
atom 2 H H_ -0.36 -0.51 -0.89
atom 3 H H_ -0.36 -0.51 0.89
atom 4 H H_ -0.36 1.03 0.0
atom 5 H H_ 1.90 0.51 -0.89
atom 6 H H_ 1.90 0.51 0.89
atom 7 H H_ 1.90 -1.03 0.0
bond 0 1
bond 0 2
bond 0 3
bond 0 4
bond 1 5
bond 1 6
bond 1 7
"""

CYCLOPROPANE_RING_TORSION = """\
atom 0 C C_3 0.0 0.0 0.0
atom 1 C C_3 1.51 0.0 0.0
atom 2 C C_3 0.755 1.307 0.0
bond 0 1
bond 1 2
bond 0 2
torsion 0 1
atom 3 H H_ 0.0 -1.0 0.5
atom 4 H H_ 1.51 -1.0 0.5
atom 5 H H_ 0.755 2.3 0.5
bond 0 3
bond 1 4
bond 2 5
"""


class TestParse:
    def test_ethane_no_torsions(self):
        spec = parse_molecule(ETHANE_TEXT)
        assert spec.n_atoms == 8
        assert spec.n_torsions == 0

    def test_butane_single_torsion(self):
        spec = parse_molecule(BUTANE_TEXT)
        assert spec.n_torsions == 1
        i, j = spec.bonds[spec.rotatable[0]]
        assert {i, j} == {1, 2}  # the central C-C bond

    def test_ring_torsion_rejected(self):
        with pytest.raises(MoleculeError, match="cycle"):
            parse_molecule(CYCLOPROPANE_RING_TORSION)

    def test_disconnected_rejected(self):
        text = "atom 0 C C_3 0 0 0\natom 1 C C_3 5 0 0\n"
        with pytest.raises(MoleculeError, match="disconnected"):
            parse_molecule(text)

    def test_unknown_element_rejected(self):
        text = "atom 0 Xx C_3 0 0 0\n"
        with pytest.raises(MoleculeError, match="element"):
            parse_molecule(text)

    def test_unknown_uff_type_rejected(self):
        text = ETHANE_TEXT.replace("C_3", "C_9", 1)
        with pytest.raises(MoleculeError, match="uff_type"):
            parse_molecule(text)

    def test_torsion_without_bond_rejected(self):
        text = ETHANE_TEXT + "torsion 2 5\n"
        with pytest.raises(MoleculeError, match="not declared as a bond"):
            parse_molecule(text)

    def test_malformed_line_rejected(self):
        with pytest.raises(MoleculeError, match="line 1"):
            parse_molecule("atom 0 C C_3 zero 0 0\n")

    def test_roundtrip_through_text(self, decane):
        again = parse_molecule(format_molecule(decane), name=decane.name)
        assert again.bonds == decane.bonds
        assert again.rotatable == decane.rotatable
        assert np.allclose(again.coords(), decane.coords(), atol=1e-9)


class TestPartition:
    def test_butane_two_bodies(self, butane_parsed):
        graph = partition_rigid_bodies(butane_parsed)
        assert len(graph.bodies) == 2
        assert len(graph.torsions) == 1
        # Oracle: connected components of the bond graph minus rotatable bonds.
        g = bond_graph(butane_parsed)
        g.remove_edge(1, 2)
        comps = [frozenset(c) for c in nx.connected_components(g)]
        assert sorted(b.atom_indices for b in graph.bodies) == sorted(comps)

    def test_decane_path_graph(self, decane):
        graph = partition_rigid_bodies(decane)
        assert len(graph.bodies) == 8
        assert len(graph.torsions) == 7
        tree = nx.Graph()
        for e in graph.torsions:
            tree.add_edge(e.body_a, e.body_b)
        degrees = sorted(d for _, d in tree.degree())
        assert degrees == [1, 1] + [2] * 6  # a path of 8 vertices

    def test_branched_tree_shape(self):
        # Seven torsions hanging off a small branched skeleton: 8 bodies, tree.
        spec = generate_star(arms=4, arm_carbons=2)
        extra = generate_alkane(10)
        for mol, m in ((spec, 4), (extra, 7)):
            graph = partition_rigid_bodies(mol)
            assert len(graph.bodies) == m + 1
            tree = nx.Graph(
                [(e.body_a, e.body_b) for e in graph.torsions]
            )
            assert nx.is_tree(tree)

    def test_partition_covers_atoms(self, star4):
        graph = partition_rigid_bodies(star4)
        union = set()
        total = 0
        for body in graph.bodies:
            union |= body.atom_indices
            total += len(body.atom_indices)
        assert union == set(range(star4.n_atoms))
        assert total == star4.n_atoms

    def test_bodies_internally_connected(self, decane):
        graph = partition_rigid_bodies(decane)
        g = bond_graph(decane)
        rot = {frozenset(decane.bonds[b]) for b in decane.rotatable}
        g.remove_edges_from([tuple(e) for e in rot])
        for body in graph.bodies:
            sub = g.subgraph(body.atom_indices)
            assert nx.is_connected(sub)


class TestTorsionPath:
    def test_adjacent_single_edge(self, butane_parsed):
        graph = partition_rigid_bodies(butane_parsed)
        assert torsion_path(graph, 0, 1) == [0]

    def test_decane_end_to_end(self, decane):
        graph = partition_rigid_bodies(decane)
        ends = [b.id for b in graph.bodies if len(graph.neighbours(b.id)) == 1]
        assert len(ends) == 2
        path = torsion_path(graph, ends[0], ends[1])
        assert len(path) == 7
        # Oracle: shortest path in the body tree maps to the same edge list.
        tree = nx.Graph()
        for e in graph.torsions:
            tree.add_edge(e.body_a, e.body_b, torsion=e.index)
        nodes = nx.shortest_path(tree, ends[0], ends[1])
        expected = [tree[u][v]["torsion"] for u, v in zip(nodes, nodes[1:])]
        assert path == expected

    def test_same_body_empty(self, decane):
        graph = partition_rigid_bodies(decane)
        assert torsion_path(graph, 3, 3) == []


class TestApplyTorsions:
    def test_zero_vector_is_input_bitwise(self, decane):
        conf = apply_torsions(decane, TorsionVector.zeros(7))
        assert np.array_equal(conf.positions, decane.coords())

    def test_full_turn_within_tolerance(self, butane):
        conf = apply_torsions(butane, TorsionVector((360.0,)))
        assert np.max(np.abs(conf.positions - butane.coords())) < 1e-8

    def test_butane_dihedral_changes_by_angle(self, butane):
        # Backbone chain 0-1-2-3 in generator order.
        carbons = [a.index for a in butane.atoms if a.element == "C"]
        before = measure_dihedral(*(butane.coords()[c] for c in carbons))
        conf = apply_torsions(butane, TorsionVector((120.0,)))
        after = measure_dihedral(*(conf.positions[c] for c in carbons))
        change = (after - before) % 360.0
        assert min(change, 360.0 - change) == pytest.approx(120.0, abs=1e-6)

    def test_length_mismatch_rejected(self, butane):
        with pytest.raises(MoleculeError, match="length"):
            apply_torsions(butane, TorsionVector((0.0, 0.0)))

    @pytest.mark.parametrize("fixture", ["butane", "decane", "star4"])
    def test_rigidity(self, fixture, request):
        spec = request.getfixturevalue(fixture)
        graph = partition_rigid_bodies(spec)
        rng = np.random.default_rng(7)
        base = spec.coords()
        for _ in range(5):
            t = TorsionVector(tuple(rng.uniform(0, 360, spec.n_torsions)))
            conf = apply_torsions(spec, t).positions
            for body in graph.bodies:
                idx = sorted(body.atom_indices)
                d0 = np.linalg.norm(base[idx][:, None] - base[idx][None, :], axis=-1)
                d1 = np.linalg.norm(conf[idx][:, None] - conf[idx][None, :], axis=-1)
                assert np.max(np.abs(d0 - d1)) < 1e-8

    def test_path_dependence(self, decane):
        graph = partition_rigid_bodies(decane)
        rng = np.random.default_rng(13)
        t = TorsionVector(tuple(rng.uniform(0, 360, 7)))
        a, b = 0, 3
        path = set(torsion_path(graph, a, b))
        off_path = [i for i in range(7) if i not in path]
        assert off_path
        conf0 = apply_torsions(decane, t).positions
        t2 = t.replace(off_path[0], (t[off_path[0]] + 97.0) % 360.0)
        conf1 = apply_torsions(decane, t2).positions
        ia = sorted(graph.bodies[a].atom_indices)
        ib = sorted(graph.bodies[b].atom_indices)
        d0 = np.linalg.norm(conf0[ia][:, None] - conf0[ib][None, :], axis=-1)
        d1 = np.linalg.norm(conf1[ia][:, None] - conf1[ib][None, :], axis=-1)
        assert np.max(np.abs(d0 - d1)) < 1e-8

    def test_composition(self, pentane):
        rng = np.random.default_rng(5)
        t1 = TorsionVector(tuple(rng.uniform(0, 360, 2)))
        t2 = TorsionVector(tuple(rng.uniform(0, 360, 2)))
        combined = TorsionVector(tuple(a + b for a, b in zip(t1.angles, t2.angles)))
        direct = apply_torsions(pentane, combined).positions
        intermediate = with_positions(pentane, apply_torsions(pentane, t1).positions)
        staged = apply_torsions(intermediate, t2).positions
        assert np.max(np.abs(direct - staged)) < 1e-8

    def test_alternate_root_same_shape(self, decane):
        # Realizing from any root gives the same shape in a different frame.
        rng = np.random.default_rng(23)
        t = TorsionVector(tuple(rng.uniform(0, 360, 7)))
        ref = realize(decane, t)
        d_ref = np.linalg.norm(ref[:, None] - ref[None, :], axis=-1)
        for root in (2, 5, 7):
            alt = realize(decane, t, root_body=root)
            d_alt = np.linalg.norm(alt[:, None] - alt[None, :], axis=-1)
            assert np.max(np.abs(d_ref - d_alt)) < 1e-8
        # Same chirality, not a mirror image: check one signed dihedral.
        carbons = [a.index for a in decane.atoms if a.element == "C"][:4]
        assert measure_dihedral(*(ref[c] for c in carbons)) == pytest.approx(
            measure_dihedral(*(realize(decane, t, root_body=4)[c] for c in carbons)),
            abs=1e-6,
        )


class TestGenerators:
    @pytest.mark.parametrize("n,m", [(10, 7), (20, 17), (3, 0), (2, 0), (4, 1)])
    def test_alkane_torsion_counts(self, n, m):
        assert generate_alkane(n).n_torsions == m

    def test_alkane_too_small(self):
        with pytest.raises(MoleculeError):
            generate_alkane(1)

    def test_alkane_geometry(self, decane):
        coords = decane.coords()
        for i, j in decane.bonds:
            r = np.linalg.norm(coords[i] - coords[j])
            ei, ej = decane.atoms[i].element, decane.atoms[j].element
            if ei == ej == "C":
                assert r == pytest.approx(1.54, abs=1e-9)
            else:
                assert r == pytest.approx(1.09, abs=1e-9)
        carbons = [a.index for a in decane.atoms if a.element == "C"]
        for c0, c1, c2, c3 in zip(carbons, carbons[1:], carbons[2:], carbons[3:]):
            dihedral = measure_dihedral(*(coords[c] for c in (c0, c1, c2, c3)))
            assert abs(dihedral) == pytest.approx(180.0, abs=1e-6)

    def test_alkane_tetrahedral_angles(self, butane):
        coords = butane.coords()
        nbrs = {k: [] for k in range(butane.n_atoms)}
        for i, j in butane.bonds:
            nbrs[i].append(j)
            nbrs[j].append(i)
        tetra = math.degrees(math.acos(-1.0 / 3.0))
        for center, around in nbrs.items():
            for a in range(len(around)):
                for b in range(a + 1, len(around)):
                    u = coords[around[a]] - coords[center]
                    v = coords[around[b]] - coords[center]
                    cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
                    assert math.degrees(math.acos(cosang)) == pytest.approx(
                        tetra, abs=1e-6
                    )

    def test_star_topology(self, star4):
        graph = partition_rigid_bodies(star4)
        assert len(graph.torsions) == 4
        hub = graph.body_of_atom(0)
        assert all(hub in (e.body_a, e.body_b) for e in graph.torsions)
        assert graph.bodies[hub].atom_indices == frozenset({0})

    def test_star_is_valid_spec(self, star4):
        star4.validate()
        again = parse_molecule(format_molecule(star4))
        assert again.n_torsions == 4
