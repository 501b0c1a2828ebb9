"""QUBO construction, penalty algebra, Ising transform, decoding."""

import itertools

import numpy as np
import pytest

from confsearch import (
    Discretization,
    EnergyModel,
    EvalCounter,
    InfeasibleSampleError,
    OneHotLayout,
    QuboProblem,
    TorsionVector,
    allocate_levels,
    build_neighbourhood_qubo,
    decode_bits,
    ising_energy,
    neighbourhood_change,
    neighbourhood_counts,
    partition_rigid_bodies,
    qubo_energy,
    qubo_to_ising,
)
from confsearch.encoding import EncodingError, qubo_to_wire, wire_to_qubo
from confsearch.neighbourhoods import _as_subset


def random_qubo(rng, n, density=0.5, layout=None) -> QuboProblem:
    linear = rng.normal(size=n)
    quadratic = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                quadratic[(i, j)] = float(rng.normal())
    return QuboProblem(n, linear, quadratic, float(rng.normal()), layout=layout)


def all_bitstrings(n):
    return itertools.product((0, 1), repeat=n)


def build_for(spec, torsions, s, d, current=None, rng=None, penalty=None,
              model=None, counter=None):
    model = model or EnergyModel(spec)
    graph = model.graph
    subset = _as_subset(graph, tuple(torsions))
    theta = Discretization.uniform(d)
    current = current or TorsionVector.zeros(spec.n_torsions)
    rng = rng or np.random.default_rng(0)
    counter = counter if counter is not None else EvalCounter()
    layout = allocate_levels(subset, s, theta, current, rng)
    qubo = build_neighbourhood_qubo(model, current, subset, layout, penalty, counter)
    return model, qubo, layout, current, counter


class TestQuboToIsing:
    def test_all_zero(self):
        q = QuboProblem(3, np.zeros(3), {}, 0.0)
        p = qubo_to_ising(q)
        assert np.array_equal(p.h, np.zeros(3))
        assert p.J == {}
        assert p.offset == 0.0

    def test_worked_example(self):
        q = QuboProblem(2, np.array([-1.0, 2.0]), {(0, 1): 4.0}, 0.0)
        p = qubo_to_ising(q)
        assert p.h.tolist() == [0.5, 2.0]
        assert p.J == {(0, 1): 1.0}
        assert p.offset == 1.5

    def test_exhaustive_equivalence_random(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            n = int(rng.integers(1, 11))
            q = random_qubo(rng, n)
            p = qubo_to_ising(q)
            for bits in all_bitstrings(n):
                spins = tuple(2 * b - 1 for b in bits)
                assert abs(qubo_energy(q, bits) - ising_energy(p, spins)) <= 1e-12


class TestQuboEnergy:
    def test_all_zero_bits_gives_offset(self):
        q = random_qubo(np.random.default_rng(0), 5)
        assert qubo_energy(q, (0,) * 5) == q.offset

    def test_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(3)
        q = random_qubo(rng, 6)
        for bits in all_bitstrings(6):
            expected = q.offset
            for i in range(6):
                expected += q.linear[i] * bits[i]
            for (i, j), v in q.quadratic.items():
                expected += v * bits[i] * bits[j]
            assert qubo_energy(q, bits) == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch(self):
        q = random_qubo(np.random.default_rng(0), 4)
        with pytest.raises(ValueError):
            qubo_energy(q, (0, 1))


class TestDecodeBits:
    def _layout(self):
        return OneHotLayout(((0, (0.0, 90.0)), (2, (45.0, 180.0, 270.0))))

    def test_valid_decode(self):
        current = TorsionVector((10.0, 20.0, 30.0))
        t = decode_bits((0, 1, 1, 0, 0), self._layout(), current)
        assert t.angles == (90.0, 20.0, 45.0)

    def test_all_zero_infeasible(self):
        with pytest.raises(InfeasibleSampleError):
            decode_bits((0, 0, 0, 0, 0), self._layout(), TorsionVector((0, 0, 0)))

    def test_double_set_infeasible(self):
        with pytest.raises(InfeasibleSampleError):
            decode_bits((1, 1, 0, 1, 0), self._layout(), TorsionVector((0, 0, 0)))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            decode_bits((1, 0), self._layout(), TorsionVector((0, 0, 0)))


class TestBuildNeighbourhoodQubo:
    def test_two_torsion_enumeration(self, pentane):
        # 2 torsions x 2 levels: all 16 bitstrings, checked against the
        # 4 feasible decoded energies and the penalty algebra.
        model, qubo, layout, current, _ = build_for(pentane, (0, 1), s=4, d=4)
        assert qubo.n == 4
        counter = EvalCounter()
        feas = {}
        for bits in all_bitstrings(4):
            try:
                t = decode_bits(bits, layout, current)
            except InfeasibleSampleError:
                continue
            feas[bits] = model.total_energy(t, counter)
        assert len(feas) == 4
        for bits, e in feas.items():
            assert qubo_energy(qubo, bits) == pytest.approx(e, abs=1e-6)
        unconstrained_min = min(qubo_energy(qubo, b) for b in all_bitstrings(4))
        assert unconstrained_min == pytest.approx(min(feas.values()), abs=1e-9)

    def test_single_torsion_no_cross_terms(self, butane):
        model, qubo, layout, current, _ = build_for(butane, (0,), s=4, d=8)
        offsets = layout.offsets
        # Only intra-block penalty pairs appear.
        for (i, j), v in qubo.quadratic.items():
            assert v > 0  # 2p penalty entries
        # The feasible argmin matches a direct scan over the levels.
        counter = EvalCounter()
        best_angle = min(
            layout.blocks[0][1],
            key=lambda a: model.total_energy(current.replace(0, a), counter),
        )
        energies = {}
        for k, angle in enumerate(layout.blocks[0][1]):
            bits = [0] * qubo.n
            bits[k] = 1
            energies[angle] = qubo_energy(qubo, tuple(bits))
        assert min(energies, key=energies.get) == best_angle

    def test_cold_cache_counter(self, star4):
        model = EnergyModel(star4, memoize=False)
        _, qubo, layout, _, counter = build_for(
            star4, (0, 1, 2), s=12, d=16, model=model
        )
        assert layout.sizes == (4, 4, 4)
        assert counter.count == 3 * 16 + 12 == 60

    def test_counts_match_formula_on_random_neighbourhoods(self, decane):
        model = EnergyModel(decane, memoize=False)
        theta = Discretization.uniform(16)
        rng = np.random.default_rng(17)
        current = TorsionVector.zeros(7)
        for _ in range(10):
            subset = neighbourhood_change(model.graph, rng)
            layout = allocate_levels(subset, 20, theta, current, rng)
            counter = EvalCounter()
            build_neighbourhood_qubo(model, current, subset, layout, None, counter)
            _, pre = neighbourhood_counts(layout)
            assert counter.count == pre

    def test_memo_hits_do_not_count(self, star4):
        model = EnergyModel(star4, memoize=True)
        _, _, layout, current, counter = build_for(star4, (0, 1, 2), s=12, d=16,
                                                   model=model)
        first = counter.count
        assert first == 60
        subset = _as_subset(model.graph, (0, 1, 2))
        build_neighbourhood_qubo(model, current, subset, layout, None, counter)
        assert counter.count == first  # fully memoized rebuild

    def test_faithfulness_random_neighbourhoods(self, pentane, star4, decane):
        # Feasible bitstring objective == molecular energy of its decoding.
        # The 1e-6 kcal/mol agreement is asserted for numerically well-posed
        # builds: once a clash-scale coefficient inflates the one-hot penalty
        # past ~1e6, float cancellation of (U - p) + p costs more than the
        # tolerance no matter how the encoding is arranged.
        rng = np.random.default_rng(23)
        theta = Discretization.uniform(8)
        checked = 0
        for spec in (pentane, star4, decane):
            model = EnergyModel(spec)
            counter = EvalCounter()
            for _ in range(8):
                m = spec.n_torsions
                current = TorsionVector(
                    tuple(theta.values[int(k)] for k in rng.integers(0, 8, m))
                )
                subset = neighbourhood_change(model.graph, rng)
                layout = allocate_levels(subset, 8, theta, current, rng)
                qubo = build_neighbourhood_qubo(
                    model, current, subset, layout, None, counter
                )
                if qubo.penalty > 1e6:
                    continue
                # probe random feasible assignments
                for _ in range(10):
                    bits = [0] * qubo.n
                    pos = 0
                    for _, levels in layout.blocks:
                        bits[pos + int(rng.integers(0, len(levels)))] = 1
                        pos += len(levels)
                    t = decode_bits(tuple(bits), layout, current)
                    exact = model.total_energy(t, EvalCounter())
                    checked += 1
                    assert qubo_energy(qubo, tuple(bits)) == pytest.approx(
                        exact, abs=1e-6
                    )
        assert checked >= 40  # the filter must not hollow out the property

    def test_current_vector_is_feasible_and_matching(self, decane):
        rng = np.random.default_rng(31)
        # A calm near-extended state keeps the penalty scale well-posed.
        current = TorsionVector((0.0, 22.5, 0.0, 337.5, 0.0, 22.5, 0.0))
        model, qubo, layout, _, _ = build_for(
            decane, (1, 4), s=8, d=16, current=current, rng=rng
        )
        assert qubo.penalty < 1e6
        bits = [0] * qubo.n
        pos = 0
        for torsion, levels in layout.blocks:
            bits[pos + levels.index(current[torsion])] = 1
            pos += len(levels)
        assert qubo_energy(qubo, tuple(bits)) == pytest.approx(
            model.total_energy(current, EvalCounter()), abs=1e-6
        )

    def test_penalty_auto_dominates_violations(self, pentane):
        model, qubo, layout, current, _ = build_for(pentane, (0, 1), s=6, d=8)
        energies = {bits: qubo_energy(qubo, bits) for bits in all_bitstrings(qubo.n)}
        best = min(energies, key=energies.get)
        decode_bits(best, layout, current)  # must not raise

    def test_neighbourhood_cardinality(self, star4):
        model, qubo, layout, current, _ = build_for(star4, (0, 1, 2, 3), s=11, d=8)
        s_k, _ = neighbourhood_counts(layout)
        feasible = 0
        for bits in all_bitstrings(qubo.n):
            try:
                decode_bits(bits, layout, current)
                feasible += 1
            except InfeasibleSampleError:
                pass
        assert feasible == s_k == int(np.prod(layout.sizes))

    def test_layout_subset_mismatch_rejected(self, pentane):
        model = EnergyModel(pentane)
        subset = _as_subset(model.graph, (0,))
        layout = OneHotLayout(((1, (0.0, 90.0)),))
        with pytest.raises(EncodingError, match="cover"):
            build_neighbourhood_qubo(
                model, TorsionVector.zeros(2), subset, layout, None, EvalCounter()
            )

    def test_missing_current_level_rejected(self, pentane):
        model = EnergyModel(pentane)
        subset = _as_subset(model.graph, (0,))
        layout = OneHotLayout(((0, (90.0, 180.0)),))
        with pytest.raises(EncodingError, match="missing"):
            build_neighbourhood_qubo(
                model, TorsionVector.zeros(2), subset, layout, None, EvalCounter()
            )

    def test_not_two_torsion_dependent_rejected(self, hexane):
        model = EnergyModel(hexane)
        good = _as_subset(model.graph, (0, 2))
        bad = type(good)((0, 1, 2), good.center_bodies, good.leaf_bodies)
        theta = Discretization.uniform(4)
        layout = OneHotLayout(
            tuple((t, theta.values) for t in (0, 1, 2))
        )
        with pytest.raises(EncodingError, match="dependent"):
            build_neighbourhood_qubo(
                model, TorsionVector.zeros(3), bad, layout, None, EvalCounter()
            )


class TestWireFormat:
    def test_round_trip(self):
        rng = np.random.default_rng(5)
        q = random_qubo(rng, 6)
        again = wire_to_qubo(qubo_to_wire(q))
        assert again.n == q.n
        assert np.allclose(again.linear, q.linear)
        assert again.quadratic == q.quadratic
        assert again.offset == q.offset

    def test_malformed_rejected(self):
        with pytest.raises(EncodingError):
            wire_to_qubo({"n": 2, "linear": [0.0]})
