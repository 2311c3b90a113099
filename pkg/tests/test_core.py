"""Core types and the frequency/ensemble representation identity."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhv import (
    DetObservable,
    DeviceSpace,
    DimensionMismatchError,
    Distribution,
    HiddenSpace,
    ModeMismatchError,
    RecordSequence,
    Run,
    StochObservable,
    ensemble_covariation_det,
    ensemble_covariation_stoch,
    ensemble_probabilities,
    frequency_covariation,
    realize_records,
)
from bellhv.sampling import (
    random_det_observable,
    random_distribution,
    random_stoch_observable,
)


class TestDistribution:
    def test_exact_simplex(self):
        d = Distribution.from_weights(["1/3", "1/3", "1/3"], exact=True)
        assert sum(d.weights) == 1
        assert d.exact

    def test_from_counts(self):
        d = Distribution.from_counts([3, 1])
        assert d.weights == (Fraction(3, 4), Fraction(1, 4))

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            Distribution.from_weights([0.5, 0.6])
        with pytest.raises(ValueError):
            Distribution.from_weights([Fraction(1, 2), Fraction(1, 3)], exact=True)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Distribution.from_weights([1.2, -0.2])

    def test_exact_dimension_cap(self):
        with pytest.raises(ValueError):
            Distribution.uniform((65,), exact=True)

    def test_point_mass_and_uniform(self):
        p = Distribution.point_mass(1, (3,), exact=True)
        assert p.weights == (0, 1, 0)
        u = Distribution.uniform((2, 2, 2))
        assert u.is_triple and len(u) == 8

    def test_array_is_readonly(self):
        arr = Distribution.uniform((4,)).as_array()
        with pytest.raises(ValueError):
            arr[0] = 1.0


class TestRunValidation:
    def test_device_sequences_come_in_pairs(self):
        with pytest.raises(ModeMismatchError):
            Run([0, 1], HiddenSpace(2), device_u=[0, 0], device_space=DeviceSpace(1))

    def test_index_bounds(self):
        with pytest.raises(ValueError):
            Run([0, 2], HiddenSpace(2))

    def test_labels(self):
        with pytest.raises(ValueError):
            HiddenSpace(2, labels=("x",))
        with pytest.raises(ValueError):
            HiddenSpace(2, labels=("x", "x"))


class TestEnsembleProbabilities:
    def test_symmetric_counts(self):
        run = Run([0, 0, 1, 1], HiddenSpace(2))
        assert ensemble_probabilities(run).weights == (0.5, 0.5)

    def test_degenerate_run(self):
        run = Run([0, 0, 0, 0], HiddenSpace(2))
        assert ensemble_probabilities(run, exact=True).weights == (1, 0)

    def test_triple_hand_count(self):
        run = Run([0, 1, 0], HiddenSpace(2), device_u=[0, 0, 1], device_v=[0, 1, 1],
                  device_space=DeviceSpace(2))
        p = ensemble_probabilities(run, mode="triple", exact=True)
        # independent oracle: count (hidden, device_u, device_v) triples directly
        expect = {}
        for i in range(run.n):
            key = (int(run.hidden[i]), int(run.device_u[i]), int(run.device_v[i]))
            expect[key] = expect.get(key, 0) + 1
        for k in range(2):
            for s in range(2):
                for q in range(2):
                    got = p.weights[(k * 2 + s) * 2 + q]
                    assert got == Fraction(expect.get((k, s, q), 0), run.n)

    def test_triple_mode_requires_devices(self):
        with pytest.raises(ModeMismatchError):
            ensemble_probabilities(Run([0, 1], HiddenSpace(2)), mode="triple")

    def test_triple_counts_sum_to_n(self):
        rng = np.random.default_rng(1)
        run = Run(rng.integers(0, 3, 50), HiddenSpace(3),
                  device_u=rng.integers(0, 2, 50), device_v=rng.integers(0, 2, 50),
                  device_space=DeviceSpace(2))
        p = ensemble_probabilities(run, mode="triple", exact=True)
        assert sum(p.weights) == 1

    def test_triple_marginal_matches_hidden(self):
        rng = np.random.default_rng(2)
        run = Run(rng.integers(0, 3, 40), HiddenSpace(3),
                  device_u=rng.integers(0, 2, 40), device_v=rng.integers(0, 2, 40),
                  device_space=DeviceSpace(2))
        triple = ensemble_probabilities(run, mode="triple", exact=True)
        hidden = ensemble_probabilities(run, exact=True)
        assert triple.hidden_marginal().weights == hidden.weights


class TestFrequencyCovariation:
    def test_perfect_correlation(self):
        assert frequency_covariation(RecordSequence([1, -1], [1, -1])) == 1.0

    def test_perfect_anticorrelation(self):
        assert frequency_covariation(RecordSequence([1, -1], [-1, 1])) == -1.0

    def test_hand_summation(self):
        # (1 - 1 + 1 + 1) / 4
        rec = RecordSequence([1, 1, -1, -1], [1, -1, -1, -1])
        assert frequency_covariation(rec) == 0.5
        assert frequency_covariation(rec, exact=True) == Fraction(1, 2)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            RecordSequence([], [])


class TestEnsembleCovariationDet:
    def test_equal_observables(self):
        p = Distribution.from_weights([0.5, 0.5])
        u = DetObservable([1, -1])
        assert ensemble_covariation_det(p, u, u) == 1.0

    def test_opposite_observables(self):
        p = Distribution.from_weights([0.5, 0.5])
        assert ensemble_covariation_det(p, DetObservable([1, -1]), DetObservable([-1, 1])) == -1.0

    def test_weighted(self):
        # 0.75 * 1 + 0.25 * (-1)
        p = Distribution.from_counts([3, 1])
        got = ensemble_covariation_det(p, DetObservable([1, -1]), DetObservable([1, 1]))
        assert got == Fraction(1, 2)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ensemble_covariation_det(Distribution.uniform((3,)),
                                     DetObservable([1, -1]), DetObservable([1, -1]))


class TestEnsembleCovariationStoch:
    def test_point_mass(self):
        u = StochObservable([[1, -1], [-1, 1]])
        v = StochObservable([[1, 1], [-1, -1]])
        for at in range(8):
            p = Distribution.point_mass(at, (2, 2, 2), exact=True)
            k, s, q = at // 4, (at // 2) % 2, at % 2
            assert ensemble_covariation_stoch(p, u, v) == u.values[s, k] * v.values[q, k]

    def test_constant_observables(self):
        run = Run([0, 1, 0], HiddenSpace(2), device_u=[0, 0, 1], device_v=[0, 1, 1],
                  device_space=DeviceSpace(2))
        p = ensemble_probabilities(run, mode="triple", exact=True)
        ones = StochObservable(np.ones((2, 2), dtype=int))
        assert ensemble_covariation_stoch(p, ones, ones) == 1

    def test_single_offdiagonal_term(self):
        p = Distribution.point_mass(1, (1, 2, 2), exact=True)  # cell (k=0, s=0, q=1)
        u = StochObservable([[1], [1]])
        v = StochObservable([[1], [-1]])
        assert ensemble_covariation_stoch(p, u, v) == -1


class TestRealizeRecords:
    def test_direct_lookup(self):
        run = Run([0, 1], HiddenSpace(2))
        rec = realize_records(run, DetObservable([1, -1]), DetObservable([1, 1]))
        assert rec.u.tolist() == [1, -1] and rec.v.tolist() == [1, 1]

    def test_same_observable_gives_unit_covariation(self):
        rng = np.random.default_rng(3)
        run = Run(rng.integers(0, 4, 30), HiddenSpace(4))
        u = random_det_observable(rng, 4)
        assert frequency_covariation(realize_records(run, u, u)) == 1.0

    def test_triple_lookup_against_bruteforce(self):
        rng = np.random.default_rng(4)
        run = Run(rng.integers(0, 3, 25), HiddenSpace(3),
                  device_u=rng.integers(0, 2, 25), device_v=rng.integers(0, 2, 25),
                  device_space=DeviceSpace(2))
        u, v = random_stoch_observable(rng, 2, 3), random_stoch_observable(rng, 2, 3)
        rec = realize_records(run, u, v)
        for i in range(run.n):
            assert rec.u[i] == u.values[run.device_u[i], run.hidden[i]]
            assert rec.v[i] == v.values[run.device_v[i], run.hidden[i]]

    def test_kind_mismatch(self):
        run = Run([0, 1], HiddenSpace(2))
        with pytest.raises(ModeMismatchError):
            realize_records(run, DetObservable([1, -1]), StochObservable([[1, -1]]))
        with pytest.raises(ModeMismatchError):
            realize_records(run, StochObservable([[1, -1]]), StochObservable([[1, -1]]))


class TestRepresentationIdentity:
    """Frequency covariation of realized records equals the ensemble form."""

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=60), st.data())
    @settings(max_examples=120, deadline=None)
    def test_deterministic_exact(self, hidden, data):
        m = 4
        run = Run(hidden, HiddenSpace(m))
        bits = data.draw(st.lists(st.integers(0, 1), min_size=2 * m, max_size=2 * m))
        u = DetObservable([2 * b - 1 for b in bits[:m]])
        v = DetObservable([2 * b - 1 for b in bits[m:]])
        freq = frequency_covariation(realize_records(run, u, v), exact=True)
        ens = ensemble_covariation_det(ensemble_probabilities(run, exact=True), u, v)
        assert freq == ens
        assert -1 <= freq <= 1

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_stochastic_exact(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 80))
        m, l = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        run = Run(rng.integers(0, m, n), HiddenSpace(m),
                  device_u=rng.integers(0, l, n), device_v=rng.integers(0, l, n),
                  device_space=DeviceSpace(l))
        u, v = random_stoch_observable(rng, l, m), random_stoch_observable(rng, l, m)
        freq = frequency_covariation(realize_records(run, u, v), exact=True)
        p = ensemble_probabilities(run, mode="triple", exact=True)
        assert freq == ensemble_covariation_stoch(p, u, v)

    def test_float_mode_tolerance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n, m = int(rng.integers(1, 500)), int(rng.integers(1, 8))
            run = Run(rng.integers(0, m, n), HiddenSpace(m))
            u, v = random_det_observable(rng, m), random_det_observable(rng, m)
            freq = frequency_covariation(realize_records(run, u, v))
            ens = ensemble_covariation_det(ensemble_probabilities(run), u, v)
            assert abs(freq - ens) <= 1e-12


class TestOutcomeDistribution:
    def test_counts(self):
        rec = RecordSequence([1, 1, -1, -1], [1, -1, 1, -1])
        d = rec.outcome_distribution(exact=True)
        assert d.weights == (Fraction(1, 4),) * 4

    def test_covariation_in_range(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            p = random_distribution(rng, (5,))
            u, v = random_det_observable(rng, 5), random_det_observable(rng, 5)
            cov = ensemble_covariation_det(p, u, v)
            assert -1.0 - 1e-12 <= cov <= 1.0 + 1e-12
