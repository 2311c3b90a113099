"""Deviation pseudometric, peak deviation, device inconsistency, probe."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellhv import (
    DeviceMismatchError,
    DimensionMismatchError,
    Distribution,
    EnsembleFamily,
    convergence_probe,
    device_inconsistency,
    ensemble_covariation_det,
    ensemble_covariation_stoch,
    l1_deviation,
    pairwise_deviations,
    peak_deviation,
)
from bellhv.sampling import random_det_observable, random_distribution, random_stoch_observable


def counts_dist(data):
    """hypothesis helper: exact distribution from drawn counts."""
    counts = data.draw(st.lists(st.integers(0, 9), min_size=3, max_size=3))
    if sum(counts) == 0:
        counts[0] = 1
    return Distribution.from_counts(counts)


class TestL1Deviation:
    def test_identity(self):
        p = Distribution.from_weights([0.3, 0.7])
        assert l1_deviation(p, p) == 0.0

    def test_disjoint_supports_maximal(self):
        p = Distribution.from_counts([1, 0])
        q = Distribution.from_counts([0, 1])
        assert l1_deviation(p, q) == 2

    def test_hand_sum(self):
        p = Distribution.from_weights([0.5, 0.5])
        q = Distribution.from_weights([0.7, 0.3])
        assert l1_deviation(p, q) == pytest.approx(0.4, abs=1e-15)
        pe = Distribution.from_weights(["1/2", "1/2"], exact=True)
        qe = Distribution.from_weights(["7/10", "3/10"], exact=True)
        assert l1_deviation(pe, qe) == Fraction(2, 5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            l1_deviation(Distribution.uniform((2,)), Distribution.uniform((3,)))

    @given(st.data())
    @settings(max_examples=150, deadline=None)
    def test_pseudometric_axioms_exact(self, data):
        p, q, r = counts_dist(data), counts_dist(data), counts_dist(data)
        dpq = l1_deviation(p, q)
        assert dpq >= 0
        assert dpq == l1_deviation(q, p)
        assert dpq <= l1_deviation(p, r) + l1_deviation(r, q)
        assert dpq <= 2
        assert (dpq == 0) == (p.weights == q.weights)

    def test_maximal_iff_disjoint(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            p = random_distribution(rng, (4,), exact=True)
            q = random_distribution(rng, (4,), exact=True)
            disjoint = all(a == 0 or b == 0 for a, b in zip(p.weights, q.weights))
            assert (l1_deviation(p, q) == 2) == disjoint

    def test_covariation_is_lipschitz(self):
        # changing the distribution moves any +/-1 covariation by at most delta
        rng = np.random.default_rng(1)
        for _ in range(60):
            p = random_distribution(rng, (5,), exact=True)
            q = random_distribution(rng, (5,), exact=True)
            u, v = random_det_observable(rng, 5), random_det_observable(rng, 5)
            gap = abs(ensemble_covariation_det(p, u, v) - ensemble_covariation_det(q, u, v))
            assert gap <= l1_deviation(p, q)


class TestPeakDeviation:
    def test_singleton_family(self):
        fam = EnsembleFamily.of([Distribution.uniform((2,), exact=True)])
        assert peak_deviation(fam) == 0

    def test_maximal_pair(self):
        fam = EnsembleFamily.of([Distribution.from_counts([1, 0]),
                                 Distribution.from_counts([0, 1])])
        assert peak_deviation(fam) == 2

    def test_three_member_max(self):
        # pairwise deviations: 0.2, 0.1, 0.3; the max is (0.6,0.4) vs (0.45,0.55)
        fam = EnsembleFamily.of([
            Distribution.from_weights(["1/2", "1/2"], exact=True),
            Distribution.from_weights(["3/5", "2/5"], exact=True),
            Distribution.from_weights(["9/20", "11/20"], exact=True),
        ])
        assert peak_deviation(fam) == Fraction(3, 10)
        reports = pairwise_deviations(fam)
        assert {r.pair for r in reports} == {("run0", "run1"), ("run0", "run2"),
                                             ("run1", "run2")}

    def test_monotone_under_union(self):
        rng = np.random.default_rng(2)
        a = [random_distribution(rng, (3,), exact=True) for _ in range(3)]
        b = [random_distribution(rng, (3,), exact=True) for _ in range(3)]
        fa, fb = EnsembleFamily.of(a), EnsembleFamily.of(b)
        union = EnsembleFamily.of(a + b)
        assert peak_deviation(union) >= max(peak_deviation(fa), peak_deviation(fb))

    def test_grows_with_members(self):
        rng = np.random.default_rng(3)
        members = [random_distribution(rng, (3,), exact=True) for _ in range(6)]
        last = Fraction(0)
        for i in range(1, 7):
            cur = peak_deviation(EnsembleFamily.of(members[:i]))
            assert cur >= last
            last = cur


class TestDeviceInconsistency:
    def test_diagonal_mass_is_consistent(self):
        w = [Fraction(0)] * 8
        w[0] = Fraction(1, 2)   # (0,0,0)
        w[7] = Fraction(1, 2)   # (1,1,1)
        p = Distribution(weights=tuple(w), exact=True, index_shape=(2, 2, 2))
        assert device_inconsistency(p) == 0

    def test_uniform_half_offdiagonal(self):
        p = Distribution.uniform((3, 2, 2))
        assert device_inconsistency(p) == pytest.approx(0.5, abs=1e-15)

    def test_point_offdiagonal(self):
        p = Distribution.point_mass(1, (1, 2, 2), exact=True)
        assert device_inconsistency(p) == 1

    def test_needs_triple(self):
        with pytest.raises(DeviceMismatchError):
            device_inconsistency(Distribution.uniform((4,)))

    def test_zero_inconsistency_reduces_to_diagonal_covariation(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            m, l = 3, 2
            diag = random_distribution(rng, (m, l), exact=True)
            w = [Fraction(0)] * (m * l * l)
            for k in range(m):
                for s in range(l):
                    w[(k * l + s) * l + s] = diag.weights[k * l + s]
            p = Distribution(weights=tuple(w), exact=True, index_shape=(m, l, l))
            u, v = random_stoch_observable(rng, l, m), random_stoch_observable(rng, l, m)
            assert device_inconsistency(p) == 0
            full = ensemble_covariation_stoch(p, u, v)
            ideal = ensemble_covariation_stoch(p, u, v, diagonal_only=True)
            assert full == ideal


class TestConvergenceProbe:
    @staticmethod
    def uniform_draw(m):
        return lambda n, rng: rng.integers(0, m, n)

    def test_point_mass_generator_never_deviates(self):
        table = convergence_probe(lambda n, rng: np.zeros(n, dtype=int), m=2,
                                  sizes=[10, 100], trials=20, seed=1)
        assert all(r.median_delta == 0.0 for r in table.rows)

    def test_uniform_medians_shrink(self):
        table = convergence_probe(self.uniform_draw(2), m=2,
                                  sizes=[100, 10000], trials=60, seed=2)
        ratio = table.decay_factor()
        assert 5 <= ratio <= 20  # about sqrt(100) = 10
        assert table.is_decaying()

    def test_worker_count_is_invisible(self):
        kw = dict(m=3, sizes=[50, 200], trials=16, seed=5)
        t1 = convergence_probe(self.uniform_draw(3), workers=1, **kw)
        t4 = convergence_probe(self.uniform_draw(3), workers=4, **kw)
        assert t1.rows == t4.rows

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError):
            convergence_probe(self.uniform_draw(2), m=2, sizes=[100, 10], trials=5, seed=0)
