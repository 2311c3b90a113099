"""Inequality checkers and the product-form joint oracle."""

from fractions import Fraction

import numpy as np
import pytest

from bellhv import (
    BellInstanceDet,
    BellInstanceStoch,
    BudgetViolationError,
    DetObservable,
    Distribution,
    PreconditionError,
    StochObservable,
    bound_report,
    check_budgeted,
    check_classical,
    check_consistent_devices,
    check_deviation_corrected,
    conditional_product_joint,
    device_inconsistency,
    ensemble_covariation_det,
    joint_classical_report,
    joint_marginal_plus,
    joint_pair_covariation,
    l1_deviation,
)
from bellhv.sampling import (
    perturb_within,
    random_det_observable,
    random_distribution,
    random_sigma_capped,
    random_stoch_observable,
)


def diagonal_lift(p_det: Distribution, l: int) -> Distribution:
    """Spread a hidden-only distribution uniformly over matching-state cells."""
    m = len(p_det)
    w = [Fraction(0)] * (m * l * l)
    for k in range(m):
        for s in range(l):
            w[(k * l + s) * l + s] = p_det.weights[k] / l
    return Distribution(weights=tuple(w), exact=True, index_shape=(m, l, l))


def lift_observable(o: DetObservable, l: int) -> StochObservable:
    return StochObservable(np.tile(o.values, (l, 1)))


class TestClassical:
    def test_identical_observables_saturate_at_zero(self):
        p = Distribution.uniform((3,), exact=True)
        a = DetObservable([1, -1, 1])
        rep = check_classical(p, a, a, a)
        assert rep.lhs == 0 and rep.rhs == 0 and rep.holds

    def test_saturating_configuration(self):
        p = Distribution.from_counts([1, 1])
        a = DetObservable([1, -1])
        rep = check_classical(p, a, a, DetObservable([-1, 1]))
        assert rep.lhs == 2 and rep.rhs == 2 and rep.slack == 0

    def test_random_instances_always_hold(self):
        rng = np.random.default_rng(0)
        for _ in range(400):
            m = int(rng.integers(1, 7))
            p = random_distribution(rng, (m,), exact=True)
            a, b, c = (random_det_observable(rng, m) for _ in range(3))
            rep = check_classical(p, a, b, c)
            assert rep.holds and rep.exact

    def test_slack_is_rhs_minus_lhs(self):
        rep = bound_report(0.25, -0.5, 0.125, rule="classical")
        assert rep.slack == rep.rhs - rep.lhs


class TestDeviationCorrected:
    def test_zero_budget_reduces_to_classical(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            m = int(rng.integers(1, 6))
            p = random_distribution(rng, (m,), exact=True)
            a, b, c = (random_det_observable(rng, m) for _ in range(3))
            inst = BellInstanceDet(p_ab=p, p_cb=p, p_ac=p, a=a, b=b, c=c)
            got = check_deviation_corrected(inst, 0)
            ref = check_classical(p, a, b, c)
            assert (got.lhs, got.rhs, got.slack) == (ref.lhs, ref.rhs, ref.slack)

    def test_hand_evaluated_example(self):
        a = DetObservable([1, -1])
        b = DetObservable([1, -1])
        c = DetObservable([1, 1])
        inst = BellInstanceDet(
            p_ab=Distribution.from_counts([1, 0]),
            p_cb=Distribution.from_counts([0, 1]),
            p_ac=Distribution.from_counts([1, 0]),
            a=a, b=b, c=c)
        rep = check_deviation_corrected(inst, 2)
        # cov_ab = 1, cov_cb(c,b) = -1, cov_ac = 1: lhs 2, rhs (1+4) - 1 = 4
        assert rep.lhs == 2 and rep.rhs == 4 and rep.holds

    def test_budget_below_observed_deviation_rejected(self):
        inst = BellInstanceDet(
            p_ab=Distribution.from_counts([1, 0]),
            p_cb=Distribution.from_counts([0, 1]),
            p_ac=Distribution.from_counts([1, 0]),
            a=DetObservable([1, -1]), b=DetObservable([1, -1]), c=DetObservable([1, 1]))
        with pytest.raises(BudgetViolationError):
            check_deviation_corrected(inst, Fraction(1, 2))

    def test_random_instances_hold_at_observed_budget(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            m = int(rng.integers(1, 6))
            pab, pcb, pac = (random_distribution(rng, (m,), exact=True) for _ in range(3))
            a, b, c = (random_det_observable(rng, m) for _ in range(3))
            inst = BellInstanceDet(p_ab=pab, p_cb=pcb, p_ac=pac, a=a, b=b, c=c)
            eps = max(l1_deviation(pab, pcb), l1_deviation(pab, pac))
            assert check_deviation_corrected(inst, eps).holds


class TestConsistentDevices:
    def test_single_state_collapses_to_deterministic(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            m = int(rng.integers(1, 6))
            p = random_distribution(rng, (m,), exact=True)
            a, b, c = (random_det_observable(rng, m) for _ in range(3))
            lifted = diagonal_lift(p, 1)
            inst = BellInstanceStoch(p_ab=lifted, p_cb=lifted, p_ac=lifted,
                                     a=lift_observable(a, 1), b=lift_observable(b, 1),
                                     c=lift_observable(c, 1))
            got = check_consistent_devices(inst)
            ref = check_classical(p, a, b, c)
            assert (got.lhs, got.rhs) == (ref.lhs, ref.rhs)

    def test_lifted_saturating_configuration(self):
        p = diagonal_lift(Distribution.from_counts([1, 1]), 2)
        a = lift_observable(DetObservable([1, -1]), 2)
        c = lift_observable(DetObservable([-1, 1]), 2)
        rep = check_consistent_devices(BellInstanceStoch(p_ab=p, p_cb=p, p_ac=p,
                                                         a=a, b=a, c=c))
        assert rep.lhs == 2 and rep.rhs == 2

    def test_random_diagonal_instances_hold(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            m, l = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            p = diagonal_lift(random_distribution(rng, (m,), exact=True), l)
            a, b, c = (random_stoch_observable(rng, l, m) for _ in range(3))
            rep = check_consistent_devices(BellInstanceStoch(p_ab=p, p_cb=p, p_ac=p,
                                                             a=a, b=b, c=c))
            assert rep.holds

    def test_shared_distribution_required(self):
        p = diagonal_lift(Distribution.from_counts([1, 1]), 2)
        q = diagonal_lift(Distribution.from_counts([1, 3]), 2)
        a = lift_observable(DetObservable([1, -1]), 2)
        with pytest.raises(PreconditionError):
            check_consistent_devices(BellInstanceStoch(p_ab=p, p_cb=q, p_ac=p,
                                                       a=a, b=a, c=a))

    def test_zero_inconsistency_required(self):
        p = Distribution.point_mass(1, (1, 2, 2), exact=True)
        a = StochObservable([[1], [1]])
        with pytest.raises(PreconditionError):
            check_consistent_devices(BellInstanceStoch(p_ab=p, p_cb=p, p_ac=p,
                                                       a=a, b=a, c=a))


class TestBudgeted:
    def test_zero_budgets_reduce_to_consistent_devices(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            m, l = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            p = diagonal_lift(random_distribution(rng, (m,), exact=True), l)
            a, b, c = (random_stoch_observable(rng, l, m) for _ in range(3))
            inst = BellInstanceStoch(p_ab=p, p_cb=p, p_ac=p, a=a, b=b, c=c)
            got = check_budgeted(inst, 0, 0)
            ref = check_consistent_devices(inst)
            assert (got.lhs, got.rhs, got.slack) == (ref.lhs, ref.rhs, ref.slack)

    def test_variants_differ_by_one_epsilon_prime(self):
        rng = np.random.default_rng(6)
        p = random_sigma_capped(rng, 2, 2, Fraction(1, 5))
        a, b, c = (random_stoch_observable(rng, 2, 2) for _ in range(3))
        inst = BellInstanceStoch(p_ab=p, p_cb=p, p_ac=p, a=a, b=b, c=c)
        wide = check_budgeted(inst, 0, Fraction(1, 5), variant="guaranteed")
        sharp = check_budgeted(inst, 0, Fraction(1, 5), variant="sharp")
        assert wide.rhs - sharp.rhs == Fraction(1, 5)

    def test_guaranteed_holds_within_budgets(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            m, l = int(rng.integers(1, 4)), int(rng.integers(2, 4))
            cap = Fraction(int(rng.integers(0, 4)), 10)
            eps = Fraction(int(rng.integers(0, 4)), 10)
            p = random_sigma_capped(rng, m, l, cap)
            q = perturb_within(p, rng, eps, sigma_cap=cap)
            r = perturb_within(p, rng, eps, sigma_cap=cap)
            a, b, c = (random_stoch_observable(rng, l, m) for _ in range(3))
            inst = BellInstanceStoch(p_ab=p, p_cb=q, p_ac=r, a=a, b=b, c=c)
            assert check_budgeted(inst, eps, cap).holds

    def test_budget_errors(self):
        p = Distribution.point_mass(1, (1, 2, 2), exact=True)  # fully off-diagonal
        a = StochObservable([[1], [1]])
        inst = BellInstanceStoch(p_ab=p, p_cb=p, p_ac=p, a=a, b=a, c=a)
        with pytest.raises(BudgetViolationError):
            check_budgeted(inst, 0, Fraction(1, 2))
        with pytest.raises(ValueError):
            check_budgeted(inst, 0, 1, variant="unknown")


class TestConditionalProductJoint:
    def test_deterministic_conditionals_recover_point_masses(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            m = int(rng.integers(1, 6))
            rho = random_distribution(rng, (m,), exact=True)
            a, b, c = (random_det_observable(rng, m) for _ in range(3))
            conds = [[(1 + int(o.values[k])) // 2 for k in range(m)] for o in (a, b, c)]
            joint = conditional_product_joint(rho, *conds)
            assert joint_pair_covariation(joint, 0, 1) == ensemble_covariation_det(rho, a, b)
            assert joint_pair_covariation(joint, 2, 1) == ensemble_covariation_det(rho, c, b)
            assert joint_pair_covariation(joint, 0, 2) == ensemble_covariation_det(rho, a, c)

    def test_independent_fair_coins(self):
        rho = Distribution.uniform((1,), exact=True)
        half = [Fraction(1, 2)]
        joint = conditional_product_joint(rho, half, half, half)
        assert all(w == Fraction(1, 8) for w in joint.weights)
        for i, j in ((0, 1), (2, 1), (0, 2)):
            assert joint_pair_covariation(joint, i, j) == 0

    def test_random_joints_are_valid_and_classical(self):
        rng = np.random.default_rng(9)
        for _ in range(250):
            m = int(rng.integers(1, 6))
            rho = random_distribution(rng, (m,), exact=True)
            conds = [[Fraction(int(rng.integers(0, 17)), 16) for _ in range(m)]
                     for _ in range(3)]
            joint = conditional_product_joint(rho, *conds)
            assert sum(joint.weights) == 1 and all(w >= 0 for w in joint.weights)
            # marginals reproduce the mixture of conditionals exactly
            for axis in range(3):
                expect = sum(w * conds[axis][k] for k, w in enumerate(rho.weights))
                assert joint_marginal_plus(joint, axis) == expect
            assert joint_classical_report(joint).holds

    def test_rejects_out_of_range_conditionals(self):
        rho = Distribution.uniform((2,), exact=True)
        with pytest.raises(ValueError):
            conditional_product_joint(rho, [Fraction(3, 2), Fraction(1, 2)],
                                      [0, 1], [0, 1])
