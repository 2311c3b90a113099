"""Three-correlation inequality checkers and the product-form joint oracle.

All checkers compare ``lhs = |<A,B> - <C,B>|`` against a right-hand side of
the form ``(1 + correction) - <A,C>`` and return an
:class:`InequalityReport`.  The rules differ in where the covariations come
from and in the correction term:

* ``classical``: one shared hidden-value distribution, correction 0.  Holds
  for every instance; a violated verdict here means a bug, not physics.
* ``deviation-corrected``: three separately prepared distributions whose
  pairwise l1 deviations are within a budget ``epsilon``; correction
  ``2 * epsilon``.
* ``consistent-devices``: stochastic instances with one shared triple
  distribution and zero device inconsistency; correction 0, covariations in
  diagonal (matching device states) form.
* ``budgeted-guaranteed`` / ``budgeted-sharp``: stochastic instances with
  deviation budget ``epsilon`` and inconsistency budget ``epsilon_prime``;
  correction ``2*epsilon + K*epsilon_prime``.  K=4 follows from the
  triangle-style derivation (off-diagonal mass is paid for twice, once per
  sum swap); K=3 is a sharper candidate constant that the search module
  probes for counterexamples rather than assuming.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .core import (
    DetObservable,
    DimensionMismatchError,
    Distribution,
    Number,
    StochObservable,
    as_fraction,
    ensemble_covariation_det,
    ensemble_covariation_stoch,
)
from .metrics import device_inconsistency, l1_deviation

HOLD_TOL = 1e-12

# correction multiplier on the inconsistency budget, per rule variant
VARIANT_FACTOR = {"guaranteed": 4, "sharp": 3}


class BudgetViolationError(ValueError):
    """The instance lies outside the stated deviation/inconsistency budgets."""


class PreconditionError(ValueError):
    """The instance violates a structural precondition of the rule."""


class InternalInvariantError(RuntimeError):
    """A guaranteed rule reported a violation: implementation bug."""


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of one inequality evaluation.

    ``slack`` is identically ``rhs - lhs``; the verdict is "holds" iff the
    slack is nonnegative (to zero tolerance for exact values, 1e-12 for
    floats).
    """

    rule: str
    lhs: Number
    rhs: Number
    epsilon: Number | None = None
    epsilon_prime: Number | None = None

    @property
    def exact(self) -> bool:
        return isinstance(self.lhs, Fraction) and isinstance(self.rhs, Fraction)

    @property
    def slack(self) -> Number:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        tol = 0 if self.exact else HOLD_TOL
        return self.slack >= -tol

    @property
    def verdict(self) -> str:
        return "holds" if self.holds else "violated"


def bound_report(cov_ab: Number, cov_cb: Number, cov_ac: Number, rule: str,
                 epsilon: Number | None = None,
                 epsilon_prime: Number | None = None) -> InequalityReport:
    """Assemble a report from three covariations and optional budgets."""
    lhs = abs(cov_ab - cov_cb)
    exact = isinstance(lhs, Fraction)
    one = Fraction(1) if exact else 1.0
    rhs = one - cov_ac
    if epsilon is not None:
        rhs = rhs + 2 * epsilon
    if epsilon_prime is not None:
        rhs = rhs + VARIANT_FACTOR[rule.rsplit("-", 1)[-1]] * epsilon_prime
    return InequalityReport(rule=rule, lhs=lhs, rhs=rhs,
                            epsilon=epsilon, epsilon_prime=epsilon_prime)


# -- instances ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BellInstanceDet:
    """Three separately prepared hidden-value distributions plus observables."""

    p_ab: Distribution
    p_cb: Distribution
    p_ac: Distribution
    a: DetObservable
    b: DetObservable
    c: DetObservable

    def __post_init__(self):
        m = self.a.m
        for p in (self.p_ab, self.p_cb, self.p_ac):
            if p.is_triple:
                raise DimensionMismatchError("deterministic instance needs hidden-only distributions")
            if len(p) != m:
                raise DimensionMismatchError("distribution length differs from observables")
            if p.exact != self.p_ab.exact:
                raise ValueError("all three distributions must share one numeric mode")
        if self.b.m != m or self.c.m != m:
            raise DimensionMismatchError("observables must share one hidden space")

    @property
    def exact(self) -> bool:
        return self.p_ab.exact

    @property
    def m(self) -> int:
        return self.a.m


@dataclass(frozen=True, eq=False)
class BellInstanceStoch:
    """Three separately prepared triple-indexed distributions plus observable tables."""

    p_ab: Distribution
    p_cb: Distribution
    p_ac: Distribution
    a: StochObservable
    b: StochObservable
    c: StochObservable

    def __post_init__(self):
        m, l = self.a.m, self.a.l
        for p in (self.p_ab, self.p_cb, self.p_ac):
            if p.index_shape != (m, l, l):
                raise DimensionMismatchError(
                    f"distribution shape {p.index_shape} differs from observables ({m}, {l}, {l})")
            if p.exact != self.p_ab.exact:
                raise ValueError("all three distributions must share one numeric mode")
        for o in (self.b, self.c):
            if o.m != m or o.l != l:
                raise DimensionMismatchError("observable tables must share one shape")

    @property
    def exact(self) -> bool:
        return self.p_ab.exact

    @property
    def m(self) -> int:
        return self.a.m

    @property
    def l(self) -> int:
        return self.a.l


# -- checkers ----------------------------------------------------------------


def check_classical(p: Distribution, a: DetObservable, b: DetObservable,
                    c: DetObservable) -> InequalityReport:
    """Classical inequality for one shared distribution; always holds."""
    return bound_report(
        ensemble_covariation_det(p, a, b),
        ensemble_covariation_det(p, c, b),
        ensemble_covariation_det(p, a, c),
        rule="classical")


def _check_budget(name: str, budget: Number, observed: Number, exact: bool) -> None:
    tol = 0 if exact else HOLD_TOL
    if budget < observed - tol:
        raise BudgetViolationError(
            f"{name} budget {budget} is below the observed value {observed}")


def check_deviation_corrected(inst: BellInstanceDet, epsilon: Number) -> InequalityReport:
    """Deviation-corrected inequality for three separately prepared ensembles.

    Requires ``epsilon`` to dominate both deviations that enter the
    derivation, d(p_ab, p_cb) and d(p_ab, p_ac); holds for every such
    instance.  At epsilon = 0 this reduces term by term to the classical
    rule.
    """
    epsilon = as_fraction(epsilon) if inst.exact else float(epsilon)
    if epsilon < 0:
        raise BudgetViolationError("epsilon must be nonnegative")
    _check_budget("epsilon", epsilon, l1_deviation(inst.p_ab, inst.p_cb), inst.exact)
    _check_budget("epsilon", epsilon, l1_deviation(inst.p_ab, inst.p_ac), inst.exact)
    return bound_report(
        ensemble_covariation_det(inst.p_ab, inst.a, inst.b),
        ensemble_covariation_det(inst.p_cb, inst.c, inst.b),
        ensemble_covariation_det(inst.p_ac, inst.a, inst.c),
        rule="deviation-corrected", epsilon=epsilon)


def check_consistent_devices(inst: BellInstanceStoch) -> InequalityReport:
    """Classical inequality for stochastic instances with shared distribution
    and perfectly consistent devices; always holds.

    Preconditions (verified, error when broken): the three triple
    distributions coincide, and each carries zero off-diagonal mass.
    """
    tol = 0 if inst.exact else HOLD_TOL
    if l1_deviation(inst.p_ab, inst.p_cb) > tol or l1_deviation(inst.p_ab, inst.p_ac) > tol:
        raise PreconditionError("rule requires one shared triple distribution")
    for name, p in (("AB", inst.p_ab), ("CB", inst.p_cb), ("AC", inst.p_ac)):
        if device_inconsistency(p) > tol:
            raise PreconditionError(
                f"rule requires zero device inconsistency, {name} has nonzero off-diagonal mass")
    return bound_report(
        ensemble_covariation_stoch(inst.p_ab, inst.a, inst.b, diagonal_only=True),
        ensemble_covariation_stoch(inst.p_cb, inst.c, inst.b, diagonal_only=True),
        ensemble_covariation_stoch(inst.p_ac, inst.a, inst.c, diagonal_only=True),
        rule="consistent-devices")


def check_budgeted(inst: BellInstanceStoch, epsilon: Number, epsilon_prime: Number,
                   variant: str = "guaranteed") -> InequalityReport:
    """Budgeted inequality for stochastic instances.

    ``epsilon`` must dominate d(p_ab, p_cb) and d(p_ab, p_ac);
    ``epsilon_prime`` must dominate the device inconsistency of all three
    distributions.  The "guaranteed" variant (correction 2e + 4e') holds for
    every budget-respecting instance; the "sharp" variant (2e + 3e') is a
    conjectured tightening, see ``search.counterexample_hunt``.
    """
    if variant not in VARIANT_FACTOR:
        raise ValueError(f"unknown variant {variant!r}")
    if inst.exact:
        epsilon, epsilon_prime = as_fraction(epsilon), as_fraction(epsilon_prime)
    else:
        epsilon, epsilon_prime = float(epsilon), float(epsilon_prime)
    if epsilon < 0 or epsilon_prime < 0:
        raise BudgetViolationError("budgets must be nonnegative")
    _check_budget("epsilon", epsilon, l1_deviation(inst.p_ab, inst.p_cb), inst.exact)
    _check_budget("epsilon", epsilon, l1_deviation(inst.p_ab, inst.p_ac), inst.exact)
    for name, p in (("AB", inst.p_ab), ("CB", inst.p_cb), ("AC", inst.p_ac)):
        _check_budget(f"epsilon_prime ({name})", epsilon_prime,
                      device_inconsistency(p), inst.exact)
    return bound_report(
        ensemble_covariation_stoch(inst.p_ab, inst.a, inst.b),
        ensemble_covariation_stoch(inst.p_cb, inst.c, inst.b),
        ensemble_covariation_stoch(inst.p_ac, inst.a, inst.c),
        rule=f"budgeted-{variant}", epsilon=epsilon, epsilon_prime=epsilon_prime)


# -- product-form joint oracle ------------------------------------------------


def conditional_product_joint(rho: Distribution, cond_a: Sequence, cond_b: Sequence,
                              cond_c: Sequence) -> Distribution:
    """Joint distribution of three +/-1 observables from per-hidden-value
    conditionals.

    ``cond_x[k]`` is the probability that observable X reads +1 given hidden
    value k; outcomes are conditionally independent given the hidden value.
    The result indexes outcomes as (i_a, i_b, i_c) with axis value 0 for +1
    and 1 for -1.  Because the three observables then live on one
    probability space, their pairwise covariations always satisfy the
    classical rule.
    """
    if rho.is_triple:
        raise DimensionMismatchError("hidden-value distribution must be hidden-only")
    m = len(rho)
    conds = []
    for name, cond in (("A", cond_a), ("B", cond_b), ("C", cond_c)):
        cond = list(cond)
        if len(cond) != m:
            raise DimensionMismatchError(f"conditional {name} must have length {m}")
        if rho.exact:
            cond = [as_fraction(x) for x in cond]
        else:
            cond = [float(x) for x in cond]
        if any(x < 0 or x > 1 for x in cond):
            raise ValueError(f"conditional {name} entries must lie in [0, 1]")
        conds.append(cond)
    one = Fraction(1) if rho.exact else 1.0
    weights = []
    for ia in (0, 1):
        for ib in (0, 1):
            for ic in (0, 1):
                total = Fraction(0) if rho.exact else 0.0
                for k in range(m):
                    w = rho.weights[k]
                    if not w:
                        continue
                    qa = conds[0][k] if ia == 0 else one - conds[0][k]
                    qb = conds[1][k] if ib == 0 else one - conds[1][k]
                    qc = conds[2][k] if ic == 0 else one - conds[2][k]
                    total += w * qa * qb * qc
                weights.append(total)
    if not rho.exact:
        # one float rounding pass can leave the sum a few ulp off 1
        s = sum(weights)
        weights = [w / s for w in weights]
    return Distribution(weights=tuple(weights), exact=rho.exact, index_shape=(2, 2, 2))


_SIGN = (1, -1)


def joint_pair_covariation(joint: Distribution, first: int, second: int) -> Number:
    """<X_first, X_second> of a (2, 2, 2) outcome distribution (axes 0, 1, 2)."""
    if joint.index_shape != (2, 2, 2):
        raise DimensionMismatchError("joint must be a (2, 2, 2) outcome distribution")
    total = Fraction(0) if joint.exact else 0.0
    i = 0
    for ia in (0, 1):
        for ib in (0, 1):
            for ic in (0, 1):
                idx = (ia, ib, ic)
                total += joint.weights[i] * (_SIGN[idx[first]] * _SIGN[idx[second]])
                i += 1
    return total


def joint_marginal_plus(joint: Distribution, axis: int) -> Number:
    """P(X_axis = +1) of a (2, 2, 2) outcome distribution."""
    if joint.index_shape != (2, 2, 2):
        raise DimensionMismatchError("joint must be a (2, 2, 2) outcome distribution")
    total = Fraction(0) if joint.exact else 0.0
    i = 0
    for ia in (0, 1):
        for ib in (0, 1):
            for ic in (0, 1):
                if (ia, ib, ic)[axis] == 0:
                    total += joint.weights[i]
                i += 1
    return total


def joint_classical_report(joint: Distribution) -> InequalityReport:
    """Classical rule evaluated on the three pairwise covariations of a joint."""
    return bound_report(
        joint_pair_covariation(joint, 0, 1),
        joint_pair_covariation(joint, 2, 1),
        joint_pair_covariation(joint, 0, 2),
        rule="classical")
