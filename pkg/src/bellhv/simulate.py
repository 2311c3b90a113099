"""Run generators and the end-to-end experiment pipeline.

Runs for the three observable pairs (A,B), (C,B), (A,C) are prepared
separately, each from its own derived random stream.  A drift model decides
how the hidden-value distribution behaves across the steps of one run:

* ``stationary``: one fixed distribution (the textbook i.i.d. case);
* ``random-walk``: the weight vector takes small Gaussian steps, is
  reflected at zero and renormalized, so different runs of the same length
  develop genuinely different empirical distributions;
* ``regime-switch``: the distribution jumps between a finite set of regimes
  at geometric times.

A device model decides how the two apparatus states fluctuate per
measurement: in lockstep (``consistent``), independently, or with an extra
coupling probability of agreement (``correlated``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    DetObservable,
    DeviceSpace,
    Distribution,
    HiddenSpace,
    Number,
    RecordSequence,
    Run,
    StochObservable,
    ensemble_covariation_det,
    ensemble_covariation_stoch,
    ensemble_probabilities,
    frequency_covariation,
    realize_records,
)
from .inequalities import (
    BellInstanceDet,
    BellInstanceStoch,
    InequalityReport,
    InternalInvariantError,
    bound_report,
    check_budgeted,
    check_deviation_corrected,
)
from .metrics import device_inconsistency, l1_deviation
from .seeding import derive_rng

PAIRS = ("AB", "CB", "AC")

DRIFT_KINDS = ("stationary", "random-walk", "regime-switch")
DEVICE_KINDS = ("consistent", "independent", "correlated")


@dataclass(frozen=True)
class DriftModel:
    kind: str
    base: Distribution
    step: float = 0.0
    regimes: tuple[Distribution, ...] = ()
    switch_prob: float = 0.0

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.base.is_triple:
            raise ValueError("drift acts on hidden-only distributions")
        if self.kind == "random-walk" and self.step <= 0.0:
            raise ValueError("random-walk drift needs a positive step")
        if self.kind == "regime-switch":
            if not self.regimes:
                raise ValueError("regime-switch drift needs at least one regime")
            if not (0.0 <= self.switch_prob <= 1.0):
                raise ValueError("switch probability must lie in [0, 1]")
            for r in self.regimes:
                if len(r) != len(self.base):
                    raise ValueError("regimes must match the base dimension")

    @property
    def m(self) -> int:
        return len(self.base)


@dataclass(frozen=True)
class DeviceModel:
    kind: str
    state_dist: Distribution
    coupling: float = 0.0

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise ValueError(f"unknown device kind {self.kind!r}")
        if self.state_dist.is_triple:
            raise ValueError("device states follow a plain distribution over L states")
        if not (0.0 <= self.coupling <= 1.0):
            raise ValueError("coupling must lie in [0, 1]")

    @property
    def l(self) -> int:
        return len(self.state_dist)


@dataclass(frozen=True)
class ExperimentPlan:
    """Three same-length runs (one per observable pair) from one master seed."""

    n: int
    drift: DriftModel
    device: DeviceModel | None = None
    seed: int = 0
    exact: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("runs need at least one measurement")

    @property
    def stochastic(self) -> bool:
        return self.device is not None


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (n, m) probability array."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (cum < u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _drift_probabilities(drift: DriftModel, n: int, rng: np.random.Generator) -> np.ndarray:
    base = drift.base.as_array()
    m = base.size
    if drift.kind == "stationary":
        return np.broadcast_to(base, (n, m))
    if drift.kind == "random-walk":
        steps = rng.normal(0.0, drift.step, size=(n, m))
        probs = np.empty((n, m))
        w = base.copy()
        for t in range(n):
            probs[t] = w
            w = np.abs(w + steps[t])
            total = w.sum()
            if total <= 0.0:  # all-zero after reflection is measure-zero but guarded
                w = np.full(m, 1.0 / m)
            else:
                w = w / total
        return probs
    # regime-switch: hold the current regime until a geometric switch event
    regimes = np.stack([r.as_array() for r in drift.regimes])
    switches = rng.random(n) < drift.switch_prob
    cand = rng.integers(0, regimes.shape[0], size=n)
    last = np.maximum.accumulate(np.where(switches, np.arange(n), -1))
    probs = np.where((last < 0)[:, None], base[None, :], regimes[cand[np.maximum(last, 0)]])
    return probs


def _sample_device(device: DeviceModel, n: int, rng: np.random.Generator):
    cum = np.cumsum(device.state_dist.as_array())
    l = cum.size

    def draw():
        return np.minimum(np.searchsorted(cum, rng.random(n), side="right"), l - 1)

    du = draw()
    if device.kind == "consistent":
        return du, du.copy()
    dv = draw()
    if device.kind == "correlated":
        agree = rng.random(n) < device.coupling
        dv = np.where(agree, du, dv)
    return du, dv


def drift_sampler(drift: DriftModel):
    """Callable (n, rng) -> hidden indices, e.g. for the convergence probe."""

    def draw(n: int, rng: np.random.Generator) -> np.ndarray:
        return _sample_rows(_drift_probabilities(drift, n, rng), rng)

    return draw


def generate_run(n: int, drift: DriftModel, device: DeviceModel | None = None,
                 rng: np.random.Generator | None = None, seed: int | None = None) -> Run:
    """Draw one run: per-step hidden values, plus device states if modeled.

    Exactly one of ``rng`` (a derived stream) or ``seed`` must be given; the
    result is a pure function of it.
    """
    if (rng is None) == (seed is None):
        raise ValueError("pass exactly one of rng or seed")
    if rng is None:
        rng = derive_rng(seed, "run")
    probs = _drift_probabilities(drift, n, rng)
    hidden = _sample_rows(probs, rng)
    space = HiddenSpace(drift.m)
    if device is None:
        return Run(hidden=hidden, space=space)
    du, dv = _sample_device(device, n, rng)
    return Run(hidden=hidden, space=space, device_u=du, device_v=dv,
               device_space=DeviceSpace(device.l))


def run_realizing(dist: Distribution, n: int) -> Run:
    """Deterministic run whose empirical distribution best matches ``dist``.

    Counts are largest-remainder rounded; when every n * w_i is integral the
    match is exact.  Useful for materializing searched or hand-built
    instances as record files.
    """
    w = dist.as_array().reshape(-1)
    raw = w * n
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    flat = np.repeat(np.arange(w.size), counts)
    if dist.is_triple:
        m, l, _ = dist.index_shape
        hidden = flat // (l * l)
        du = (flat // l) % l
        dv = flat % l
        return Run(hidden=hidden, space=HiddenSpace(m), device_u=du, device_v=dv,
                   device_space=DeviceSpace(l))
    return Run(hidden=flat, space=HiddenSpace(len(dist)))


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Everything one pipeline pass produces, keyed by pair name."""

    plan: ExperimentPlan
    runs: Mapping[str, Run]
    records: Mapping[str, RecordSequence]
    distributions: Mapping[str, Distribution]
    frequency: Mapping[str, Number]
    deltas: Mapping[tuple[str, str], Number]
    sigmas: Mapping[str, Number] | None
    epsilon_estimate: Number
    instance: BellInstanceDet | BellInstanceStoch
    classical: InequalityReport
    corrected: InequalityReport


def run_experiment(plan: ExperimentPlan, a, b, c) -> ExperimentResult:
    """Generate the three runs, realize records, and evaluate all checks.

    The classical report is evaluated on the empirical covariations and may
    legitimately come out violated when the three runs developed different
    distributions.  The corrected report uses budgets set to the observed
    deviations (and observed inconsistencies in stochastic mode) and must
    always hold; a violation there raises ``InternalInvariantError``.
    """
    stoch = plan.stochastic
    if stoch != isinstance(a, StochObservable):
        raise ValueError("observable kind must match the plan's device model")
    pair_obs = {"AB": (a, b), "CB": (c, b), "AC": (a, c)}
    runs, records, dists, freq = {}, {}, {}, {}
    for pair in PAIRS:
        rng = derive_rng(plan.seed, "pair", pair)
        run = generate_run(plan.n, plan.drift, plan.device, rng=rng)
        u, v = pair_obs[pair]
        rec = realize_records(run, u, v)
        runs[pair] = run
        records[pair] = rec
        dists[pair] = ensemble_probabilities(
            run, mode="triple" if stoch else "hidden", exact=plan.exact)
        freq[pair] = frequency_covariation(rec, exact=plan.exact)
    deltas = {
        ("AB", "CB"): l1_deviation(dists["AB"], dists["CB"]),
        ("AB", "AC"): l1_deviation(dists["AB"], dists["AC"]),
        ("CB", "AC"): l1_deviation(dists["CB"], dists["AC"]),
    }
    eps_est = max(deltas.values())
    eps_rel = max(deltas[("AB", "CB")], deltas[("AB", "AC")])
    if stoch:
        sigmas = {pair: device_inconsistency(dists[pair]) for pair in PAIRS}
        inst = BellInstanceStoch(p_ab=dists["AB"], p_cb=dists["CB"], p_ac=dists["AC"],
                                 a=a, b=b, c=c)
        cov = {p: ensemble_covariation_stoch(dists[p], *pair_obs[p]) for p in PAIRS}
        corrected = check_budgeted(inst, eps_rel, max(sigmas.values()))
    else:
        sigmas = None
        inst = BellInstanceDet(p_ab=dists["AB"], p_cb=dists["CB"], p_ac=dists["AC"],
                               a=a, b=b, c=c)
        cov = {p: ensemble_covariation_det(dists[p], *pair_obs[p]) for p in PAIRS}
        corrected = check_deviation_corrected(inst, eps_rel)
    classical = bound_report(cov["AB"], cov["CB"], cov["AC"], rule="classical")
    if not corrected.holds:
        raise InternalInvariantError(
            "corrected bound violated with budgets set to observed values")
    return ExperimentResult(plan=plan, runs=runs, records=records, distributions=dists,
                            frequency=freq, deltas=deltas, sigmas=sigmas,
                            epsilon_estimate=eps_est, instance=inst,
                            classical=classical, corrected=corrected)


# -- singlet-correlation reference --------------------------------------------


@dataclass(frozen=True)
class SingletReference:
    """Classical-bound bookkeeping for ideal singlet correlations E = -cos."""

    theta_a: float
    theta_b: float
    theta_c: float
    e_ab: float
    e_cb: float
    e_ac: float
    classical: InequalityReport
    required_epsilon: float


def singlet_reference(theta_a: float, theta_b: float, theta_c: float) -> SingletReference:
    """Evaluate the classical bound on ideal singlet correlations.

    ``required_epsilon`` is the smallest deviation budget whose corrected
    bound (correction 2 * epsilon) would accommodate these correlations;
    zero when the classical bound already holds.
    """
    e_ab = -math.cos(theta_a - theta_b)
    e_cb = -math.cos(theta_c - theta_b)
    e_ac = -math.cos(theta_a - theta_c)
    report = bound_report(e_ab, e_cb, e_ac, rule="classical")
    required = max(0.0, -float(report.slack) / 2.0)
    return SingletReference(theta_a=theta_a, theta_b=theta_b, theta_c=theta_c,
                            e_ab=e_ab, e_cb=e_cb, e_ac=e_ac,
                            classical=report, required_epsilon=required)


@dataclass(frozen=True)
class SingletGridResult:
    step_degrees: float
    max_required_epsilon: float
    at_angles: tuple[float, float, float]
    analytic_max: float


def singlet_epsilon_grid(step_degrees: float = 1.0) -> SingletGridResult:
    """Grid-search angle triples for the largest required deviation budget.

    Only the differences u = theta_a - theta_b and v = theta_c - theta_b
    matter, so the scan is a 2-d grid with theta_b = 0.  The analytic
    maximum is 1, attained when theta_a = theta_b and theta_c is opposite
    (|E_AB - E_CB| = 2 with E_AC = +1).
    """
    if step_degrees <= 0:
        raise ValueError("grid step must be positive")
    steps = int(round(360.0 / step_degrees))
    angles = np.arange(steps) * (2.0 * np.pi / steps)
    u = angles[:, None]
    v = angles[None, :]
    lhs = np.abs(-np.cos(u) + np.cos(v))
    rhs = 1.0 + np.cos(u - v)
    req = np.maximum(0.0, (lhs - rhs) / 2.0)
    flat_best = int(np.argmax(req))
    iu, iv = np.unravel_index(flat_best, req.shape)
    return SingletGridResult(
        step_degrees=step_degrees,
        max_required_epsilon=float(req[iu, iv]),
        at_angles=(float(angles[iu]), 0.0, float(angles[iv])),
        analytic_max=1.0)
