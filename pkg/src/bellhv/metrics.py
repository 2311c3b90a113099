"""Deviation measures between ensembles.

* ``l1_deviation``: the l1 distance between two empirical distributions of
  the same property; a pseudometric on runs, range [0, 2].
* ``peak_deviation``: largest pairwise deviation inside a family of
  same-state ensembles.  The true quantity of interest is a supremum over
  every ensemble the preparation can produce; a finite family only ever
  gives an underestimate, and callers choose how many members to sample.
* ``device_inconsistency``: probability mass on mismatched device-state
  pairs of a triple-indexed distribution, range [0, 1].
* ``convergence_probe``: Monte Carlo table of how the deviation between two
  independent same-size runs behaves as the run length grows.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import DimensionMismatchError, Distribution, Number, _common_denominator
from .seeding import derive_rng


class DeviceMismatchError(ValueError):
    """Triple-indexed distribution does not have one shared device space."""


def l1_deviation(p: Distribution, q: Distribution) -> Number:
    """sum_i |p_i - q_i| over a shared index set.

    Exact when both operands are exact.  Zero iff the vectors are equal;
    maximal value 2 iff the supports are disjoint.
    """
    if len(p) != len(q) or p.index_shape != q.index_shape:
        raise DimensionMismatchError(
            f"distributions index different sets: {p.index_shape} vs {q.index_shape}")
    if p.exact and q.exact:
        dp, nums_p = _common_denominator(p.weights)
        dq, nums_q = _common_denominator(q.weights)
        den = dp * dq // math.gcd(dp, dq)
        fp, fq = den // dp, den // dq
        total = sum(abs(a * fp - b * fq) for a, b in zip(nums_p, nums_q))
        return Fraction(total, den)
    return float(np.abs(p.as_array() - q.as_array()).sum())


@dataclass(frozen=True)
class DeviationReport:
    """Deviation between one pair of ensembles, tagged by their run ids."""

    delta: Number
    pair: tuple[str, str]

    def __post_init__(self):
        if self.delta < 0 or self.delta > 2:
            raise ValueError("deviation must lie in [0, 2]")


@dataclass(frozen=True)
class EnsembleFamily:
    """Finite sample of ensembles prepared for one and the same state."""

    members: tuple[Distribution, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("family must have at least one member")
        if len(self.labels) != len(self.members):
            raise ValueError("one label per member required")
        shape = self.members[0].index_shape
        for m in self.members:
            if m.index_shape != shape:
                raise DimensionMismatchError("family members index different sets")

    @classmethod
    def of(cls, members: Sequence[Distribution], labels: Sequence[str] | None = None):
        labels = tuple(labels) if labels is not None else tuple(
            f"run{i}" for i in range(len(members)))
        return cls(members=tuple(members), labels=labels)


def pairwise_deviations(family: EnsembleFamily) -> tuple[DeviationReport, ...]:
    out = []
    for i in range(len(family.members)):
        for j in range(i + 1, len(family.members)):
            out.append(DeviationReport(
                delta=l1_deviation(family.members[i], family.members[j]),
                pair=(family.labels[i], family.labels[j])))
    return tuple(out)


def peak_deviation(family: EnsembleFamily) -> Number:
    """Largest pairwise deviation observed in the family.

    This is a running maximum over finitely many ensembles, hence a lower
    bound for the worst case over all preparable ensembles; it grows
    monotonically as members are added and is 0 for a singleton family.
    """
    reports = pairwise_deviations(family)
    if not reports:
        return Fraction(0) if family.members[0].exact else 0.0
    return max(r.delta for r in reports)


def device_inconsistency(p: Distribution) -> Number:
    """Mass of a triple-indexed distribution on pairs with mismatched device states.

    Zero exactly when the two devices always fluctuate in lockstep, i.e. all
    weight sits on matching-state (s == q) triples.
    """
    if not p.is_triple:
        raise DeviceMismatchError("device inconsistency needs an (M, L, L) distribution")
    m, l1, l2 = p.index_shape
    if l1 != l2:
        raise DeviceMismatchError("the two devices must share one state space")
    if p.exact:
        den, num = _common_denominator(p.weights)
        total = 0
        i = 0
        for _k in range(m):
            for s in range(l1):
                for q in range(l2):
                    if s != q:
                        total += num[i]
                    i += 1
        return Fraction(total, den)
    arr = p.as_array()
    off = arr.sum() - np.trace(arr, axis1=1, axis2=2).sum()
    return float(max(off, 0.0))


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    median_delta: float


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    trials: int
    seed: int

    def medians(self) -> list[float]:
        return [r.median_delta for r in self.rows]

    def decay_factor(self) -> float:
        """Ratio first-median / last-median; large when deviations shrink with N."""
        first, last = self.rows[0].median_delta, self.rows[-1].median_delta
        return float("inf") if last == 0.0 else first / last

    def is_decaying(self, factor: float = 2.0) -> bool:
        """Statistical indicator that deviations vanish for long runs."""
        meds = self.medians()
        return all(a > b for a, b in zip(meds, meds[1:])) and self.decay_factor() >= factor


def _probe_trial(draw: Callable[[int, np.random.Generator], np.ndarray],
                 m: int, n: int, seed: int, trial: int) -> float:
    counts = []
    for side in (0, 1):
        rng = derive_rng(seed, "converge", n, trial, side)
        idx = np.asarray(draw(n, rng))
        counts.append(np.bincount(idx, minlength=m))
    p = Distribution.from_weights(counts[0] / n)
    q = Distribution.from_weights(counts[1] / n)
    return float(l1_deviation(p, q))


def convergence_probe(draw: Callable[[int, np.random.Generator], np.ndarray],
                      m: int, sizes: Sequence[int], trials: int, seed: int,
                      workers: int = 1) -> ConvergenceTable:
    """Median deviation between two independent same-size runs, per size.

    Parameters
    ----------
    draw : callable (n, rng) -> length-n array of hidden indices in [0, m).
        Stationary samplers make the medians shrink roughly like 1/sqrt(n);
        drifting samplers plateau, which is the signature the probe exists
        to expose.
    sizes : ascending run lengths.
    trials : independent trial pairs per size (median taken over these).
    workers : thread count; results are identical for any value because all
        streams derive from (seed, size, trial, side).
    """
    sizes = [int(n) for n in sizes]
    if not sizes or any(n < 1 for n in sizes) or sorted(sizes) != sizes:
        raise ValueError("sizes must be ascending positive run lengths")
    if trials < 1:
        raise ValueError("need at least one trial")
    rows = []
    for n in sizes:
        args = [(draw, m, n, seed, t) for t in range(trials)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                deltas = list(pool.map(lambda a: _probe_trial(*a), args))
        else:
            deltas = [_probe_trial(*a) for a in args]
        rows.append(ConvergenceRow(n=n, median_delta=float(np.median(deltas))))
    return ConvergenceTable(rows=tuple(rows), trials=trials, seed=seed)
