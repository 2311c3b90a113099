"""Domain types and elementary statistics for finite hidden-variable ensembles.

A model has a finite hidden space of ``M`` values.  Each measured system in a
run carries one hidden value; in the stochastic (contextual) variant the two
measurement devices additionally carry one of ``L`` apparatus states per
measurement.  Everything downstream (deviation metrics, inequality checkers,
searches) is built from three primitives defined here:

* empirical distributions of a run (``ensemble_probabilities``),
* mean products of recorded outcome pairs (``frequency_covariation``),
* the same quantity computed from a distribution and value tables
  (``ensemble_covariation_det`` / ``ensemble_covariation_stoch``).

Two numeric backends are supported.  Exact mode stores ``fractions.Fraction``
weights and compares with zero tolerance; float mode uses numpy f64 and a
1e-12 tolerance.  Indices are 0-based throughout the library; file formats
use 1-based indices and the IO layer converts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

Number = Union[Fraction, float]

# Caps keep exact-mode tables tractable; float mode only guards memory.
MAX_EXACT_DIM = 64
MAX_TABLE_CELLS = 1 << 20
SIMPLEX_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Operands describe different hidden or device dimensions."""


class ModeMismatchError(ValueError):
    """Deterministic and stochastic objects were mixed."""


def as_fraction(x) -> Fraction:
    """Coerce an exact-friendly value (int, Fraction, 'p/q' string) to Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"not an exact value: {x!r} (use int, Fraction or 'p/q' string)")


@dataclass(frozen=True)
class HiddenSpace:
    """The finite set of hidden values, indexed 0..size_m-1."""

    size_m: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size_m < 1:
            raise ValueError("hidden space needs at least one value")
        if self.labels is not None:
            if len(self.labels) != self.size_m:
                raise ValueError("labels length must equal size_m")
            if len(set(self.labels)) != self.size_m:
                raise ValueError("labels must be unique")


@dataclass(frozen=True)
class DeviceSpace:
    """The finite set of apparatus states a measurement device can be in.

    One shared instance models the assumption that all devices in an
    experiment draw their states from the same set.
    """

    size_l: int

    def __post_init__(self):
        if self.size_l < 1:
            raise ValueError("device space needs at least one state")


def _pm1_array(values, shape_hint: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int8)
    if arr.size == 0:
        raise ValueError(f"{shape_hint} must be non-empty")
    if not np.all(np.abs(arr) == 1):
        raise ValueError(f"{shape_hint} entries must be +1 or -1")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DetObservable:
    """A +/-1 valued assignment on the hidden space: values[k] is the outcome
    when the hidden value is k."""

    values: np.ndarray

    def __init__(self, values):
        arr = _pm1_array(values, "observable")
        if arr.ndim != 1:
            raise ValueError("deterministic observable must be a 1-d table")
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class StochObservable:
    """A +/-1 valued assignment on (device state, hidden value) pairs.

    ``values[s, k]`` is the outcome produced when the apparatus is in state
    ``s`` and the system carries hidden value ``k``.
    """

    values: np.ndarray

    def __init__(self, values):
        arr = _pm1_array(values, "observable table")
        if arr.ndim != 2:
            raise ValueError("stochastic observable must be an L x M table")
        object.__setattr__(self, "values", arr)

    @property
    def l(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


def _index_array(values, n_expected: int | None, bound: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{what} must be a non-empty 1-d index sequence")
    if n_expected is not None and arr.size != n_expected:
        raise ValueError(f"{what} length {arr.size} != run length {n_expected}")
    if arr.min() < 0 or arr.max() >= bound:
        raise ValueError(f"{what} indices must lie in [0, {bound})")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Run:
    """One ordered run of N measured systems.

    ``hidden[i]`` is the hidden-value index of the i-th system.  In
    stochastic mode ``device_u[i]`` / ``device_v[i]`` are the apparatus
    states of the two devices at the i-th measurement; both are present or
    both absent.
    """

    hidden: np.ndarray
    space: HiddenSpace
    device_u: np.ndarray | None = None
    device_v: np.ndarray | None = None
    device_space: DeviceSpace | None = None

    def __init__(self, hidden, space, device_u=None, device_v=None, device_space=None):
        hid = _index_array(hidden, None, space.size_m, "hidden sequence")
        if (device_u is None) != (device_v is None):
            raise ModeMismatchError("device sequences must be given for both devices or neither")
        if device_u is not None:
            if device_space is None:
                raise ModeMismatchError("device sequences require a device space")
            device_u = _index_array(device_u, hid.size, device_space.size_l, "device-U sequence")
            device_v = _index_array(device_v, hid.size, device_space.size_l, "device-V sequence")
        elif device_space is not None:
            raise ModeMismatchError("device space given without device sequences")
        object.__setattr__(self, "hidden", hid)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "device_u", device_u)
        object.__setattr__(self, "device_v", device_v)
        object.__setattr__(self, "device_space", device_space)

    @property
    def n(self) -> int:
        return self.hidden.size

    @property
    def is_stochastic(self) -> bool:
        return self.device_u is not None


@dataclass(frozen=True, eq=False)
class RecordSequence:
    """Recorded outcome pairs (u_i, v_i) of one run, entries +/-1."""

    u: np.ndarray
    v: np.ndarray

    def __init__(self, u, v):
        u = _pm1_array(u, "u outcomes")
        v = _pm1_array(v, "v outcomes")
        if u.ndim != 1 or v.ndim != 1 or u.size != v.size:
            raise ValueError("u and v must be 1-d sequences of equal length")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.size

    def outcome_distribution(self, exact: bool = False) -> "Distribution":
        """Empirical distribution over the four outcome pairs.

        Index layout is (u, v) with axis value 0 for +1 and 1 for -1.
        """
        idx = (self.u < 0).astype(np.int64) * 2 + (self.v < 0)
        counts = np.bincount(idx, minlength=4)
        return Distribution.from_counts(counts, index_shape=(2, 2)) if exact else \
            Distribution.from_weights(counts / self.n, index_shape=(2, 2))


def _common_denominator(weights) -> tuple[int, list[int]]:
    """Rewrite Fractions as integer numerators over one shared denominator."""
    den = 1
    for w in weights:
        den = den * w.denominator // math.gcd(den, w.denominator)
    return den, [w.numerator * (den // w.denominator) for w in weights]


@dataclass(frozen=True)
class Distribution:
    """A probability vector over a finite index set.

    ``weights`` is a flat tuple; ``index_shape`` records the logical shape,
    ``(M,)`` for hidden-only distributions or ``(M, L, L)`` for joint
    (hidden, device-U state, device-V state) distributions.  Exact
    distributions hold Fractions and must sum to 1 exactly; float
    distributions must sum to 1 within 1e-12.
    """

    weights: tuple
    exact: bool
    index_shape: tuple[int, ...]

    def __post_init__(self):
        size = 1
        for d in self.index_shape:
            size *= d
        if size != len(self.weights) or size == 0:
            raise ValueError("index_shape does not match weight count")
        if size > MAX_TABLE_CELLS:
            raise ValueError(f"table exceeds cell cap ({size} > {MAX_TABLE_CELLS})")
        if self.exact:
            if any(d > MAX_EXACT_DIM for d in self.index_shape):
                raise ValueError(f"exact mode caps each dimension at {MAX_EXACT_DIM}")
            for w in self.weights:
                if not isinstance(w, Fraction):
                    raise TypeError("exact distribution requires Fraction weights")
                if w < 0:
                    raise ValueError("weights must be nonnegative")
            den, num = _common_denominator(self.weights)
            if sum(num) != den:
                raise ValueError(f"exact weights must sum to 1, got {Fraction(sum(num), den)}")
            object.__setattr__(self, "_array", None)
        else:
            arr = np.asarray(self.weights, dtype=np.float64).reshape(self.index_shape)
            if arr.min() < 0.0:
                raise ValueError("weights must be nonnegative")
            if abs(float(arr.sum()) - 1.0) > SIMPLEX_TOL:
                raise ValueError(f"weights must sum to 1 within {SIMPLEX_TOL}")
            arr.flags.writeable = False
            object.__setattr__(self, "_array", arr)

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_weights(cls, weights, exact: bool = False,
                     index_shape: tuple[int, ...] | None = None) -> "Distribution":
        arr = np.asarray(weights, dtype=object if exact else np.float64)
        shape = index_shape if index_shape is not None else arr.shape
        flat = arr.reshape(-1)
        if exact:
            w = tuple(as_fraction(x) for x in flat)
        else:
            w = tuple(float(x) for x in flat)
        return cls(weights=w, exact=exact, index_shape=tuple(shape))

    @classmethod
    def from_counts(cls, counts, index_shape: tuple[int, ...] | None = None) -> "Distribution":
        """Exact distribution n_i / N from nonnegative integer counts."""
        arr = np.asarray(counts)
        shape = index_shape if index_shape is not None else arr.shape
        flat = [int(c) for c in arr.reshape(-1)]
        total = sum(flat)
        if total <= 0 or any(c < 0 for c in flat):
            raise ValueError("counts must be nonnegative with positive total")
        return cls(weights=tuple(Fraction(c, total) for c in flat),
                   exact=True, index_shape=tuple(shape))

    @classmethod
    def uniform(cls, index_shape: tuple[int, ...], exact: bool = False) -> "Distribution":
        size = 1
        for d in index_shape:
            size *= d
        if exact:
            w = tuple(Fraction(1, size) for _ in range(size))
        else:
            w = tuple(1.0 / size for _ in range(size))
        return cls(weights=w, exact=exact, index_shape=tuple(index_shape))

    @classmethod
    def point_mass(cls, at: int, index_shape: tuple[int, ...], exact: bool = False) -> "Distribution":
        size = 1
        for d in index_shape:
            size *= d
        one, zero = (Fraction(1), Fraction(0)) if exact else (1.0, 0.0)
        w = tuple(one if i == at else zero for i in range(size))
        return cls(weights=w, exact=exact, index_shape=tuple(index_shape))

    # -- views -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        """Read-only float view in the logical shape."""
        if self._array is None:
            arr = np.asarray([float(w) for w in self.weights],
                             dtype=np.float64).reshape(self.index_shape)
            arr.flags.writeable = False
            object.__setattr__(self, "_array", arr)
        return self._array

    @property
    def is_triple(self) -> bool:
        return len(self.index_shape) == 3

    def hidden_marginal(self) -> "Distribution":
        """Marginal over the hidden index of a triple-indexed distribution."""
        if not self.is_triple:
            raise ModeMismatchError("hidden_marginal needs a triple-indexed distribution")
        m, l1, l2 = self.index_shape
        if self.exact:
            out = [Fraction(0)] * m
            for i, w in enumerate(self.weights):
                out[i // (l1 * l2)] += w
            return Distribution(weights=tuple(out), exact=True, index_shape=(m,))
        arr = self.as_array().sum(axis=(1, 2))
        return Distribution.from_weights(arr, index_shape=(m,))


# -- elementary statistics --------------------------------------------------


def ensemble_probabilities(run: Run, mode: str = "hidden", exact: bool = False) -> Distribution:
    """Empirical distribution of a run.

    Parameters
    ----------
    run : Run
    mode : "hidden" counts hidden values only and returns a length-M vector;
        "triple" counts (hidden, device-U state, device-V state) triples and
        returns an (M, L, L) table.  Triple mode requires device sequences.
    exact : return Fractions n_i / N instead of floats.
    """
    m = run.space.size_m
    if mode == "hidden":
        counts = np.bincount(run.hidden, minlength=m)
        shape = (m,)
    elif mode == "triple":
        if not run.is_stochastic:
            raise ModeMismatchError("triple mode requires a run with device sequences")
        l = run.device_space.size_l
        flat = (run.hidden * l + run.device_u) * l + run.device_v
        counts = np.bincount(flat, minlength=m * l * l)
        shape = (m, l, l)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if exact:
        return Distribution.from_counts(counts, index_shape=shape)
    return Distribution.from_weights(counts / run.n, index_shape=shape)


def frequency_covariation(records: RecordSequence, exact: bool = False) -> Number:
    """Mean product (1/N) sum u_i v_i of a recorded outcome sequence."""
    if records.n == 0:
        raise ValueError("empty record sequence")
    s = int(np.dot(records.u.astype(np.int64), records.v.astype(np.int64)))
    return Fraction(s, records.n) if exact else s / records.n


def ensemble_covariation_det(p: Distribution, u: DetObservable, v: DetObservable) -> Number:
    """sum_k p_k u_k v_k for a hidden-only distribution."""
    if p.is_triple:
        raise ModeMismatchError("deterministic covariation needs a hidden-only distribution")
    if len(p) != u.m or u.m != v.m:
        raise DimensionMismatchError(
            f"dimension mismatch: p has {len(p)}, u has {u.m}, v has {v.m}")
    if p.exact:
        den, num = _common_denominator(p.weights)
        total = 0
        for n_k, uk, vk in zip(num, u.values, v.values):
            if n_k:
                total += n_k if uk == vk else -n_k
        return Fraction(total, den)
    prod = (u.values.astype(np.int64) * v.values.astype(np.int64)).astype(np.float64)
    return float(np.dot(p.as_array(), prod))


def _stoch_term_table(p: Distribution, u: StochObservable, v: StochObservable,
                      diagonal_only: bool) -> np.ndarray:
    m, l1, l2 = p.index_shape
    table = p.as_array()
    if diagonal_only:
        table = table * np.eye(l1)[None, :, :]
    # term[k, s, q] = p_ksq * u[s, k] * v[q, k]
    return table * u.values.T[:, :, None] * v.values.T[:, None, :]


def ensemble_covariation_stoch(p: Distribution, u: StochObservable, v: StochObservable,
                               diagonal_only: bool = False) -> Number:
    """sum_ksq p_ksq u_sk v_qk for a triple-indexed distribution.

    With ``diagonal_only`` the sum is restricted to matching device states
    (s == q), which is the full covariation whenever the off-diagonal mass
    is zero.
    """
    if not p.is_triple:
        raise ModeMismatchError("stochastic covariation needs a triple-indexed distribution")
    m, l1, l2 = p.index_shape
    if l1 != l2:
        raise DimensionMismatchError("device dimensions differ within the distribution")
    if u.m != m or v.m != m or u.l != l1 or v.l != l1:
        raise DimensionMismatchError(
            f"observable tables must be {l1} x {m}, got {u.l} x {u.m} and {v.l} x {v.m}")
    if p.exact:
        den, num = _common_denominator(p.weights)
        uvals, vvals = u.values, v.values
        total = 0
        i = 0
        for k in range(m):
            for s in range(l1):
                uk = uvals[s, k]
                for q in range(l1):
                    n_i = num[i]
                    i += 1
                    if n_i and (not diagonal_only or s == q):
                        total += n_i if uk == vvals[q, k] else -n_i
        return Fraction(total, den)
    return float(_stoch_term_table(p, u, v, diagonal_only).sum())


def realize_records(run: Run, u, v) -> RecordSequence:
    """Materialize the outcome pairs a run would produce under observables u, v."""
    det = isinstance(u, DetObservable)
    if det != isinstance(v, DetObservable):
        raise ModeMismatchError("observables must be of the same kind")
    if det:
        if run.is_stochastic:
            raise ModeMismatchError("stochastic run needs stochastic observables")
        if u.m != run.space.size_m or v.m != run.space.size_m:
            raise DimensionMismatchError("observable size differs from hidden space")
        return RecordSequence(u.values[run.hidden], v.values[run.hidden])
    if not run.is_stochastic:
        raise ModeMismatchError("deterministic run needs deterministic observables")
    l = run.device_space.size_l
    if u.m != run.space.size_m or v.m != run.space.size_m or u.l != l or v.l != l:
        raise DimensionMismatchError("observable table shape differs from run spaces")
    return RecordSequence(u.values[run.device_u, run.hidden],
                          v.values[run.device_v, run.hidden])
