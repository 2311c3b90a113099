"""Seeded random instance generators used by searches and randomized suites.

Exact-mode samplers draw integer counts over a fixed denominator, so every
generated weight is a Fraction and downstream checks can run with zero
tolerance.  All functions are pure in the passed generator.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .core import DetObservable, Distribution, StochObservable

DEFAULT_DENOMINATOR = 720  # highly divisible, keeps perturbation fractions small


def random_distribution(rng: np.random.Generator, index_shape: tuple[int, ...],
                        exact: bool = False,
                        denominator: int = DEFAULT_DENOMINATOR) -> Distribution:
    """Random point of the simplex over the given index set.

    Float mode draws from the flat Dirichlet.  Exact mode draws a Dirichlet
    direction and multinomial counts over ``denominator``, giving diverse
    rational weights.
    """
    size = math.prod(index_shape)
    direction = rng.dirichlet(np.ones(size))
    if not exact:
        return Distribution.from_weights(direction, index_shape=index_shape)
    counts = rng.multinomial(denominator, direction)
    return Distribution.from_counts(counts, index_shape=index_shape)


def random_det_observable(rng: np.random.Generator, m: int) -> DetObservable:
    return DetObservable(rng.integers(0, 2, size=m) * 2 - 1)


def random_stoch_observable(rng: np.random.Generator, l: int, m: int) -> StochObservable:
    return StochObservable(rng.integers(0, 2, size=(l, m)) * 2 - 1)


def random_fraction(rng: np.random.Generator, granularity: int = 64) -> Fraction:
    """Uniform-ish rational in [0, 1] with a small denominator."""
    return Fraction(int(rng.integers(0, granularity + 1)), granularity)


def _offdiag_flags(index_shape: tuple[int, ...]) -> list[bool]:
    if len(index_shape) != 3:
        return [False] * int(np.prod(index_shape))
    m, l, _ = index_shape
    flags = []
    for _k in range(m):
        for s in range(l):
            for q in range(l):
                flags.append(s != q)
    return flags


def offdiag_mass(weights, index_shape) -> Fraction:
    flags = _offdiag_flags(index_shape)
    total = Fraction(0)
    for w, off in zip(weights, flags):
        if off:
            total += w
    return total


def random_sigma_capped(rng: np.random.Generator, m: int, l: int, sigma_cap: Fraction,
                        denominator: int = DEFAULT_DENOMINATOR) -> Distribution:
    """Exact random (m, l, l) distribution with off-diagonal mass <= sigma_cap."""
    shape = (m, l, l)
    base = random_distribution(rng, shape, exact=True, denominator=denominator)
    flags = _offdiag_flags(shape)
    w = list(base.weights)
    off = offdiag_mass(w, shape)
    if off > sigma_cap:
        # fold the excess off-diagonal mass onto the matching diagonal cells
        scale = sigma_cap / off if off else Fraction(0)
        for i, is_off in enumerate(flags):
            if is_off and w[i]:
                keep = w[i] * scale
                moved = w[i] - keep
                k = i // (l * l)
                s = (i // l) % l
                w[i] = keep
                w[(k * l + s) * l + s] += moved
    return Distribution(weights=tuple(w), exact=True, index_shape=shape)


def perturb_within(p: Distribution, rng: np.random.Generator, eps: Fraction,
                   sigma_cap: Fraction | None = None, moves: int = 4) -> Distribution:
    """Random exact perturbation of ``p`` with l1 distance at most ``eps``.

    With ``sigma_cap`` the off-diagonal mass of the result is also kept at
    or below the cap (requires ``p`` itself to satisfy it).
    """
    eps = Fraction(eps)
    w = list(p.weights)
    flags = _offdiag_flags(p.index_shape)
    headroom = None if sigma_cap is None else Fraction(sigma_cap) - offdiag_mass(w, p.index_shape)
    budget = eps / 2
    size = len(w)
    for _ in range(moves):
        if budget <= 0:
            break
        donor = int(rng.integers(0, size))
        receiver = int(rng.integers(0, size))
        if donor == receiver:
            continue
        t = min(budget * random_fraction(rng), w[donor])
        if headroom is not None:
            if flags[receiver] and not flags[donor]:
                t = min(t, headroom)
            if t <= 0:
                continue
            headroom += (t if flags[donor] else 0) - (t if flags[receiver] else 0)
        if t <= 0:
            continue
        w[donor] -= t
        w[receiver] += t
        budget -= t
    return Distribution(weights=tuple(w), exact=True, index_shape=p.index_shape)
