"""Deterministic stream derivation from one master seed.

Every randomized component takes a master seed plus a label path (run id,
pair name, trial index, ...) and derives an independent counter-based
stream.  Two consequences the rest of the library relies on:

* identical (seed, path) always yields an identical stream, so any
  pipeline is reproducible bit-for-bit;
* streams for different paths are independent, so trials can be computed
  in any order or on any number of workers without changing results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed_words(master_seed: int, *path) -> tuple[int, ...]:
    """Hash (master seed, label path) into four 32-bit words."""
    payload = "/".join([str(int(master_seed))] + [str(p) for p in path]).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """Counter-based generator for the stream named by (master seed, path)."""
    words = derive_seed_words(master_seed, *path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
