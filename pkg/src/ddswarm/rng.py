"""Counter-based random numbers keyed by (seed, step, phase, cell, draw).

Every random decision in the particle engine is a pure function of an
integer key tuple, so cells can be processed in any order (or split across
any number of workers) and the trajectory is bit-identical.  The generator
is a splitmix64-style avalanche hash folded over the key fields; that is
plenty for Monte-Carlo sampling and is trivially portable into the numba
kernels, which inline the same constants (see _kernels.py).
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)

# Distinct stream labels for the phases of one engine step.
PHASE_BALANCE = 0x1D1
PHASE_KICK = 0x2D2
PHASE_INIT = 0x3D3
PHASE_CALIBRATE = 0x4D4

_U64 = np.uint64
_INV53 = float(2.0**-53)


def mix64(z):
    """splitmix64 finalizer; accepts scalars or arrays of uint64."""
    z = np.asarray(z, dtype=np.uint64)
    old = np.seterr(over="ignore")
    try:
        z = z + GOLDEN
        z = (z ^ (z >> _U64(30))) * MIX1
        z = (z ^ (z >> _U64(27))) * MIX2
        return z ^ (z >> _U64(31))
    finally:
        np.seterr(**old)


def key_hash(*fields):
    """Fold integer fields (scalars or broadcastable arrays) into one u64."""
    h = np.uint64(0)
    old = np.seterr(over="ignore")
    try:
        for f in fields:
            f = np.asarray(f).astype(np.uint64, copy=False)
            h = mix64(h ^ (f + GOLDEN))
        return h
    finally:
        np.seterr(**old)


def uniform01(*fields):
    """Uniform float64 in [0, 1) from the key fields."""
    return (key_hash(*fields) >> _U64(11)).astype(np.float64) * _INV53


def stochastic_round(x, *fields):
    """Round to an adjacent integer with expectation exactly x.

    x may be a scalar or array; the key fields must broadcast against it.
    """
    x = np.asarray(x, dtype=np.float64)
    lo = np.floor(x)
    frac = x - lo
    u = uniform01(*fields)
    out = lo + (u < frac)
    return out.astype(np.int64)


def randint(n, *fields):
    """Uniform integer in [0, n) from the key fields (n scalar or array)."""
    u = key_hash(*fields)
    return (u % np.asarray(n).astype(np.uint64)).astype(np.int64)


class StreamCounter:
    """Sequential draw counter for one (seed, step, phase, cell) stream."""

    def __init__(self, seed: int, step: int, phase: int, cell: int = 0):
        self.base = (int(seed), int(step), int(phase), int(cell))
        self.n = 0

    def uniform(self) -> float:
        u = float(uniform01(*self.base, self.n))
        self.n += 1
        return u

    def randint(self, n: int) -> int:
        v = int(randint(n, *self.base, self.n))
        self.n += 1
        return v
