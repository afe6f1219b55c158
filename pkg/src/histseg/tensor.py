"""Shape-checked array arithmetic and the seeded generator used for training.

Arrays are plain ``numpy.ndarray`` values (float64 while training). The
helpers here only add the strict shape checks the network code relies on:
no broadcasting, and mismatches are reported with both shapes.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} contains NaN or Inf")
    return x


def matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    w, x = np.asarray(w, dtype=np.float64), np.asarray(x, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: shape mismatch {w.shape} vs {x.shape}")
    return w @ x


def add(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _check_same(a, b, "add")
    return a + b


def hadamard(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    _check_same(a, b, "hadamard")
    return a * b


def scale(a, s: float) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) * float(s)


def reshape(a, shape) -> np.ndarray:
    a = np.asarray(a)
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    return a.reshape(shape)


class Rng:
    """Seeded, splittable generator (PCG64 under ``numpy.random``).

    PCG64 advances a 128-bit LCG state ``s <- s * a + c (mod 2**128)`` and
    outputs the XSL-RR permutation of each state. ``split`` derives
    statistically independent children through ``SeedSequence.spawn``, so
    a run's random streams depend only on the master seed.
    """

    def __init__(self, seed=0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self, n: int = 1) -> list["Rng"]:
        return [Rng(s) for s in self._seq.spawn(n)]

    def uniform(self, shape, lo: float, hi: float) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"uniform needs lo < hi, got [{lo}, {hi})")
        return self._gen.uniform(lo, hi, size=shape)

    def integers(self, hi: int, size) -> np.ndarray:
        return self._gen.integers(0, hi, size=size)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(shape)


def rng_uniform(shape, lo: float, hi: float, seed: int) -> np.ndarray:
    return Rng(seed).uniform(shape, lo, hi)
