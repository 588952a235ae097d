"""Test matrices and right-hand sides.

All randomness goes through numpy's PCG64 bit generator seeded with a
:class:`numpy.random.SeedSequence`, so every generator is a pure function of
its arguments and reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .linalg import householder_qr


def rng_for(seed: int | Sequence[int]) -> np.random.Generator:
    """PCG64 generator for an integer seed or a tuple of integers (a spawn key)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def hilbert(n: int) -> np.ndarray:
    """n x n Hilbert matrix, entry ``1/(j+k-1)`` with 1-based indices."""
    if n < 1:
        raise ValueError(f"hilbert: n must be positive, got {n}")
    idx = np.arange(1, n + 1, dtype=np.float64)
    return 1.0 / (idx[:, None] + idx[None, :] - 1.0)


@dataclass(frozen=True)
class RandomMatrixSpec:
    n: int
    cond_target: float
    seed: int = 0
    definiteness: Literal["spd", "indefinite"] = "spd"
    spacing: Literal["log", "linear"] = "log"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"random matrix needs n >= 2, got {self.n}")
        if not self.cond_target >= 1.0:
            raise ValueError(f"cond_target must be >= 1, got {self.cond_target}")
        if self.definiteness not in ("spd", "indefinite"):
            raise ValueError(f"unknown definiteness {self.definiteness!r}")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")


def spectrum(spec: RandomMatrixSpec) -> np.ndarray:
    """Eigenvalue magnitudes from 1 to ``cond_target`` with exact endpoints."""
    n, c = spec.n, float(spec.cond_target)
    if spec.spacing == "log":
        lam = np.logspace(0.0, np.log10(c), n)
    else:
        lam = np.linspace(1.0, c, n)
    lam[0], lam[-1] = 1.0, c
    return lam


def random_symmetric_cond(spec: RandomMatrixSpec) -> np.ndarray:
    """Symmetric ``Q diag(lam) Q^T`` with ``cond2 = spec.cond_target``.

    ``Q`` is the orthogonal factor of a seeded Gaussian matrix.  In indefinite
    mode a seeded random subset of eigenvalues (never empty, never all) has its
    sign flipped; magnitudes are unchanged so the condition number is too.
    """
    rng = rng_for([spec.seed, spec.n])
    g = rng.standard_normal((spec.n, spec.n))
    q, _ = householder_qr(g)
    lam = spectrum(spec)
    if spec.definiteness == "indefinite":
        flip = rng.random(spec.n) < 0.5
        if not flip.any() or flip.all():
            flip[: spec.n // 2] = True
            flip[spec.n // 2:] = False
        lam = np.where(flip, -lam, lam)
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def random_rhs(n: int, seed: int | Sequence[int]) -> np.ndarray:
    """Standard normal vector of length ``n``."""
    if n < 1:
        raise ValueError(f"random_rhs: n must be positive, got {n}")
    return rng_for(seed).standard_normal(n)
