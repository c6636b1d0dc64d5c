"""Entropic mirror-map calculus on the probability simplex.

Everything here works on plain 1-D float64 arrays. Iterates produced by the
solvers are kept as log-weights and only exponentiated when a probability
view is needed, so long runs of multiplicative updates cannot underflow.

Total variation follows the half-l1 convention, ``tv_norm(d) = 0.5*|d|_1``,
under which Pinsker reads ``KL >= 2 * TV**2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SIMPLEX_ATOL = 1e-12


def _vector(v, name="v") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    return arr


def as_simplex(z, name="z", atol=SIMPLEX_ATOL) -> np.ndarray:
    """Validate ``z`` as a probability vector and return it as an array."""
    arr = _vector(z, name)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(arr.sum() - 1.0) > atol:
        raise ValueError(f"{name} sums to {arr.sum()!r}, not 1")
    return arr


def uniform(d: int) -> np.ndarray:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return np.full(d, 1.0 / d)


def log_sum_exp(v) -> float:
    """``log(sum(exp(v)))`` with a max shift; the entropy's Fenchel dual."""
    arr = _vector(v)
    if not np.all(np.isfinite(arr)):
        raise ValueError("log_sum_exp needs finite entries")
    vmax = arr.max()
    return float(vmax + np.log(np.exp(arr - vmax).sum()))


def _lse(arr: np.ndarray) -> float:
    # unchecked variant for inner loops
    vmax = arr.max()
    return vmax + np.log(np.exp(arr - vmax).sum())


def softmax(v) -> np.ndarray:
    arr = _vector(v)
    e = np.exp(arr - arr.max())
    return e / e.sum()


def normalize_log(logw: np.ndarray) -> np.ndarray:
    """Shift log-weights so that they exponentiate to a probability vector."""
    return logw - _lse(logw)


def md_update_log(logz: np.ndarray, b: np.ndarray, eta: float) -> np.ndarray:
    """Entropic MD step in log space. ``logz`` need not be normalized."""
    return normalize_log(logz - eta * b)


def md_update(z, b, eta: float) -> np.ndarray:
    """One entropic mirror-descent step ``z_i exp(-eta b_i) / normalizer``.

    ``z`` must lie in the relative interior of the simplex.
    """
    z = as_simplex(z)
    b = _vector(b, "b")
    if b.shape != z.shape:
        raise ValueError(f"dimension mismatch: z has {z.size}, b has {b.size}")
    if eta < 0 or not np.isfinite(eta):
        raise ValueError("eta must be a finite nonnegative number")
    if np.any(z == 0):
        raise DomainError("md_update requires strictly positive weights")
    return np.exp(md_update_log(np.log(z), b, eta))


def entropy(z) -> float:
    """Negative Shannon entropy ``sum z log z`` with ``0 log 0 = 0``."""
    z = as_simplex(z)
    nz = z[z > 0]
    return float(np.sum(nz * np.log(nz)))


def kl_divergence(z, z_ref) -> float:
    """Relative entropy ``KL(z || z_ref)``; the Bregman divergence of entropy."""
    z = as_simplex(z, "z")
    z_ref = as_simplex(z_ref, "z_ref")
    if z.shape != z_ref.shape:
        raise ValueError("dimension mismatch")
    support = z > 0
    if np.any(z_ref[support] == 0):
        raise DomainError("z is not absolutely continuous w.r.t. z_ref")
    zs = z[support]
    return float(max(np.sum(zs * (np.log(zs) - np.log(z_ref[support]))), 0.0))


def tv_norm(delta) -> float:
    return float(0.5 * np.abs(_vector(delta, "delta")).sum())


@dataclass(frozen=True)
class LogWeights:
    """Unnormalized log-masses; the simplex point is ``softmax(logw)``."""

    logw: np.ndarray

    def __post_init__(self):
        arr = _vector(self.logw, "logw")
        if not np.all(np.isfinite(arr)):
            raise ValueError("log-weights must be finite")
        object.__setattr__(self, "logw", arr)

    @classmethod
    def from_simplex(cls, z) -> "LogWeights":
        z = as_simplex(z)
        if np.any(z == 0):
            raise DomainError("log-weights need strictly positive masses")
        return cls(np.log(z))

    def normalized(self) -> "LogWeights":
        return LogWeights(normalize_log(self.logw))

    def probs(self) -> np.ndarray:
        return softmax(self.logw)

    def step(self, b, eta: float) -> "LogWeights":
        b = _vector(b, "b")
        if b.shape != self.logw.shape:
            raise ValueError("dimension mismatch")
        return LogWeights(md_update_log(self.logw, b, eta))
