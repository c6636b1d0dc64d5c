"""Langevin samplers: plain and RMSProp-preconditioned SGLD.

One step is ``z' = z - gamma * grad + sqrt(2 gamma) * eps * xi``, which for
small ``gamma`` samples approximately from ``exp(-h / eps^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError

K_GROWTH = 1.0 + 1e-5
GAMMA_DECAY = 1.0 - 1e-5
EPS_DECAY = 1.0 - 5e-5
EMA_DECAY = 0.99
EMA_FLOOR = 1e-8


@dataclass(frozen=True)
class SgldSchedule:
    gamma0: float = 1e-2
    eps0: float = 1e-2
    K_growth: float = K_GROWTH
    gamma_decay: float = GAMMA_DECAY
    eps_decay: float = EPS_DECAY

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not self.eps0 >= 0:
            raise ValueError("eps0 must be nonnegative")
        if not (self.K_growth >= 1 and 0 < self.gamma_decay <= 1 and 0 < self.eps_decay <= 1):
            raise ValueError("schedule rates out of range")


def schedule_at(schedule: SgldSchedule, t: int):
    """``(K_t, gamma_t, eps_t)``; ``t < 1`` is clamped to 1."""
    t = max(int(t), 1)
    K = int(math.floor(math.exp(t * math.log(schedule.K_growth))))
    gamma = schedule.gamma0 * schedule.gamma_decay ** t
    eps = schedule.eps0 * schedule.eps_decay ** t
    return max(K, 1), gamma, eps


@dataclass(frozen=True)
class LangevinState:
    position: np.ndarray
    step: int = 0
    rng: np.random.Generator = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        pos = np.array(self.position, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(pos)):
            raise ValueError("position must be finite")
        object.__setattr__(self, "position", pos)
        if self.rng is None:
            object.__setattr__(self, "rng", np.random.default_rng(0))

    @classmethod
    def start(cls, position, seed: int = 0, chain: int = 0) -> "LangevinState":
        """State whose noise stream is keyed by ``(seed, chain)``."""
        return cls(position, 0, np.random.default_rng([int(seed), int(chain)]))


def _check_grad(grad, state):
    grad = np.asarray(grad, dtype=np.float64).reshape(state.position.shape)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient", position=state.position.tolist(), step=state.step)
    return grad


def _wrap(z, period):
    return z if period is None else np.mod(z, period)


def sgld_step(state: LangevinState, grad, gamma: float, eps: float,
              period: float | None = None) -> LangevinState:
    if not gamma > 0 or eps < 0:
        raise ValueError("need gamma > 0 and eps >= 0")
    grad = _check_grad(grad, state)
    xi = state.rng.standard_normal(state.position.shape)
    z = state.position - gamma * grad + math.sqrt(2.0 * gamma) * eps * xi
    return replace(state, position=_wrap(z, period), step=state.step + 1)


@dataclass(frozen=True)
class RmsAccumulator:
    """Per-coordinate EMA of squared gradients.

    The preconditioner is ``1 / (sqrt(ema) + floor)``, so it never exceeds
    ``1 / floor``.
    """

    ema: np.ndarray
    decay: float = EMA_DECAY
    floor: float = EMA_FLOOR

    @classmethod
    def fresh(cls, dim: int, decay: float = EMA_DECAY, floor: float = EMA_FLOOR):
        return cls(np.zeros(dim), decay, floor)

    def update(self, grad) -> "RmsAccumulator":
        return replace(self, ema=self.decay * self.ema + (1.0 - self.decay) * np.square(grad))

    def preconditioner(self) -> np.ndarray:
        return 1.0 / (np.sqrt(self.ema) + self.floor)


def preconditioned_sgld_step(state: LangevinState, grad, gamma: float, eps: float,
                             accumulator: RmsAccumulator, period: float | None = None):
    """Returns ``(state', accumulator')``; the EMA absorbs ``grad`` first."""
    if not gamma > 0 or eps < 0:
        raise ValueError("need gamma > 0 and eps >= 0")
    grad = _check_grad(grad, state)
    acc = accumulator.update(grad)
    P = acc.preconditioner()
    xi = state.rng.standard_normal(state.position.shape)
    z = state.position - gamma * P * grad + math.sqrt(2.0 * gamma) * eps * np.sqrt(P) * xi
    return replace(state, position=_wrap(z, period), step=state.step + 1), acc


# --------------------------------------------------------- many chains

NOISE_CHUNK = 4096


@dataclass
class ChainSummary:
    final: np.ndarray          # (chains, dim)
    mean: np.ndarray           # per-coordinate, pooled over chains and kept steps
    variance: np.ndarray
    kept: int                  # samples per chain after burn-in
    thinned: np.ndarray        # (n_thinned, dim)


def run_chains(grad_fn, x0, n_steps: int, gamma: float, eps: float = 1.0, seed: int = 0,
               burn_in: int = 0, thin_every: int | None = None,
               period: float | None = None) -> ChainSummary:
    """Advance independent SGLD chains in lockstep.

    ``x0`` has shape ``(chains, dim)``; chain ``c`` draws its noise from
    ``default_rng([seed, c])`` in order, so it follows exactly the trajectory
    of ``LangevinState.start(x0[c], seed, c)`` under repeated ``sgld_step``.
    Moments pool every post-burn-in state; ``thin_every`` additionally keeps
    every k-th post-burn-in state of each chain.
    """
    x = np.array(x0, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x0 must have shape (chains, dim)")
    C, d = x.shape
    if n_steps < 1 or burn_in < 0 or burn_in >= n_steps:
        raise ValueError("need 0 <= burn_in < n_steps")
    rngs = [np.random.default_rng([int(seed), c]) for c in range(C)]
    scale = math.sqrt(2.0 * gamma) * eps
    s1 = np.zeros(d)
    s2 = np.zeros(d)
    thinned = []
    k = 0
    hist = np.empty((NOISE_CHUNK, C, d))
    while k < n_steps:
        L = min(NOISE_CHUNK, n_steps - k)
        noise = np.stack([r.standard_normal((L, d)) for r in rngs], axis=1) * scale
        for i in range(L):
            g = grad_fn(x)
            x = x - gamma * g + noise[i]
            if period is not None:
                x = np.mod(x, period)
            hist[i] = x
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite chain state", step=k + L)
        # steps k+1 .. k+L are now in hist[:L]
        first = max(burn_in - k, 0)
        if first < L:
            block = hist[first:L]
            s1 += block.sum(axis=(0, 1))
            s2 += np.square(block).sum(axis=(0, 1))
            if thin_every:
                steps = np.arange(k + 1 + first, k + L + 1)
                sel = (steps - burn_in) % thin_every == 0
                thinned.append(block[sel].reshape(-1, d))
        k += L
    kept = n_steps - burn_in
    n = kept * C
    mean = s1 / n
    var = s2 / n - mean ** 2
    th = np.concatenate(thinned) if thinned else np.empty((0, d))
    return ChainSummary(x, mean, var * n / (n - 1), kept, th)


def ks_critical_value(n: int, m: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))
