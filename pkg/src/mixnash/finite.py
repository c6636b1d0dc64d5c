"""Finite two-player zero-sum games ``min_p max_q <q, a> - <q, A p>``.

The column player ``p`` (length n) minimizes, the row player ``q``
(length m) maximizes. Both are driven through the same descent-form MD
update, so the row player receives ``-a + A p``.
"""
from __future__ import annotations

import functools
import io
import itertools
import os
from dataclasses import dataclass

import numpy as np

from .entropy import as_simplex

NOISE_BLOCK = 1024


@dataclass(frozen=True)
class MatrixGame:
    A: np.ndarray
    a: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        if A.ndim != 2 or min(A.shape) < 1:
            raise ValueError(f"payoff matrix must be 2-D and nonempty, got {A.shape}")
        a = np.zeros(A.shape[0]) if self.a is None else np.array(self.a, dtype=np.float64)
        if a.shape != (A.shape[0],):
            raise ValueError(f"vector a must have length {A.shape[0]}, got {a.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(a))):
            raise ValueError("game data must be finite")
        A.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def grad_bound(self) -> float:
        """Constant M bounding both gradients in sup-norm over the simplices."""
        return float(np.abs(self.a).max() + np.abs(self.A).max())

    @property
    def lipschitz(self) -> float:
        """Operator bound L w.r.t. half-l1 total variation: ``2 max|A_ij|``."""
        return 2.0 * float(np.abs(self.A).max())

    def value(self, p, q) -> float:
        return float(q @ self.a - q @ (self.A @ p))

    @classmethod
    def matching_pennies(cls) -> "MatrixGame":
        return cls(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.zeros(2))

    @classmethod
    def random(cls, m: int, n: int, rng: np.random.Generator, low=-1.0, high=1.0) -> "MatrixGame":
        return cls(rng.uniform(low, high, size=(m, n)), np.zeros(m))


def _check_len(v, d, who):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (d,):
        raise ValueError(f"{who} must have length {d}, got shape {v.shape}")
    return v


def grad_p(game: MatrixGame, q) -> np.ndarray:
    """MD argument for the minimizing player: ``-A^T q``."""
    q = _check_len(q, game.m, "q")
    return -(game.A.T @ q)


def grad_q(game: MatrixGame, p) -> np.ndarray:
    """MD argument for the maximizing player: ``-a + A p``."""
    p = _check_len(p, game.n, "p")
    return game.A @ p - game.a


def duality_gap(game: MatrixGame, p, q) -> float:
    """``max_q' F(p, q') - min_p' F(p', q)``; both extrema sit on vertices."""
    p = _check_len(p, game.n, "p")
    q = _check_len(q, game.m, "q")
    gap = np.max(game.a - game.A @ p) + np.max(game.A.T @ q) - q @ game.a
    return float(max(gap, 0.0))


@dataclass(frozen=True)
class StochasticOracleConfig:
    """Additive i.i.d. uniform noise on ``[-noise_bound, noise_bound]``."""

    noise_bound: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.noise_bound >= 0 and np.isfinite(self.noise_bound)):
            raise ValueError("noise_bound must be finite and nonnegative")

    @property
    def variance(self) -> float:
        # per-coordinate variance of U[-b, b]
        return self.noise_bound ** 2 / 3.0


class NoiseStream:
    """Reproducible unit-uniform noise indexed by (iteration, stage).

    Draws are generated in blocks of ``NOISE_BLOCK`` iterations from a
    generator seeded by ``(seed, block, stage)``, so the value at a given
    ``t`` never depends on which other iterations were requested.
    """

    def __init__(self, seed: int, m: int, n: int):
        self.seed = int(seed)
        self.m = m
        self.n = n
        self._cache = {}

    def _block(self, block: int, stage: int) -> np.ndarray:
        key = (block, stage)
        arr = self._cache.get(key)
        if arr is None:
            if len(self._cache) > 8:
                self._cache.clear()
            rng = np.random.default_rng([self.seed, block, stage])
            arr = rng.uniform(-1.0, 1.0, size=(NOISE_BLOCK, self.n + self.m))
            self._cache[key] = arr
        return arr

    def unit(self, t: int, stage: int = 0):
        """Return (xi_p, xi_q) with entries on [-1, 1]."""
        if t < 0:
            raise ValueError("iteration index must be nonnegative")
        row = self._block(t // NOISE_BLOCK, stage)[t % NOISE_BLOCK]
        return row[: self.n], row[self.n:]


@functools.lru_cache(maxsize=32)
def _stream(seed: int, m: int, n: int) -> NoiseStream:
    return NoiseStream(seed, m, n)


def stochastic_grads(game: MatrixGame, p, q, cfg: StochasticOracleConfig, t: int, stage: int = 0):
    """Unbiased noisy versions of ``(grad_p(q), grad_q(p))``.

    Identical ``(cfg.seed, t, stage)`` always reproduce the same noise.
    """
    gp = grad_p(game, q)
    gq = grad_q(game, p)
    if cfg.noise_bound == 0:
        return gp, gq
    xi_p, xi_q = _stream(int(cfg.seed), game.m, game.n).unit(t, stage)
    return gp + cfg.noise_bound * xi_p, gq + cfg.noise_bound * xi_q


def brute_force_ne(game: MatrixGame, tol: float = 1e-10):
    """Exact mixed NE of a small game by support enumeration.

    Enumerates square support pairs (every matrix game has an optimal pair
    supported on a nonsingular square kernel), solves both indifference
    systems and keeps the first pair without a profitable pure deviation.
    Returns ``(p, q, value)``.
    """
    m, n = game.m, game.n
    if m > 5 or n > 5:
        raise NotImplementedError("brute_force_ne supports games up to 5x5")
    # payoff of the maximizing row player: q^T P p
    P = game.a[:, None] - game.A
    scale = max(1.0, float(np.abs(P).max()))
    for k in range(1, min(m, n) + 1):
        for rows in itertools.combinations(range(m), k):
            for cols in itertools.combinations(range(n), k):
                sub = P[np.ix_(rows, cols)]
                p_sup, v1 = _indifference(sub)
                if p_sup is None:
                    continue
                q_sup, v2 = _indifference(sub.T)
                if q_sup is None:
                    continue
                if min(p_sup.min(), q_sup.min()) < -tol or abs(v1 - v2) > tol * scale:
                    continue
                p = np.zeros(n)
                q = np.zeros(m)
                p[list(cols)] = np.clip(p_sup, 0.0, None)
                q[list(rows)] = np.clip(q_sup, 0.0, None)
                p /= p.sum()
                q /= q.sum()
                v = q @ P @ p
                if np.max(P @ p) > v + tol * scale or np.min(q @ P) < v - tol * scale:
                    continue
                return p, q, float(game.value(p, q))
    raise RuntimeError("support enumeration found no equilibrium")  # unreachable for finite games


def _indifference(sub: np.ndarray):
    """Solve ``sub @ x = v 1, sum x = 1``; returns (x, v) or (None, None)."""
    k = sub.shape[0]
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = sub
    M[:k, k] = -1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return None, None
    if not np.all(np.isfinite(sol)) or np.linalg.cond(M) > 1e12:
        return None, None
    return sol[:k], sol[k]


# ---------------------------------------------------------------- text format

def format_game(game: MatrixGame) -> str:
    lines = [f"{game.m} {game.n}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in game.A]
    lines.append(" ".join(repr(float(x)) for x in game.a))
    return "\n".join(lines) + "\n"


def parse_game(text: str) -> MatrixGame:
    """Parse ``m n`` / m rows of A / vector a, whitespace separated."""
    rows = [ln.split() for ln in io.StringIO(text).read().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError("first line must be 'm n'")
    m, n = int(rows[0][0]), int(rows[0][1])
    if len(rows) != m + 2:
        raise ValueError(f"expected {m + 2} nonblank lines, got {len(rows)}")
    A = np.array([[float(x) for x in r] for r in rows[1:m + 1]])
    if A.shape != (m, n):
        raise ValueError(f"payoff rows do not form a {m}x{n} matrix")
    a = np.array([float(x) for x in rows[m + 1]])
    return MatrixGame(A, a)


def read_game(path: str | os.PathLike) -> MatrixGame:
    with open(path) as fh:
        return parse_game(fh.read())


def write_game(game: MatrixGame, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(format_game(game))


def check_simplex_pair(game: MatrixGame, p, q):
    p = as_simplex(p, "p")
    q = as_simplex(q, "q")
    _check_len(p, game.n, "p")
    _check_len(q, game.m, "q")
    return p, q
