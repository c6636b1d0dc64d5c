"""Entropic Mirror Descent and Mirror-Prox for finite matrix games.

Both solvers run simultaneous updates for the two players, keep iterates as
log-weights, and report the duality gap of the running ergodic averages at
a fixed set of record times.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .entropy import as_simplex, normalize_log
from .errors import ConfigError, DomainError, NumericalError
from .finite import NOISE_BLOCK, MatrixGame, NoiseStream, StochasticOracleConfig

RULE_KINDS = ("md_deterministic", "md_stochastic", "mp_deterministic", "mp_stochastic", "fixed")


@dataclass(frozen=True)
class StepSizeRule:
    """Step size tuned to the gap bound, or a fixed value.

    ``D0`` is the initial-distance surrogate; ``M_prime`` and ``sigma2`` are
    only needed for the stochastic kinds.
    """

    kind: str
    M: float | None = None
    M_prime: float | None = None
    L: float | None = None
    sigma2: float | None = None
    D0: float | None = None
    T: int | None = None
    eta_fixed: float | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ConfigError(f"unknown step-size rule {self.kind!r}", key="rule")
        if self.eta <= 0 or not math.isfinite(self.eta):
            raise ConfigError(f"resolved step size must be positive, got {self.eta}", key="rule")

    def _need(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"rule {self.kind!r} requires {name}", key=name)

    @property
    def eta(self) -> float:
        k = self.kind
        if k == "fixed":
            self._need("eta_fixed")
            return float(self.eta_fixed)
        if k == "md_deterministic":
            self._need("M", "D0", "T")
            return 2.0 / self.M * math.sqrt(self.D0 / self.T)
        if k == "md_stochastic":
            self._need("M_prime", "D0", "T")
            return 2.0 / self.M_prime * math.sqrt(self.D0 / self.T)
        if k == "mp_deterministic":
            self._need("L")
            return 4.0 / self.L
        self._need("L", "sigma2", "D0", "T")
        cap = 4.0 / (math.sqrt(3.0) * self.L)
        if self.sigma2 == 0:
            return cap
        return min(cap, math.sqrt(2.0 * self.D0 / (3.0 * self.T * self.sigma2)))

    def constants(self) -> dict:
        return {
            "kind": self.kind, "eta": self.eta, "M": self.M, "M_prime": self.M_prime,
            "L": self.L, "sigma2": self.sigma2, "D0_bar": self.D0, "T": self.T,
        }


def default_d0(m: int, n: int) -> float:
    """KL from any vertex to the uniform distribution, summed over players."""
    return math.log(m) + math.log(n)


def comparator_d0(p_init, q_init) -> float:
    """Largest KL from any pure-strategy pair to the initial pair.

    Equals ``log m + log n`` for the uniform start, and is the smallest
    constant that bounds the distance to every comparator otherwise.
    """
    return float(-np.log(np.min(p_init)) - np.log(np.min(q_init)))


def make_rule(kind: str, game: MatrixGame, T: int, D0: float | None = None,
              noise_bound: float = 0.0, eta: float | None = None) -> StepSizeRule:
    """Build a rule with the game's constants M, L and the oracle's M', sigma^2."""
    D0 = default_d0(game.m, game.n) if D0 is None else D0
    M = game.grad_bound
    return StepSizeRule(
        kind=kind, M=M, M_prime=M + noise_bound, L=game.lipschitz,
        sigma2=noise_bound ** 2 / 3.0, D0=D0, T=T, eta_fixed=eta,
    )


def gap_bound(kind: str, eta: float, t, D0: float, M: float | None = None,
              M_prime: float | None = None, sigma2: float | None = None):
    """Upper bound on the ergodic gap after ``t`` iterations at step ``eta``."""
    t = np.asarray(t, dtype=np.float64)
    base = D0 / (eta * t)
    if kind == "md_deterministic":
        return base + eta * M ** 2 / 4.0
    if kind == "md_stochastic":
        return base + eta * M_prime ** 2 / 4.0
    if kind == "mp_deterministic":
        return base
    if kind == "mp_stochastic":
        return base + 1.5 * eta * sigma2
    raise ConfigError(f"no bound for rule kind {kind!r}", key="rule")


def record_times(T: int, stride: int | None = None, per_decade: int = 10) -> np.ndarray:
    """Stride multiples plus log-spaced times (including powers of ten) and T."""
    if T < 1:
        raise ValueError("T must be >= 1")
    stride = max(1, math.ceil(T / 200)) if stride is None else max(1, int(stride))
    ts = set(range(stride, T + 1, stride))
    ts |= set(log_grid(T, per_decade).tolist())
    ts.add(T)
    return np.array(sorted(ts), dtype=np.int64)


def log_grid(T: int, per_decade: int = 10) -> np.ndarray:
    top = math.log10(T)
    k = np.arange(0, math.floor(top * per_decade) + 1)
    ts = np.unique(np.round(10.0 ** (k / per_decade)).astype(np.int64))
    return ts[(ts >= 1) & (ts <= T)]


@dataclass
class ProxTrace:
    t: np.ndarray
    gap_ergodic: np.ndarray
    gap_last: np.ndarray
    eta: np.ndarray
    p_bar: np.ndarray
    q_bar: np.ndarray
    p_last: np.ndarray
    q_last: np.ndarray
    constants: dict = field(default_factory=dict)
    iterates: list | None = None

    @property
    def final_gap(self) -> float:
        return float(self.gap_ergodic[-1])

    def rows(self):
        for row in zip(self.t, self.gap_ergodic, self.gap_last, self.eta):
            yield int(row[0]), float(row[1]), float(row[2]), float(row[3])

    def write_csv(self, path: str | os.PathLike) -> None:
        write_trace_csv(path, self.rows())


def write_trace_csv(path, rows, header=("t", "gap_ergodic", "gap_last", "eta")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _init_logs(game: MatrixGame, init):
    if init is None:
        return np.full(game.n, -math.log(game.n)), np.full(game.m, -math.log(game.m))
    p0, q0 = init
    p0 = as_simplex(p0, "p_init")
    q0 = as_simplex(q0, "q_init")
    if p0.shape != (game.n,) or q0.shape != (game.m,):
        raise ValueError("init dimensions do not match the game")
    if np.any(p0 <= 0) or np.any(q0 <= 0):
        raise DomainError("MD/MP need a strictly positive initial pair")
    return normalize_log(np.log(p0)), normalize_log(np.log(q0))


class _Recorder:
    def __init__(self, game, T, stride, keep_iterates, eta):
        self.game = game
        self.times = record_times(T, stride)
        self.next_idx = 0
        k = len(self.times)
        self.gap_e = np.empty(k)
        self.gap_l = np.empty(k)
        self.eta = eta
        self.iterates = [] if keep_iterates else None
        A, a = game.A, game.a
        self._A, self._AT, self._a = A, A.T, a

    def _gap(self, p, q):
        g = np.max(self._a - self._A @ p) + np.max(self._AT @ q) - q @ self._a
        return g if g > 0.0 else 0.0

    def visit(self, t, p, q, pbar, qbar):
        if self.iterates is not None:
            self.iterates.append((p.copy(), q.copy()))
        if self.next_idx < len(self.times) and self.times[self.next_idx] == t:
            i = self.next_idx
            self.gap_e[i] = self._gap(pbar, qbar)
            self.gap_l[i] = self._gap(p, q)
            self.next_idx += 1

    def finish(self, pbar, qbar, p, q, constants):
        return ProxTrace(
            t=self.times.copy(), gap_ergodic=self.gap_e, gap_last=self.gap_l,
            eta=np.full(len(self.times), self.eta), p_bar=pbar, q_bar=qbar,
            p_last=p, q_last=q, constants=constants, iterates=self.iterates,
        )


def _lse(x):
    mx = x.max()
    return mx + math.log(np.exp(x - mx).sum())


def solve_md(game: MatrixGame, T: int, rule: StepSizeRule,
             oracle: StochasticOracleConfig | None = None, init=None,
             stride: int | None = None, keep_iterates: bool = False) -> ProxTrace:
    """Simultaneous entropic MD for both players.

    ``p_{t+1} = MD(p_t, -A^T q_t)``, ``q_{t+1} = MD(q_t, -a + A p_t)``.
    The trace averages the T visited iterates ``p_1..p_T``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    eta = rule.eta
    logp, logq = _init_logs(game, init)
    A, AT, a = game.A, game.A.T, game.a
    noisy = oracle is not None and oracle.noise_bound > 0
    stream = NoiseStream(oracle.seed, game.m, game.n) if noisy else None
    nb = oracle.noise_bound if noisy else 0.0
    rec = _Recorder(game, T, stride, keep_iterates, eta)
    pbar = np.zeros(game.n)
    qbar = np.zeros(game.m)
    for t in range(1, T + 1):
        p = np.exp(logp)
        q = np.exp(logq)
        pbar += (p - pbar) / t
        qbar += (q - qbar) / t
        rec.visit(t, p, q, pbar, qbar)
        gp = -(AT @ q)
        gq = A @ p - a
        if noisy:
            xi_p, xi_q = stream.unit(t, 0)
            gp = gp + nb * xi_p
            gq = gq + nb * xi_q
        logp = logp - eta * gp
        logp -= _lse(logp)
        logq = logq - eta * gq
        logq -= _lse(logq)
        if not (np.isfinite(logp[0]) and np.isfinite(logq[0])):
            raise NumericalError("non-finite MD iterate", t=t)
    constants = rule.constants()
    constants["noise_bound"] = nb
    return rec.finish(pbar, qbar, np.exp(logp), np.exp(logq), constants)


def solve_mp(game: MatrixGame, T: int, rule: StepSizeRule,
             oracle: StochasticOracleConfig | None = None, init=None,
             stride: int | None = None, keep_iterates: bool = False) -> ProxTrace:
    """Entropic Mirror-Prox; the ergodic average runs over leader points.

    Leader: ``p_t = MD(p~_t, -A^T q~_t)``, ``q_t = MD(q~_t, -a + A p~_t)``.
    Extrapolation: ``p~_{t+1} = MD(p~_t, -A^T q_t)``, likewise for ``q~``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    eta = rule.eta
    lpt, lqt = _init_logs(game, init)
    A, AT, a = game.A, game.A.T, game.a
    noisy = oracle is not None and oracle.noise_bound > 0
    stream = NoiseStream(oracle.seed, game.m, game.n) if noisy else None
    nb = oracle.noise_bound if noisy else 0.0
    rec = _Recorder(game, T, stride, keep_iterates, eta)
    pbar = np.zeros(game.n)
    qbar = np.zeros(game.m)
    for t in range(1, T + 1):
        pt = np.exp(lpt)
        qt = np.exp(lqt)
        gp = -(AT @ qt)
        gq = A @ pt - a
        if noisy:
            xi_p, xi_q = stream.unit(t, 0)
            gp = gp + nb * xi_p
            gq = gq + nb * xi_q
        lp = lpt - eta * gp
        lp -= _lse(lp)
        lq = lqt - eta * gq
        lq -= _lse(lq)
        p = np.exp(lp)
        q = np.exp(lq)
        gp = -(AT @ q)
        gq = A @ p - a
        if noisy:
            xi_p, xi_q = stream.unit(t, 1)
            gp = gp + nb * xi_p
            gq = gq + nb * xi_q
        lpt = lpt - eta * gp
        lpt -= _lse(lpt)
        lqt = lqt - eta * gq
        lqt -= _lse(lqt)
        if not (np.isfinite(lpt[0]) and np.isfinite(lqt[0])):
            raise NumericalError("non-finite MP iterate", t=t)
        pbar += (p - pbar) / t
        qbar += (q - qbar) / t
        rec.visit(t, p, q, pbar, qbar)
    constants = rule.constants()
    constants["noise_bound"] = nb
    return rec.finish(pbar, qbar, p, q, constants)


def _batch_lse(x):
    mx = x.max(axis=1, keepdims=True)
    return mx + np.log(np.exp(x - mx).sum(axis=1, keepdims=True))


def _batch_gap(A, a, p, q):
    g = (a - p @ A.T).max(axis=1) + (q @ A).max(axis=1) - q @ a
    return np.maximum(g, 0.0)


def solve_seeds(method: str, game: MatrixGame, T: int, rule: StepSizeRule,
                noise_bound: float, seeds, init=None, stride: int | None = None) -> list[ProxTrace]:
    """Run ``solve_md`` or ``solve_mp`` for many oracle seeds at once.

    The seeds advance in lockstep as rows of one array; each row consumes the
    same noise stream the single-seed solver would, so traces agree with
    separate calls up to floating-point reassociation.
    """
    if method not in ("md", "mp"):
        raise ConfigError(f"unknown method {method!r}", key="solver")
    if T < 1:
        raise ValueError("T must be >= 1")
    seeds = [int(s) for s in seeds]
    S, m, n = len(seeds), game.m, game.n
    eta = rule.eta
    lp0, lq0 = _init_logs(game, init)
    lp = np.tile(lp0, (S, 1))
    lq = np.tile(lq0, (S, 1))
    A, a = game.A, game.a
    streams = [NoiseStream(s, m, n) for s in seeds]
    times = record_times(T, stride)
    gap_e = np.empty((S, len(times)))
    gap_l = np.empty((S, len(times)))
    pbar = np.zeros((S, n))
    qbar = np.zeros((S, m))
    stages = (0,) if method == "md" else (0, 1)
    noise = {}
    nxt = 0

    def grads(p, q, t, stage):
        gp = -(q @ A)
        gq = p @ A.T - a
        if noise_bound > 0:
            blk = noise[stage][:, t % NOISE_BLOCK]
            gp = gp + noise_bound * blk[:, :n]
            gq = gq + noise_bound * blk[:, n:]
        return gp, gq

    for t in range(1, T + 1):
        if noise_bound > 0 and (t == 1 or t % NOISE_BLOCK == 0):
            for st in stages:
                noise[st] = np.stack([s._block(t // NOISE_BLOCK, st) for s in streams])
        if method == "md":
            p = np.exp(lp)
            q = np.exp(lq)
            pbar += (p - pbar) / t
            qbar += (q - qbar) / t
            gp, gq = grads(p, q, t, 0)
            lp = lp - eta * gp
            lp -= _batch_lse(lp)
            lq = lq - eta * gq
            lq -= _batch_lse(lq)
        else:
            gp, gq = grads(np.exp(lp), np.exp(lq), t, 0)
            llp = lp - eta * gp
            llp -= _batch_lse(llp)
            llq = lq - eta * gq
            llq -= _batch_lse(llq)
            p = np.exp(llp)
            q = np.exp(llq)
            gp, gq = grads(p, q, t, 1)
            lp = lp - eta * gp
            lp -= _batch_lse(lp)
            lq = lq - eta * gq
            lq -= _batch_lse(lq)
            pbar += (p - pbar) / t
            qbar += (q - qbar) / t
        if not np.all(np.isfinite(lp[:, 0])):
            raise NumericalError("non-finite iterate", t=t)
        if nxt < len(times) and times[nxt] == t:
            gap_e[:, nxt] = _batch_gap(A, a, pbar, qbar)
            gap_l[:, nxt] = _batch_gap(A, a, p, q)
            nxt += 1

    constants = rule.constants()
    constants["noise_bound"] = noise_bound
    out = []
    for i, s in enumerate(seeds):
        c = dict(constants, seed=s)
        if method == "md":
            last_p, last_q = np.exp(lp[i]), np.exp(lq[i])
        else:
            last_p, last_q = p[i], q[i]
        out.append(ProxTrace(times.copy(), gap_e[i], gap_l[i], np.full(len(times), eta),
                             pbar[i].copy(), qbar[i].copy(), last_p, last_q, c))
    return out
