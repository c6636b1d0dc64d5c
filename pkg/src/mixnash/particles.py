"""Particle and parameter-averaging solvers for continuous min-max games.

The game is ``min_theta max_w E_real f_w(X) - E_{X~P_theta} f_w(X)``,
optionally with a quadratic confinement ``lam/2 |.|^2`` on both players.
Four solvers are provided:

* ``approx_inf_md`` / ``approx_inf_mp`` keep every generation of particles
  and sample the next measures with one SGLD chain per player;
* ``mirror_gan`` / ``mirror_prox_gan`` summarize each measure by a damped
  running mean, so their state is a single parameter pair.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .grid import CosineFunction, CosineKernel, GridDomain, TWO_PI
from .sgld import RmsAccumulator, SgldSchedule, schedule_at

# sub-stream tags derived from the master seed
INIT, NOISE, DATA, INDEX = 0, 1, 2, 3


def substreams(seed: int) -> dict:
    return {tag: np.random.default_rng([int(seed), tag]) for tag in (INIT, NOISE, DATA, INDEX)}


# ------------------------------------------------------------------ games

@dataclass(frozen=True)
class KernelTorusGame:
    """``f_w(x) = K(w, x)`` with ``P_theta = delta_theta`` and ``E_real f_w = g(w)``.

    Both expectations are exact, so the data batch size plays no role.
    """

    kernel: object = field(default_factory=CosineKernel)
    g: object = field(default_factory=CosineFunction)
    dim: int = 1
    period: float = TWO_PI
    n: int = 1
    confinement: float = 0.0
    name: str = field(default="kernel_torus", init=False)

    @property
    def dim_w(self):
        return self.dim

    @property
    def dim_theta(self):
        return self.dim

    def init(self, rng, count):
        return (rng.uniform(0.0, self.period, (count, self.dim)),
                rng.uniform(0.0, self.period, (count, self.dim)))

    def theta_grad(self, theta, ws, rng):
        """``sum_{w in ws} grad_theta (1/n) sum_i f_w(X_i)`` with ``X_i ~ P_theta``."""
        return self.kernel.grad_theta(ws, theta[None, :]).sum(axis=0)

    def real_grad(self, w, rng):
        return self.g.grad(w[None, :])[0]

    def fake_grad(self, w, thetas, rng):
        """``sum_{theta in thetas} grad_w (1/n) sum_i f_w(X_i^theta)``."""
        return self.kernel.grad_w(w[None, :], thetas).sum(axis=0)

    def payoff(self, w, theta):
        return float(self.g(w[None, :])[0] - self.kernel(w[None, :], theta[None, :])[0])

    def diagnostic(self, w, theta):
        return self.payoff(w, theta)


@dataclass(frozen=True)
class DiracGanGame:
    """Linear critic ``f_w(x) = <w, x>`` against a point-mass generator.

    Real data are ``delta_{x0}`` (``real_std = 0``) or ``N(x0, real_std^2)``.
    With confinement ``lam`` the regularized saddle is
    ``theta* = x0 / (1 + lam^2)``, ``w* = lam theta*``.
    """

    x0: float = 0.5
    confinement: float = 0.1
    real_std: float = 0.0
    n: int = 32
    dim: int = 1
    init_std: float = 1.0
    period: float | None = field(default=None, init=False)
    name: str = field(default="dirac_gan", init=False)

    def __post_init__(self):
        if not self.confinement > 0:
            raise ValueError("dirac_gan needs a positive confinement to be proper")

    @property
    def dim_w(self):
        return self.dim

    @property
    def dim_theta(self):
        return self.dim

    @property
    def saddle(self):
        th = np.full(self.dim, self.x0 / (1.0 + self.confinement ** 2))
        return self.confinement * th, th

    def init(self, rng, count):
        return (rng.normal(0.0, self.init_std, (count, self.dim)),
                rng.normal(0.0, self.init_std, (count, self.dim)))

    def theta_grad(self, theta, ws, rng):
        # X = theta for every sample, grad_theta <w, theta> = w
        return ws.sum(axis=0)

    def real_grad(self, w, rng):
        if self.real_std == 0:
            return np.full(self.dim, float(self.x0))
        return (self.x0 + self.real_std * rng.standard_normal((self.n, self.dim))).mean(axis=0)

    def fake_grad(self, w, thetas, rng):
        return thetas.sum(axis=0)

    def payoff(self, w, theta):
        return float(np.dot(w, self.x0 - theta))

    def diagnostic(self, w, theta):
        ws, ts = self.saddle
        return float(np.linalg.norm(np.concatenate([w - ws, theta - ts])))


def make_toy(variant: str, **params):
    if variant == "kernel_torus":
        return KernelTorusGame(**params)
    if variant == "dirac_gan":
        return DiracGanGame(**params)
    from .errors import ConfigError
    raise ConfigError(f"unknown toy game {variant!r}", key="toy")


# ---------------------------------------------------------- SGLD plumbing

class _Chain:
    """One Langevin chain with optional RMSProp preconditioning."""

    def __init__(self, z, rng, period, lam, precondition=False, acc=None):
        self.z = np.array(z, dtype=np.float64)
        self.rng = rng
        self.period = period
        self.lam = lam
        self.acc = acc if acc is not None else (RmsAccumulator.fresh(self.z.size) if precondition else None)

    def step(self, ascent, gamma, eps, where):
        """Move along ``ascent - lam z`` plus thermal noise."""
        drift = ascent - self.lam * self.z
        if not np.all(np.isfinite(drift)):
            raise NumericalError("non-finite drift", **where)
        xi = self.rng.standard_normal(self.z.shape)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.acc is None:
                z = self.z + gamma * drift + math.sqrt(2.0 * gamma) * eps * xi
            else:
                # the EMA tracks the gradient of the potential, i.e. -drift
                self.acc = self.acc.update(drift)
                P = self.acc.preconditioner()
                z = self.z + gamma * P * drift + math.sqrt(2.0 * gamma) * eps * np.sqrt(P) * xi
        if not np.all(np.isfinite(z)):
            raise NumericalError("chain left the finite range", **where)
        self.z = z if self.period is None else np.mod(z, self.period)
        return self.z


# ------------------------------------------------ history-based samplers

@dataclass
class ParticleRun:
    W: list                      # generations of w particles, each (n', dim)
    Theta: list
    index: int                   # 1-based generation returned
    sample_w: np.ndarray
    sample_theta: np.ndarray
    stored_particles: int
    W_tilde: list | None = None
    Theta_tilde: list | None = None

    def histogram(self, which: str, bins: int, period: float) -> np.ndarray:
        """Generation-averaged normalized histogram of a 1-D ensemble."""
        gens = self.W if which == "w" else self.Theta
        edges = np.linspace(0.0, period, bins + 1)
        hs = [np.histogram(g[:, 0], bins=edges)[0] / len(g) for g in gens]
        return np.mean(hs, axis=0)

    def write_snapshots(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        for t, (w, th) in enumerate(zip(self.W, self.Theta), start=1):
            with open(os.path.join(directory, f"generation_{t:05d}.csv"), "w", newline="") as fh:
                out = csv.writer(fh, lineterminator="\n")
                out.writerow([f"w{i}" for i in range(w.shape[1])] + [f"theta{i}" for i in range(th.shape[1])])
                for a, b in zip(w, th):
                    out.writerow([repr(float(x)) for x in a] + [repr(float(x)) for x in b])


def _check_sizes(n_particles, T):
    if n_particles < 1:
        raise ValueError("need at least one particle per measure")
    if T < 1:
        raise ValueError("T must be >= 1")


def _sample_block(game, w_start, th_start, C, D, t, K, gamma, eps, n_particles, streams, label):
    """Run one w-chain and one theta-chain for ``K + n'`` steps.

    theta drifts by ``(1/n') grad sum_{w in C} f_w``; w drifts by
    ``t grad g_hat - (1/n') grad sum_{theta in D} f_w``. The last ``n'``
    states are returned as the next ensembles.
    """
    if len(C) == 0 or len(D) == 0:
        raise ValueError("empty particle history")
    noise, data = streams[NOISE], streams[DATA]
    wc = _Chain(w_start, noise, game.period, game.confinement)
    tc = _Chain(th_start, noise, game.period, game.confinement)
    Wn = np.empty((n_particles, game.dim_w))
    Tn = np.empty((n_particles, game.dim_theta))
    for k in range(1, K + n_particles + 1):
        th_drift = game.theta_grad(tc.z, C, data) / n_particles
        w_drift = t * game.real_grad(wc.z, data) - game.fake_grad(wc.z, D, data) / n_particles
        where = {"t": t, "k": k, "block": label}
        tc.step(th_drift, gamma, eps, where)
        wc.step(w_drift, gamma, eps, where)
        if k > K:
            Wn[k - K - 1] = wc.z
            Tn[k - K - 1] = tc.z
    return Wn, Tn


def approx_inf_md(game, T: int, schedule: SgldSchedule, n_particles: int, seed: int = 0,
                  burn_in=None) -> ParticleRun:
    """History-based sampler for the MD recursion on measures.

    Generation ``t+1`` is harvested from one chain per player started at a
    uniformly chosen particle of generation ``t``. ``burn_in`` overrides
    ``K_t`` when given.
    """
    _check_sizes(n_particles, T)
    st = substreams(seed)
    w0, th0 = game.init(st[INIT], n_particles)
    W, Th = [w0], [th0]
    for t in range(1, T):
        C = np.concatenate(W)
        D = np.concatenate(Th)
        K, gamma, eps = schedule_at(schedule, t)
        K = K if burn_in is None else int(burn_in)
        ws = W[-1][st[INDEX].integers(n_particles)]
        ts = Th[-1][st[INDEX].integers(n_particles)]
        Wn, Tn = _sample_block(game, ws, ts, C, D, t, K, gamma, eps, n_particles, st, "md")
        W.append(Wn)
        Th.append(Tn)
    idx = int(st[INDEX].integers(1, T + 1))
    return ParticleRun(W, Th, idx, W[idx - 1], Th[idx - 1], sum(len(x) for x in W + Th))


def approx_inf_mp(game, T: int, schedule: SgldSchedule, n_particles: int, seed: int = 0,
                  burn_in=None) -> ParticleRun:
    """Two-block analogue: leader generations ``W[t]`` from the tilde history,
    then tilde generations ``W~[t+1]`` from the leader history."""
    _check_sizes(n_particles, T)
    st = substreams(seed)
    w0, th0 = game.init(st[INIT], n_particles)
    Wt, Tt = [w0], [th0]
    W, Th = [], []
    for t in range(1, T + 1):
        K, gamma, eps = schedule_at(schedule, t)
        K = K if burn_in is None else int(burn_in)
        C = np.concatenate([Wt[t - 1]] + W)
        D = np.concatenate([Tt[t - 1]] + Th)
        ws = Wt[t - 1][st[INDEX].integers(n_particles)]
        ts = Tt[t - 1][st[INDEX].integers(n_particles)]
        Wn, Tn = _sample_block(game, ws, ts, C, D, t, K, gamma, eps, n_particles, st, "leader")
        W.append(Wn)
        Th.append(Tn)
        C2 = np.concatenate(W)
        D2 = np.concatenate(Th)
        ws = Wt[t - 1][st[INDEX].integers(n_particles)]
        ts = Tt[t - 1][st[INDEX].integers(n_particles)]
        Wn, Tn = _sample_block(game, ws, ts, C2, D2, t, K, gamma, eps, n_particles, st, "extrapolation")
        Wt.append(Wn)
        Tt.append(Tn)
    idx = int(st[INDEX].integers(1, T + 1))
    stored = sum(len(x) for x in W + Th + Wt + Tt)
    return ParticleRun(W, Th, idx, W[idx - 1], Th[idx - 1], stored, Wt, Tt)


# -------------------------------------------- parameter-averaging solvers

@dataclass
class ParameterTrace:
    t: np.ndarray
    w: np.ndarray               # (records, dim_w)
    theta: np.ndarray
    diagnostic: np.ndarray
    stored_parameters: int = 0

    @property
    def final(self):
        return self.w[-1], self.theta[-1]

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["t"] + [f"w{i}" for i in range(self.w.shape[1])]
                         + [f"theta{i}" for i in range(self.theta.shape[1])] + ["diagnostic"])
            for t, w, th, d in zip(self.t, self.w, self.theta, self.diagnostic):
                out.writerow([int(t)] + [repr(float(x)) for x in w]
                             + [repr(float(x)) for x in th] + [repr(float(d))])


def _check_beta(beta, T):
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if T < 1:
        raise ValueError("T must be >= 1")


def damped_mean(avg, value, beta: float):
    """``(1 - beta) * avg + beta * value``; the running summary of a chain."""
    return (1.0 - beta) * avg + beta * value


def _averaged_block(game, w_start, th_start, w_ref, th_ref, K, gamma, eps, beta,
                    chains, where):
    """K inner steps against fixed opponent summaries ``(w_ref, th_ref)``.

    Returns the damped running means of both chains, which start at the
    chains' initial points.
    """
    wc, tc = chains
    wc.z = np.array(w_start, dtype=np.float64)
    tc.z = np.array(th_start, dtype=np.float64)
    w_bar = wc.z.copy()
    th_bar = tc.z.copy()
    data = wc.rng_data
    ref = w_ref[None, :]
    fake = th_ref[None, :]
    for k in range(1, K + 1):
        tc.step(game.theta_grad(tc.z, ref, data), gamma, eps, dict(where, k=k))
        wc.step(game.real_grad(wc.z, data) - game.fake_grad(wc.z, fake, data), gamma, eps, dict(where, k=k))
        w_bar = damped_mean(w_bar, wc.z, beta)
        th_bar = damped_mean(th_bar, tc.z, beta)
    return w_bar, th_bar


def _make_chains(game, st, precondition):
    wc = _Chain(np.zeros(game.dim_w), st[NOISE], game.period, game.confinement, precondition)
    tc = _Chain(np.zeros(game.dim_theta), st[NOISE], game.period, game.confinement, precondition)
    wc.rng_data = st[DATA]
    return wc, tc


def _wrap(game, z):
    return z if game.period is None else np.mod(z, game.period)


def mirror_gan(game, T: int, schedule: SgldSchedule, beta: float = 0.9, seed: int = 0,
               precondition: bool = False) -> ParameterTrace:
    """Damped-mean summary of the MD sampler.

    Outer steps ``t = 1..T-1`` each run ``K_t`` inner Langevin steps for both
    players against the current pair ``(w_t, theta_t)`` and move the pair a
    fraction ``beta`` toward the inner running means. The last row of the
    trace is ``(w_T, theta_T)``.
    """
    _check_beta(beta, T)
    st = substreams(seed)
    w0, th0 = game.init(st[INIT], 1)
    w, th = w0[0], th0[0]
    chains = _make_chains(game, st, precondition)
    ws, ths, diag = [w.copy()], [th.copy()], [game.diagnostic(w, th)]
    for t in range(1, T):
        K, gamma, eps = schedule_at(schedule, t)
        w_bar, th_bar = _averaged_block(game, w, th, w, th, K, gamma, eps, beta, chains, {"t": t})
        w = _wrap(game, damped_mean(w, w_bar, beta))
        th = _wrap(game, damped_mean(th, th_bar, beta))
        ws.append(w.copy())
        ths.append(th.copy())
        diag.append(game.diagnostic(w, th))
    return ParameterTrace(np.arange(1, T + 1), np.array(ws), np.array(ths), np.array(diag), 4)


def mirror_prox_gan(game, T: int, schedule: SgldSchedule, beta: float = 0.9, seed: int = 0,
                    precondition: bool = False) -> ParameterTrace:
    """Damped-mean summary of the MP sampler.

    Per outer step a leader block started at ``(w~_t, theta~_t)`` plays
    against ``(w~_t, theta~_t)`` and yields ``(w_t, theta_t)``; an
    extrapolation block from the same start plays against ``(w_t, theta_t)``
    and yields ``(w~_{t+1}, theta~_{t+1})``. The trace records ``(w_t, theta_t)``.
    """
    _check_beta(beta, T)
    st = substreams(seed)
    w0, th0 = game.init(st[INIT], 1)
    wt, tht = w0[0], th0[0]
    w_prev, th_prev = wt.copy(), tht.copy()
    chains = _make_chains(game, st, precondition)
    ws, ths, diag = [], [], []
    for t in range(1, T + 1):
        K, gamma, eps = schedule_at(schedule, t)
        w_bar, th_bar = _averaged_block(game, wt, tht, wt, tht, K, gamma, eps, beta, chains,
                                        {"t": t, "block": "leader"})
        w = _wrap(game, damped_mean(w_prev, w_bar, beta))
        th = _wrap(game, damped_mean(th_prev, th_bar, beta))
        w_bar, th_bar = _averaged_block(game, wt, tht, w, th, K, gamma, eps, beta, chains,
                                        {"t": t, "block": "extrapolation"})
        wt = _wrap(game, damped_mean(wt, w_bar, beta))
        tht = _wrap(game, damped_mean(tht, th_bar, beta))
        w_prev, th_prev = w, th
        ws.append(w.copy())
        ths.append(th.copy())
        diag.append(game.diagnostic(w, th))
    return ParameterTrace(np.arange(1, T + 1), np.array(ws), np.array(ths), np.array(diag), 8)


# ------------------------------------------------------------ comparisons

def binned_tv(hist_a, hist_b) -> float:
    return 0.5 * float(np.abs(np.asarray(hist_a) - np.asarray(hist_b)).sum())


def bin_density(masses, bins: int) -> np.ndarray:
    """Aggregate grid masses (uniform 1-D grid) into ``bins`` equal bins."""
    masses = np.asarray(masses)
    if masses.size % bins:
        raise ValueError("grid size must be a multiple of the bin count")
    return masses.reshape(bins, -1).sum(axis=1)


def toy_domain(game: KernelTorusGame, points: int = 128) -> GridDomain:
    return GridDomain(game.dim, points, game.period)
