"""Measures on periodic grids and entropic MD/MP on their densities.

A ``GridDomain`` is a uniform grid on the torus ``[0, extent)^dims`` with
midpoint nodes; integrals are Riemann sums with equal cell volumes. A
``GridDensity`` stores the log of a Lebesgue density at each node.

Kernel games pair a payoff kernel ``K(w, theta)`` with a function ``g(w)``.
The maximizing measure ``mu`` lives on the W grid and the minimizing
measure ``nu`` on the Theta grid, mirroring ``q`` and ``p`` of a matrix game.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .prox import StepSizeRule, record_times

TWO_PI = 2.0 * math.pi
NORMALIZATION_ATOL = 1e-10


@dataclass(frozen=True)
class GridDomain:
    dims: int = 1
    points: int = 64
    extent: float = TWO_PI

    def __post_init__(self):
        if self.dims not in (1, 2):
            raise ValueError("only 1-D and 2-D domains are supported")
        if self.points < 1:
            raise ValueError("points per dimension must be >= 1")
        if not (self.extent > 0 and math.isfinite(self.extent)):
            raise ValueError("extent must be positive")

    @property
    def spacing(self) -> float:
        return self.extent / self.points

    @property
    def size(self) -> int:
        return self.points ** self.dims

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dims

    @property
    def total_volume(self) -> float:
        return self.extent ** self.dims

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.points) + 0.5) * self.spacing

    @property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dims)``, row-major over axes."""
        ax = self.axis
        if self.dims == 1:
            return ax[:, None]
        g0, g1 = np.meshgrid(ax, ax, indexing="ij")
        return np.column_stack([g0.ravel(), g1.ravel()])

    def wrap(self, x):
        return np.mod(x, self.extent)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell_volume)

    @classmethod
    def lookup(cls, points: int) -> "GridDomain":
        """Unit-volume cells, so densities coincide with probability masses."""
        return cls(dims=1, points=points, extent=float(points))


def _lse(x):
    mx = x.max()
    return mx + math.log(np.exp(x - mx).sum())


@dataclass(frozen=True)
class GridDensity:
    domain: GridDomain
    log_density: np.ndarray

    def __post_init__(self):
        ld = np.array(self.log_density, dtype=np.float64)
        if ld.shape != (self.domain.size,):
            raise ValueError(f"log_density must have {self.domain.size} entries, got {ld.shape}")
        if not np.all(np.isfinite(ld)):
            raise ValueError("log_density must be finite (strictly positive density)")
        total = np.exp(ld).sum() * self.domain.cell_volume
        if abs(total - 1.0) > NORMALIZATION_ATOL:
            raise ValueError(f"density integrates to {total!r}, not 1")
        ld.setflags(write=False)
        object.__setattr__(self, "log_density", ld)

    @classmethod
    def from_log_weights(cls, domain: GridDomain, logw) -> "GridDensity":
        """Normalize arbitrary finite log-weights into a density."""
        logw = np.asarray(logw, dtype=np.float64)
        return cls(domain, logw - _lse(logw) - math.log(domain.cell_volume))

    @classmethod
    def from_density(cls, domain: GridDomain, rho) -> "GridDensity":
        rho = np.asarray(rho, dtype=np.float64)
        if np.any(rho <= 0):
            raise ValueError("density must be strictly positive")
        return cls.from_log_weights(domain, np.log(rho))

    @classmethod
    def uniform(cls, domain: GridDomain) -> "GridDensity":
        return cls(domain, np.full(domain.size, -math.log(domain.total_volume)))

    @classmethod
    def bump(cls, domain: GridDomain, center=0.0, kappa: float = 1.0) -> "GridDensity":
        """Von Mises shaped bump ``exp(kappa * mean_d cos(2 pi (x_d - c_d)/extent))``."""
        c = np.broadcast_to(np.asarray(center, dtype=np.float64), (domain.dims,))
        phase = TWO_PI / domain.extent * (domain.coords - c)
        return cls.from_log_weights(domain, kappa * np.cos(phase).mean(axis=1))

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_density)

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.domain.cell_volume

    def expect(self, h) -> float:
        """``<mu, h>`` for grid values ``h``."""
        return float(np.dot(self.density, h) * self.domain.cell_volume)

    def write_csv(self, path: str | os.PathLike) -> None:
        write_density_csv(path, self)


def write_density_csv(path, dens: GridDensity) -> None:
    coords = dens.domain.coords
    names = ["x"] if dens.domain.dims == 1 else ["x", "y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["density"])
        for c, r in zip(coords, dens.density):
            w.writerow([repr(float(v)) for v in c] + [repr(float(r))])


def mixture(densities) -> GridDensity:
    """Arithmetic mean of densities on a common domain."""
    densities = list(densities)
    if not densities:
        raise ValueError("mixture of zero densities")
    dom = densities[0].domain
    if any(d.domain != dom for d in densities):
        raise ValueError("densities live on different domains")
    rho = np.mean([d.density for d in densities], axis=0)
    return GridDensity(dom, np.log(rho))


# ------------------------------------------------------------------ kernels
#
# Each kernel evaluates with broadcasting over leading axes of ``w`` and
# ``theta`` (last axis = coordinates) and supplies exact gradients so the
# particle solvers can reuse it.

def _wrap_diff(d, period):
    return (d + 0.5 * period) % period - 0.5 * period


@dataclass(frozen=True)
class CosineKernel:
    """``amp * mean_d cos(freq*(w_d - theta_d))``."""

    amp: float = 1.0
    freq: float = 1.0
    name: str = field(default="cosine", init=False)

    def __call__(self, w, theta):
        return self.amp * np.cos(self.freq * (w - theta)).mean(axis=-1)

    def grad_w(self, w, theta):
        d = w.shape[-1] if np.ndim(w) else 1
        return -self.amp * self.freq * np.sin(self.freq * (w - theta)) / d

    def grad_theta(self, w, theta):
        return -self.grad_w(w, theta)

    @property
    def sup_abs(self) -> float:
        return abs(self.amp)

    def params(self):
        return {"amp": self.amp, "freq": self.freq}


@dataclass(frozen=True)
class GaussianBumpKernel:
    """``amp * exp(-|w - theta|^2 / (2 width^2))`` with periodic distance."""

    amp: float = 1.0
    width: float = 0.5
    period: float = TWO_PI
    name: str = field(default="gaussian_bump", init=False)

    def __call__(self, w, theta):
        d = _wrap_diff(w - theta, self.period)
        return self.amp * np.exp(-(d ** 2).sum(axis=-1) / (2 * self.width ** 2))

    def grad_w(self, w, theta):
        d = _wrap_diff(w - theta, self.period)
        val = self.amp * np.exp(-(d ** 2).sum(axis=-1, keepdims=True) / (2 * self.width ** 2))
        return -val * d / self.width ** 2

    def grad_theta(self, w, theta):
        return -self.grad_w(w, theta)

    @property
    def sup_abs(self) -> float:
        return abs(self.amp)

    def params(self):
        return {"amp": self.amp, "width": self.width, "period": self.period}


@dataclass(frozen=True)
class ConstantKernel:
    value: float = 0.0
    name: str = field(default="constant", init=False)

    def __call__(self, w, theta):
        shape = np.broadcast_shapes(np.shape(w), np.shape(theta))[:-1]
        return np.full(shape, float(self.value))

    def grad_w(self, w, theta):
        return np.zeros(np.broadcast_shapes(np.shape(w), np.shape(theta)))

    grad_theta = grad_w

    @property
    def sup_abs(self) -> float:
        return abs(self.value)

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True)
class MatrixKernel:
    """Piecewise-constant kernel ``K(w, theta) = A[floor(w), floor(theta)]``.

    Meant for unit-spacing lookup domains, where a kernel game on an
    ``m x n`` grid pair is exactly the matrix game ``(A, a)``.
    """

    table: np.ndarray
    name: str = field(default="matrix", init=False)

    def __post_init__(self):
        t = np.array(self.table, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError("lookup table must be 2-D")
        object.__setattr__(self, "table", t)

    def __call__(self, w, theta):
        i = np.floor(np.asarray(w)[..., 0]).astype(int)
        j = np.floor(np.asarray(theta)[..., 0]).astype(int)
        return self.table[i, j]

    def grad_w(self, w, theta):
        return np.zeros(np.broadcast_shapes(np.shape(w), np.shape(theta)))

    grad_theta = grad_w

    @property
    def sup_abs(self) -> float:
        return float(np.abs(self.table).max())

    def params(self):
        return {"table": self.table.tolist()}


@dataclass(frozen=True)
class CosineFunction:
    """``g(w) = amp * mean_d cos(w_d - phase)``; amp = 0 gives g = 0."""

    amp: float = 0.0
    phase: float = 0.0
    name: str = field(default="cosine", init=False)

    def __call__(self, w):
        return self.amp * np.cos(w - self.phase).mean(axis=-1)

    def grad(self, w):
        return -self.amp * np.sin(w - self.phase) / w.shape[-1]

    @property
    def sup_abs(self) -> float:
        return abs(self.amp)

    def params(self):
        return {"amp": self.amp, "phase": self.phase}


@dataclass(frozen=True)
class TableFunction:
    """``g`` read off a vector by node index (pairs with ``MatrixKernel``)."""

    values: np.ndarray
    name: str = field(default="table", init=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.array(self.values, dtype=np.float64))

    def __call__(self, w):
        return self.values[np.floor(np.asarray(w)[..., 0]).astype(int)]

    def grad(self, w):
        return np.zeros_like(np.asarray(w, dtype=np.float64))

    @property
    def sup_abs(self) -> float:
        return float(np.abs(self.values).max())

    def params(self):
        return {"values": self.values.tolist()}


KERNELS = {"cosine": CosineKernel, "gaussian_bump": GaussianBumpKernel,
           "constant": ConstantKernel, "matrix": MatrixKernel}
FUNCTIONS = {"cosine": CosineFunction, "zero": lambda: CosineFunction(0.0), "table": TableFunction}


def make_kernel(name: str, **params):
    try:
        return KERNELS[name](**params)
    except KeyError:
        raise ConfigError(f"unknown kernel {name!r}", key="kernel") from None
    except TypeError as exc:
        raise ConfigError(f"bad parameters for kernel {name!r}: {exc}", key="kernel") from None


def make_function(name: str, **params):
    try:
        return FUNCTIONS[name](**params)
    except KeyError:
        raise ConfigError(f"unknown function {name!r}", key="g") from None
    except TypeError as exc:
        raise ConfigError(f"bad parameters for function {name!r}: {exc}", key="g") from None


class KernelGame:
    """``min_nu max_mu <mu, g> - <mu, G nu>`` discretized on two grids."""

    def __init__(self, kernel, g, W: GridDomain, Theta: GridDomain):
        self.kernel = kernel
        self.g = g
        self.W = W
        self.Theta = Theta
        Kmat = np.asarray(kernel(W.coords[:, None, :], Theta.coords[None, :, :]), dtype=np.float64)
        gvec = np.asarray(g(W.coords), dtype=np.float64)
        if not (np.all(np.isfinite(Kmat)) and np.all(np.isfinite(gvec))):
            raise ValueError("kernel or g is not finite on the grid")
        Kmat.setflags(write=False)
        gvec.setflags(write=False)
        self.K = Kmat
        self.g_values = gvec
        self.sup_K = float(kernel.sup_abs)
        self.sup_g = float(g.sup_abs)

    @classmethod
    def cosine(cls, points: int = 128, amp: float = 1.0, g_amp: float = 0.0, dims: int = 1):
        dom = GridDomain(dims, points)
        return cls(CosineKernel(amp), CosineFunction(g_amp), dom, dom)

    @classmethod
    def from_matrix(cls, A, a=None) -> "KernelGame":
        A = np.asarray(A, dtype=np.float64)
        a = np.zeros(A.shape[0]) if a is None else np.asarray(a, dtype=np.float64)
        return cls(MatrixKernel(A), TableFunction(a),
                   GridDomain.lookup(A.shape[0]), GridDomain.lookup(A.shape[1]))

    @property
    def grad_bound(self) -> float:
        return self.sup_g + self.sup_K

    @property
    def lipschitz(self) -> float:
        return 2.0 * self.sup_K

    def describe(self) -> dict:
        return {
            "kernel": self.kernel.name, "kernel_params": self.kernel.params(),
            "g": self.g.name, "g_params": self.g.params(),
            "W": vars_of(self.W), "Theta": vars_of(self.Theta),
            "sup_K": self.sup_K, "sup_g": self.sup_g,
        }


def vars_of(dom: GridDomain) -> dict:
    return {"dims": dom.dims, "points": dom.points, "extent": dom.extent}


def apply_G(game: KernelGame, nu: GridDensity) -> np.ndarray:
    """``(G nu)(w_i) = sum_j K(w_i, theta_j) nu(theta_j) vol``."""
    if nu.domain != game.Theta:
        raise ValueError("nu must live on the Theta grid")
    return game.K @ nu.density * game.Theta.cell_volume


def apply_Gdag(game: KernelGame, mu: GridDensity) -> np.ndarray:
    """``(G^dag mu)(theta_j) = sum_i K(w_i, theta_j) mu(w_i) vol``."""
    if mu.domain != game.W:
        raise ValueError("mu must live on the W grid")
    return game.K.T @ mu.density * game.W.cell_volume


def md_step_density(mu: GridDensity, h, eta: float) -> GridDensity:
    """Gibbs reweighting ``d mu_+ ∝ exp(-eta h) d mu``."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != mu.log_density.shape:
        raise ValueError("h must be given on the density's grid")
    if not np.all(np.isfinite(h)):
        raise ValueError("h must be finite")
    x = mu.log_density - eta * h
    return GridDensity(mu.domain, x - _lse(x) - math.log(mu.domain.cell_volume))


def grid_duality_gap(game: KernelGame, mu: GridDensity, nu: GridDensity) -> float:
    gap = (np.max(game.g_values - apply_G(game, nu)) + np.max(apply_Gdag(game, mu))
           - mu.expect(game.g_values))
    return float(max(gap, 0.0))


def make_grid_rule(kind: str, game: KernelGame, T: int, D0: float | None = None,
                   eta: float | None = None) -> StepSizeRule:
    """Bound constants for a kernel game: ``M = sup|g| + sup|K|``, ``L = 2 sup|K|``."""
    if D0 is None:
        D0 = math.log(game.W.size) + math.log(game.Theta.size)
    return StepSizeRule(kind=kind, M=game.grad_bound, M_prime=game.grad_bound,
                        L=game.lipschitz, sigma2=0.0, D0=D0, T=T, eta_fixed=eta)


@dataclass
class DensityTrace:
    t: np.ndarray
    gap_ergodic: np.ndarray
    gap_last: np.ndarray
    eta: np.ndarray
    mu_bar: GridDensity
    nu_bar: GridDensity
    mu_last: GridDensity
    nu_last: GridDensity
    constants: dict
    iterates: list | None = None

    @property
    def final_gap(self) -> float:
        return float(self.gap_ergodic[-1])

    def rows(self):
        for row in zip(self.t, self.gap_ergodic, self.gap_last, self.eta):
            yield int(row[0]), float(row[1]), float(row[2]), float(row[3])


class _DensityLoop:
    """Shared bookkeeping for the two density solvers.

    Log-densities are advanced as raw arrays; ``GridDensity`` objects are
    only built for the outputs.
    """

    def __init__(self, game, T, rule, init, stride, keep_iterates):
        if T < 1:
            raise ValueError("T must be >= 1")
        if init is None:
            init = (GridDensity.uniform(game.W), GridDensity.uniform(game.Theta))
        mu0, nu0 = init
        if mu0.domain != game.W or nu0.domain != game.Theta:
            raise ValueError("initial densities must live on (W, Theta)")
        self.game = game
        self.eta = rule.eta
        self.rule = rule
        self.lmu = mu0.log_density.copy()
        self.lnu = nu0.log_density.copy()
        self.vw = game.W.cell_volume
        self.vt = game.Theta.cell_volume
        self.lvw = math.log(self.vw)
        self.lvt = math.log(self.vt)
        self.times = record_times(T, stride)
        self.gap_e = np.empty(len(self.times))
        self.gap_l = np.empty(len(self.times))
        self.nxt = 0
        self.mubar = np.zeros(game.W.size)
        self.nubar = np.zeros(game.Theta.size)
        self.iterates = [] if keep_iterates else None

    def step(self, lmu, lnu, rmu, rnu):
        """MD step from ``(lmu, lnu)`` with derivatives at densities ``(rmu, rnu)``."""
        K, gv, eta = self.game.K, self.game.g_values, self.eta
        h_nu = -(K.T @ rmu * self.vw)
        h_mu = K @ rnu * self.vt - gv
        x = lnu - eta * h_nu
        x -= _lse(x) + self.lvt
        y = lmu - eta * h_mu
        y -= _lse(y) + self.lvw
        if not (np.isfinite(x[0]) and np.isfinite(y[0])):
            raise NumericalError("non-finite density iterate")
        return y, x

    def _gap(self, rmu, rnu):
        K, gv = self.game.K, self.game.g_values
        g = (np.max(gv - K @ rnu * self.vt) + np.max(K.T @ rmu * self.vw)
             - np.dot(rmu, gv) * self.vw)
        return g if g > 0.0 else 0.0

    def visit(self, t, rmu, rnu):
        self.mubar += (rmu - self.mubar) / t
        self.nubar += (rnu - self.nubar) / t
        if self.iterates is not None:
            self.iterates.append((rmu * self.vw, rnu * self.vt))
        if self.nxt < len(self.times) and self.times[self.nxt] == t:
            self.gap_e[self.nxt] = self._gap(self.mubar, self.nubar)
            self.gap_l[self.nxt] = self._gap(rmu, rnu)
            self.nxt += 1

    def finish(self, lmu_last, lnu_last):
        c = self.rule.constants()
        c["game"] = self.game.describe()
        W, Th = self.game.W, self.game.Theta
        return DensityTrace(
            t=self.times.copy(), gap_ergodic=self.gap_e, gap_last=self.gap_l,
            eta=np.full(len(self.times), self.eta),
            mu_bar=GridDensity.from_density(W, self.mubar),
            nu_bar=GridDensity.from_density(Th, self.nubar),
            mu_last=GridDensity.from_log_weights(W, lmu_last),
            nu_last=GridDensity.from_log_weights(Th, lnu_last),
            constants=c, iterates=self.iterates,
        )


def solve_inf_md(game: KernelGame, T: int, rule: StepSizeRule, init=None,
                 stride: int | None = None, keep_iterates: bool = False) -> DensityTrace:
    """``nu <- MD(nu, -G^dag mu)``, ``mu <- MD(mu, -g + G nu)``, simultaneously.

    ``iterates`` (if kept) holds the visited probability masses per node,
    which for a lookup game are the matrix-game strategies ``(q_t, p_t)``.
    """
    loop = _DensityLoop(game, T, rule, init, stride, keep_iterates)
    lmu, lnu = loop.lmu, loop.lnu
    for t in range(1, T + 1):
        rmu = np.exp(lmu)
        rnu = np.exp(lnu)
        loop.visit(t, rmu, rnu)
        lmu, lnu = loop.step(lmu, lnu, rmu, rnu)
    return loop.finish(lmu, lnu)


def solve_inf_mp(game: KernelGame, T: int, rule: StepSizeRule, init=None,
                 stride: int | None = None, keep_iterates: bool = False) -> DensityTrace:
    """Two-stage variant; the ergodic mixture runs over the leader densities."""
    loop = _DensityLoop(game, T, rule, init, stride, keep_iterates)
    lmu_t, lnu_t = loop.lmu, loop.lnu
    for t in range(1, T + 1):
        lmu, lnu = loop.step(lmu_t, lnu_t, np.exp(lmu_t), np.exp(lnu_t))
        rmu = np.exp(lmu)
        rnu = np.exp(lnu)
        lmu_t, lnu_t = loop.step(lmu_t, lnu_t, rmu, rnu)
        loop.visit(t, rmu, rnu)
    return loop.finish(lmu, lnu)
