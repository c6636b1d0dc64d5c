"""Experiment orchestration: configs, rate fits, bound checks, reports.

Configs are INI-style text (``[section]`` headers, ``key = value`` lines).
Every run writes ``summary.json`` (a pure function of the resolved config)
plus trace files, and keeps wall-clock data in ``metadata.json``.
"""
from __future__ import annotations

import configparser
import json
import math
import os
import platform
import time
from dataclasses import dataclass

import numpy as np

from . import finite, foundations, grid, particles, prox, sgld
from .errors import ConfigError

__all__ = ["DEFAULTS", "ExperimentConfig", "RateFit", "BoundCheck", "fit_rate",
           "check_bounds", "run", "SOLVERS"]

SOLVERS = ("md", "mp", "inf_md", "inf_mp", "approx_md", "approx_mp", "mirror_gan",
           "mirror_prox_gan", "foundations", "sgld_check")
DETERMINISTIC_SLACK = 1.05
STOCHASTIC_SLACK = 1.2
MIN_FIT_POINTS = 8
GAP_FLOOR = 1e-14

DEFAULTS = {
    "experiment": {
        "solver": "md", "T": "10000", "seed": "0", "seeds": "", "trace_stride": "",
        "fit_from": "100", "fit_to": "",
    },
    "problem": {
        "game": "matching_pennies", "m": "10", "n": "10", "low": "-1.0", "high": "1.0",
        "game_seed": "0", "matrix": "", "a": "", "game_file": "", "init_p": "", "init_q": "",
        "kernel": "cosine", "kernel_amp": "1.0", "kernel_width": "0.5", "g_amp": "0.0",
        "points": "128", "dims": "1", "init": "uniform", "bump_kappa": "1.0",
        "bump_center_w": "1.0", "bump_center_theta": "4.0",
        "toy": "kernel_torus", "x0": "0.5", "confinement": "0.1", "real_std": "0.0",
        "init_std": "1.0",
    },
    "step": {"rule": "auto", "eta": "", "D0": "", "noise_bound": "0.0"},
    "schedule": {
        "gamma0": "0.01", "eps0": "0.01", "beta": "0.9", "n": "32", "n_prime": "64",
        "precondition": "false", "burn_in": "", "bins": "32",
    },
    "sgld": {
        "gamma": "0.001", "eps": "1.0", "steps": "1000000", "burn_in": "10000",
        "chains": "64", "ks_samples": "10000",
    },
    "foundations": {"trials": "500", "points": "64", "dims": "1"},
}


# ------------------------------------------------------------------ config

class ExperimentConfig:
    """Resolved configuration: defaults overlaid with user values."""

    def __init__(self, values: dict):
        self.values = values

    @classmethod
    def parse(cls, text: str = "") -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}", key="config") from None
        values = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
        for sec in cp.sections():
            if sec not in DEFAULTS:
                raise ConfigError(f"unknown section [{sec}]", key=sec)
            for key, val in cp.items(sec):
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", key=f"{sec}.{key}")
                values[sec][key] = val.strip()
        cfg = cls(values)
        if cfg.get("experiment", "solver") not in SOLVERS:
            raise ConfigError(f"unknown solver {cfg.get('experiment', 'solver')!r}", key="experiment.solver")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.parse(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", key="config") from None

    def set(self, section, key, value):
        self.values[section][key] = str(value)

    def get(self, section, key) -> str:
        return self.values[section][key]

    def _typed(self, section, key, conv, what):
        raw = self.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{section}.{key} must be {what}, got {raw!r}", key=f"{section}.{key}") from None

    def int(self, section, key) -> int:
        return self._typed(section, key, lambda s: int(float(s)) if "e" in s.lower() else int(s), "an integer")

    def float(self, section, key) -> float:
        return self._typed(section, key, float, "a number")

    def bool(self, section, key) -> bool:
        raw = self.get(section, key).lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{section}.{key} must be a boolean", key=f"{section}.{key}")

    def optional_float(self, section, key):
        return None if self.get(section, key) == "" else self.float(section, key)

    def optional_int(self, section, key):
        return None if self.get(section, key) == "" else self.int(section, key)

    def vector(self, section, key):
        raw = self.get(section, key)
        if raw == "":
            return None
        try:
            return np.array([float(x) for x in raw.replace(",", " ").split()])
        except ValueError:
            raise ConfigError(f"{section}.{key} must be numbers", key=f"{section}.{key}") from None

    def as_dict(self) -> dict:
        return {sec: dict(sorted(v.items())) for sec, v in self.values.items()}


# -------------------------------------------------------------- rate / bound

@dataclass
class RateFit:
    slope: float | None
    intercept: float | None
    points: int
    status: str  # "ok" or "indeterminate"

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "points": self.points, "status": self.status}


def fit_rate(t, gap, t_min: float | None = None, t_max: float | None = None) -> RateFit:
    """Least squares of ``log gap`` on ``log t``; tiny gaps are dropped."""
    t = np.asarray(t, dtype=np.float64)
    gap = np.asarray(gap, dtype=np.float64)
    keep = gap > GAP_FLOOR
    if t_min is not None:
        keep &= t >= t_min
    if t_max is not None:
        keep &= t <= t_max
    k = int(keep.sum())
    if k < MIN_FIT_POINTS:
        return RateFit(None, None, k, "indeterminate")
    slope, intercept = np.polyfit(np.log(t[keep]), np.log(gap[keep]), 1)
    return RateFit(float(slope), float(intercept), k, "ok")


def log_spaced_subset(t, gap, per_decade: int = 10):
    """Restrict a trace to its log-grid record times."""
    t = np.asarray(t)
    sel = np.isin(t, prox.log_grid(int(t.max()), per_decade))
    return t[sel], np.asarray(gap)[sel]


@dataclass
class BoundCheck:
    gap: np.ndarray
    bound: np.ndarray
    slack: float

    @property
    def flags(self) -> np.ndarray:
        return self.gap <= self.slack * self.bound

    @property
    def ok(self) -> bool:
        return bool(np.all(self.flags))

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.bound_ratio))

    @property
    def bound_ratio(self):
        return self.gap / self.bound

    def as_dict(self):
        return {"bound_satisfied": self.ok, "violations": int((~self.flags).sum()),
                "worst_ratio": self.worst_ratio, "slack": self.slack}


_REQUIRED = {
    "md_deterministic": ("eta", "D0_bar", "M"),
    "md_stochastic": ("eta", "D0_bar", "M_prime"),
    "mp_deterministic": ("eta", "D0_bar"),
    "mp_stochastic": ("eta", "D0_bar", "sigma2"),
}


def check_bounds(t, gap, constants: dict, slack: float | None = None) -> BoundCheck:
    """Compare gaps with the a-priori gap bound for ``constants['kind']``."""
    kind = constants.get("kind")
    if kind not in _REQUIRED:
        raise ConfigError(f"no bound available for rule {kind!r}", key="step.rule")
    missing = [k for k in _REQUIRED[kind] if constants.get(k) is None]
    if missing:
        raise ConfigError(f"missing constants {missing} for {kind}", key=missing[0])
    if slack is None:
        slack = STOCHASTIC_SLACK if kind.endswith("stochastic") else DETERMINISTIC_SLACK
    bound = prox.gap_bound(kind, constants["eta"], t, constants["D0_bar"], M=constants.get("M"),
                           M_prime=constants.get("M_prime"), sigma2=constants.get("sigma2"))
    return BoundCheck(np.asarray(gap, dtype=np.float64), np.asarray(bound, dtype=np.float64), slack)


# --------------------------------------------------------------- problems

def _matrix_from_text(text):
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([[float(x) for x in r.replace(",", " ").split()] for r in rows])


def build_matrix_game(cfg: ExperimentConfig) -> finite.MatrixGame:
    kind = cfg.get("problem", "game")
    if kind == "matching_pennies":
        return finite.MatrixGame.matching_pennies()
    if kind == "random":
        rng = np.random.default_rng(cfg.int("problem", "game_seed"))
        return finite.MatrixGame.random(cfg.int("problem", "m"), cfg.int("problem", "n"), rng,
                                        cfg.float("problem", "low"), cfg.float("problem", "high"))
    if kind == "inline":
        try:
            A = _matrix_from_text(cfg.get("problem", "matrix"))
            return finite.MatrixGame(A, cfg.vector("problem", "a"))
        except ValueError as exc:
            raise ConfigError(f"bad inline game: {exc}", key="problem.matrix") from None
    if kind == "file":
        try:
            return finite.read_game(cfg.get("problem", "game_file"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad game file: {exc}", key="problem.game_file") from None
    raise ConfigError(f"unknown matrix game {kind!r}", key="problem.game")


def matrix_init(cfg, game):
    p, q = cfg.vector("problem", "init_p"), cfg.vector("problem", "init_q")
    if p is None and q is None:
        return None
    p = np.full(game.n, 1.0 / game.n) if p is None else p
    q = np.full(game.m, 1.0 / game.m) if q is None else q
    return p, q


def build_kernel_game(cfg) -> grid.KernelGame:
    name = cfg.get("problem", "kernel")
    amp = cfg.float("problem", "kernel_amp")
    if name == "cosine":
        kernel = grid.CosineKernel(amp)
    elif name == "gaussian_bump":
        kernel = grid.GaussianBumpKernel(amp, cfg.float("problem", "kernel_width"))
    elif name == "constant":
        kernel = grid.ConstantKernel(amp)
    else:
        raise ConfigError(f"unknown kernel {name!r}", key="problem.kernel")
    dom = grid.GridDomain(cfg.int("problem", "dims"), cfg.int("problem", "points"))
    return grid.KernelGame(kernel, grid.CosineFunction(cfg.float("problem", "g_amp")), dom, dom)


def kernel_init(cfg, kg):
    kind = cfg.get("problem", "init")
    if kind == "uniform":
        return grid.GridDensity.uniform(kg.W), grid.GridDensity.uniform(kg.Theta)
    if kind == "bump":
        kap = cfg.float("problem", "bump_kappa")
        return (grid.GridDensity.bump(kg.W, cfg.float("problem", "bump_center_w"), kap),
                grid.GridDensity.bump(kg.Theta, cfg.float("problem", "bump_center_theta"), kap))
    raise ConfigError(f"unknown init {kind!r}", key="problem.init")


def build_toy(cfg):
    toy = cfg.get("problem", "toy")
    if toy == "kernel_torus":
        kg = build_kernel_game(cfg)
        return particles.KernelTorusGame(kg.kernel, kg.g, kg.W.dims, kg.W.extent,
                                         n=cfg.int("schedule", "n"))
    if toy == "dirac_gan":
        try:
            return particles.DiracGanGame(cfg.float("problem", "x0"), cfg.float("problem", "confinement"),
                                          cfg.float("problem", "real_std"), cfg.int("schedule", "n"),
                                          init_std=cfg.float("problem", "init_std"))
        except ValueError as exc:
            raise ConfigError(str(exc), key="problem.confinement") from None
    raise ConfigError(f"unknown toy game {toy!r}", key="problem.toy")


def resolve_rule_kind(cfg, solver):
    rule = cfg.get("step", "rule")
    if rule != "auto":
        if rule not in prox.RULE_KINDS:
            raise ConfigError(f"unknown step rule {rule!r}", key="step.rule")
        return rule
    base = "md" if solver in ("md", "inf_md") else "mp"
    noisy = cfg.float("step", "noise_bound") > 0
    return f"{base}_{'stochastic' if noisy else 'deterministic'}"


# ------------------------------------------------------------------ running

def _seeds(cfg):
    raw = cfg.get("experiment", "seeds")
    if raw:
        try:
            return [int(s) for s in raw.replace(",", " ").split()]
        except ValueError:
            raise ConfigError("experiment.seeds must be integers", key="experiment.seeds") from None
    return [cfg.int("experiment", "seed")]


def _rate_block(t, gap, constants, cfg, T, bound_kind=None):
    lo = cfg.optional_float("experiment", "fit_from")
    hi = cfg.optional_float("experiment", "fit_to")
    ts, gs = log_spaced_subset(t, gap)
    fit = fit_rate(ts, gs, lo, hi if hi is not None else T)
    out = {"final_gap": float(gap[-1]), "slope": fit.slope, "fit": fit.as_dict()}
    if constants.get("kind") == "fixed" and bound_kind is not None:
        # the two-term bounds hold at any step size (MP needs eta <= 4/L)
        constants = dict(constants, kind=bound_kind)
    if constants.get("kind") in _REQUIRED:
        bc = check_bounds(t, gap, constants)
        out.update(bc.as_dict())
    else:
        out["bound_satisfied"] = None
    out["constants"] = {k: constants.get(k) for k in ("kind", "eta", "M", "M_prime", "L", "sigma2", "D0_bar")}
    return out


def _run_matrix(cfg, solver, outdir):
    game = build_matrix_game(cfg)
    T = cfg.int("experiment", "T")
    stride = cfg.optional_int("experiment", "trace_stride")
    kind = resolve_rule_kind(cfg, solver)
    nb = cfg.float("step", "noise_bound")
    rule = prox.make_rule(kind, game, T, cfg.optional_float("step", "D0"), nb, cfg.optional_float("step", "eta"))
    init = matrix_init(cfg, game)
    seeds = _seeds(cfg)
    if nb > 0:
        traces = prox.solve_seeds(solver, game, T, rule, nb, seeds, init, stride)
    else:
        fn = prox.solve_md if solver == "md" else prox.solve_mp
        traces = [fn(game, T, rule, init=init, stride=stride)]
    t = traces[0].t
    gap = np.mean([tr.gap_ergodic for tr in traces], axis=0)
    last = np.mean([tr.gap_last for tr in traces], axis=0)
    prox.write_trace_csv(os.path.join(outdir, "trace.csv"),
                         ((int(a), float(b), float(c), float(rule.eta)) for a, b, c in zip(t, gap, last)))
    noisy = "stochastic" if nb > 0 else "deterministic"
    summary = _rate_block(t, gap, traces[0].constants | {"noise_bound": nb}, cfg, T, f"{solver}_{noisy}")
    summary["seeds"] = seeds
    summary["p_bar"] = traces[0].p_bar.tolist()
    summary["q_bar"] = traces[0].q_bar.tolist()
    return summary


def _run_kernel(cfg, solver, outdir):
    kg = build_kernel_game(cfg)
    T = cfg.int("experiment", "T")
    kind = resolve_rule_kind(cfg, solver)
    if kind.endswith("stochastic"):
        raise ConfigError("density solvers use exact derivatives", key="step.noise_bound")
    rule = grid.make_grid_rule(kind, kg, T, cfg.optional_float("step", "D0"), cfg.optional_float("step", "eta"))
    fn = grid.solve_inf_md if solver == "inf_md" else grid.solve_inf_mp
    tr = fn(kg, T, rule, init=kernel_init(cfg, kg), stride=cfg.optional_int("experiment", "trace_stride"))
    prox.write_trace_csv(os.path.join(outdir, "trace.csv"), tr.rows())
    grid.write_density_csv(os.path.join(outdir, "mu_bar.csv"), tr.mu_bar)
    grid.write_density_csv(os.path.join(outdir, "nu_bar.csv"), tr.nu_bar)
    summary = _rate_block(tr.t, tr.gap_ergodic, tr.constants, cfg, T, f"{solver[4:]}_deterministic")
    summary["game"] = kg.describe()
    return summary


def ensemble_gap(kg: grid.KernelGame, w, theta, floor: float = 1e-3) -> float:
    """Grid gap of histogram densities, mixed with a little uniform mass."""
    def dens(dom, x):
        edges = np.linspace(0.0, dom.extent, dom.points + 1)
        h = np.histogram(x[:, 0], bins=edges)[0] / len(x)
        return grid.GridDensity.from_density(dom, (1 - floor) * h / dom.cell_volume + floor / dom.total_volume)
    return grid.grid_duality_gap(kg, dens(kg.W, w), dens(kg.Theta, theta))


def _run_particles(cfg, solver, outdir):
    toy = build_toy(cfg)
    T = cfg.int("experiment", "T")
    seed = cfg.int("experiment", "seed")
    sch = sgld.SgldSchedule(cfg.float("schedule", "gamma0"), cfg.float("schedule", "eps0"))
    if solver in ("approx_md", "approx_mp"):
        fn = particles.approx_inf_md if solver == "approx_md" else particles.approx_inf_mp
        run_ = fn(toy, T, sch, cfg.int("schedule", "n_prime"), seed, cfg.optional_int("schedule", "burn_in"))
        kg = build_kernel_game(cfg) if toy.name == "kernel_torus" else None
        rows = []
        for t, (w, th) in enumerate(zip(run_.W, run_.Theta), start=1):
            diag = ensemble_gap(kg, w, th) if kg is not None and toy.dim == 1 else float("nan")
            rows.append([t, *w.mean(axis=0), *th.mean(axis=0), diag])
        _write_rows(os.path.join(outdir, "trace.csv"), toy, rows)
        summary = {"generations": len(run_.W), "returned_index": run_.index,
                   "stored_particles": run_.stored_particles}
        if kg is not None and toy.dim == 1:
            bins = cfg.int("schedule", "bins")
            ref = grid.solve_inf_md(kg, T, grid.make_grid_rule("fixed", kg, T, eta=1.0 / sch.eps0 ** 2))
            summary["binned_tv_w"] = particles.binned_tv(
                run_.histogram("w", bins, toy.period), particles.bin_density(ref.mu_bar.masses, bins))
            summary["binned_tv_theta"] = particles.binned_tv(
                run_.histogram("theta", bins, toy.period), particles.bin_density(ref.nu_bar.masses, bins))
        return summary
    fn = particles.mirror_gan if solver == "mirror_gan" else particles.mirror_prox_gan
    tr = fn(toy, T, sch, cfg.float("schedule", "beta"), seed, cfg.bool("schedule", "precondition"))
    tr.write_csv(os.path.join(outdir, "trace.csv"))
    w, th = tr.final
    return {"w_final": w.tolist(), "theta_final": th.tolist(), "diagnostic_final": float(tr.diagnostic[-1]),
            "stored_parameters": tr.stored_parameters}


def _write_rows(path, toy, rows):
    import csv
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t"] + [f"w{i}" for i in range(toy.dim_w)]
                     + [f"theta{i}" for i in range(toy.dim_theta)] + ["diagnostic"])
        for r in rows:
            out.writerow([r[0]] + [repr(float(x)) for x in r[1:]])


def run_foundations(cfg, outdir=None):
    dom = grid.GridDomain(cfg.int("foundations", "dims"), cfg.int("foundations", "points"))
    res = foundations.foundations_suite(dom, cfg.int("foundations", "trials"), cfg.int("experiment", "seed"))
    body = {it: r.as_dict() for it, r in res.items()}
    return {"items": body, "all_pass": all(r.passed for r in res.values())}


def run_sgld_check(cfg, outdir=None):
    from scipy import stats

    gamma = cfg.float("sgld", "gamma")
    steps = cfg.int("sgld", "steps")
    burn = cfg.int("sgld", "burn_in")
    chains = cfg.int("sgld", "chains")
    n_ks = cfg.int("sgld", "ks_samples")
    seed = cfg.int("experiment", "seed")
    per_chain = math.ceil(n_ks / chains)
    thin = (steps - burn) // per_chain
    res = sgld.run_chains(lambda x: x, np.zeros((chains, 1)), steps, gamma, cfg.float("sgld", "eps"),
                          seed=seed, burn_in=burn, thin_every=thin)
    sample = res.thinned[:n_ks, 0]
    ref = np.random.default_rng([seed, 99]).standard_normal(len(sample))
    ks = stats.ks_2samp(sample, ref)
    crit = sgld.ks_critical_value(len(sample), len(ref))
    mean, var = float(res.mean[0]), float(res.variance[0])
    return {
        "mean": mean, "variance": var, "ks_statistic": float(ks.statistic), "ks_critical_1pct": crit,
        "ks_samples": len(sample), "chains": chains,
        "mean_ok": abs(mean) <= 0.02, "variance_ok": abs(var - 1) <= 0.05,
        "ks_ok": float(ks.statistic) < crit,
        "all_pass": abs(mean) <= 0.02 and abs(var - 1) <= 0.05 and float(ks.statistic) < crit,
    }


def run(cfg: ExperimentConfig, outdir: str) -> dict:
    """Run the configured solver; write artifacts; return the summary dict."""
    os.makedirs(outdir, exist_ok=True)
    solver = cfg.get("experiment", "solver")
    started = time.time()
    if solver in ("md", "mp"):
        summary = _run_matrix(cfg, solver, outdir)
    elif solver in ("inf_md", "inf_mp"):
        summary = _run_kernel(cfg, solver, outdir)
    elif solver in ("approx_md", "approx_mp", "mirror_gan", "mirror_prox_gan"):
        summary = _run_particles(cfg, solver, outdir)
    elif solver == "foundations":
        summary = run_foundations(cfg)
    else:
        summary = run_sgld_check(cfg)
    summary = {"solver": solver, "config": cfg.as_dict(), **summary}
    write_json(os.path.join(outdir, "summary.json"), summary)
    write_json(os.path.join(outdir, "metadata.json"), {
        "started": started, "elapsed_seconds": time.time() - started,
        "python": platform.python_version(), "numpy": np.__version__,
    })
    return summary


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
