"""Numerical checks of the entropic mirror-map calculus on a grid.

Densities and functions live on a ``GridDomain``; integrals are the grid's
Riemann sums, so every identity below is exact up to rounding. Each item
draws ``trials`` random tuples from its own stream ``(seed, item, trial)``
and records the worst identity residual and the worst inequality violation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import GridDensity, GridDomain, md_step_density

IDENTITY_TOL = 1e-9
INEQUALITY_SLACK = 1e-12
ITEMS = "abcdefghij"
ITEM_NAMES = {
    "a": "gibbs_variational_equality",
    "b": "fenchel_conjugacy",
    "c": "bregman_is_relative_entropy",
    "d": "strong_convexity_tv",
    "e": "duality_with_constant_shift",
    "f": "conjugate_smoothness",
    "g": "conjugate_bregman_duality",
    "h": "three_point_identity",
    "i": "md_iterate_characterization",
    "j": "mirror_prox_master_inequality",
}
STRONG_CONVEXITY = 4.0


# ------------------------------------------------- measure-level primitives

def _lse(x):
    mx = x.max()
    return mx + math.log(np.exp(x - mx).sum())


def inner(mu: GridDensity, h) -> float:
    return mu.expect(h)


def neg_entropy(mu: GridDensity) -> float:
    """``Phi(mu) = int rho log rho dz``."""
    return float(np.dot(mu.density, mu.log_density) * mu.domain.cell_volume)


def log_partition(domain: GridDomain, h) -> float:
    """``Phi*(h) = log int exp(h) dz``."""
    return float(_lse(np.asarray(h, dtype=np.float64)) + math.log(domain.cell_volume))


def d_neg_entropy(mu: GridDensity) -> np.ndarray:
    return 1.0 + mu.log_density


def gibbs(domain: GridDomain, h) -> GridDensity:
    """``dPhi*(h)``: the density proportional to ``exp(h)``."""
    return GridDensity.from_log_weights(domain, h)


def relative_entropy(mu: GridDensity, mu_ref: GridDensity) -> float:
    return inner(mu, mu.log_density - mu_ref.log_density)


def bregman_conjugate(domain: GridDomain, h, h_ref) -> float:
    """``D_{Phi*}(h, h_ref)``."""
    return (log_partition(domain, h) - log_partition(domain, h_ref)
            - inner(gibbs(domain, h_ref), np.asarray(h) - h_ref))


def tv_distance(mu: GridDensity, nu: GridDensity) -> float:
    """Half the L1 distance between densities."""
    return 0.5 * float(np.abs(mu.density - nu.density).sum() * mu.domain.cell_volume)


def sup_norm(h) -> float:
    return float(np.max(np.abs(h)))


def oscillation(h) -> float:
    """``max h - min h``; the seminorm dual to half-L1 on zero-mass measures."""
    return float(np.max(h) - np.min(h))


# ----------------------------------------------------------- random inputs

def _log_uniform(rng, lo=0.1, hi=10.0):
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def random_density(domain: GridDomain, rng) -> GridDensity:
    """Softmax of standard normals at a log-uniform temperature in [0.1, 10]."""
    temp = _log_uniform(rng)
    return GridDensity.from_log_weights(domain, rng.standard_normal(domain.size) / temp)


def random_function(domain: GridDomain, rng) -> np.ndarray:
    return rng.standard_normal(domain.size) * _log_uniform(rng)


# ------------------------------------------------------------------- items

def _item_a(dom, rng):
    ref = random_density(dom, rng)
    h = random_function(dom, rng)
    star = GridDensity.from_log_weights(dom, h + ref.log_density)
    lhs = math.log(inner(ref, np.exp(h - h.max()))) + h.max()
    rhs = inner(star, h) - relative_entropy(star, ref)
    # any other measure stays below the supremum
    other = random_density(dom, rng)
    return [abs(lhs - rhs)], [inner(other, h) - relative_entropy(other, ref) - lhs]


def _item_b(dom, rng):
    mu = random_density(dom, rng)
    h = random_function(dom, rng)
    ps, p = log_partition(dom, h), neg_entropy(mu)
    viol = [inner(mu, h) - p - ps]  # Fenchel-Young, both directions are the same inequality
    g = gibbs(dom, h)
    eq1 = ps - (inner(g, h) - neg_entropy(g))
    dphi = d_neg_entropy(mu)
    eq2 = p - (inner(mu, dphi) - log_partition(dom, dphi))
    return [abs(eq1), abs(eq2)], viol


def _item_c(dom, rng):
    mu, ref = random_density(dom, rng), random_density(dom, rng)
    breg = neg_entropy(mu) - neg_entropy(ref) - (inner(mu, d_neg_entropy(ref)) - inner(ref, d_neg_entropy(ref)))
    return [abs(breg - relative_entropy(mu, ref))], []


def _item_d(dom, rng):
    mu, ref = random_density(dom, rng), random_density(dom, rng)
    lam = rng.uniform(0.0, 1.0)
    mix = GridDensity.from_density(dom, lam * mu.density + (1 - lam) * ref.density)
    rhs = (lam * neg_entropy(mu) + (1 - lam) * neg_entropy(ref)
           - 0.5 * STRONG_CONVEXITY * lam * (1 - lam) * tv_distance(mu, ref) ** 2)
    return [], [neg_entropy(mix) - rhs]


def _item_e(dom, rng):
    mu, ref = random_density(dom, rng), random_density(dom, rng)
    c = rng.normal(0.0, 10.0)
    kl = relative_entropy(mu, ref)
    d0 = bregman_conjugate(dom, d_neg_entropy(ref), d_neg_entropy(mu))
    dc = bregman_conjugate(dom, d_neg_entropy(ref) + c, d_neg_entropy(mu))
    return [abs(kl - d0), abs(kl - dc)], []


def _item_f(dom, rng):
    h, h2 = random_function(dom, rng), random_function(dom, rng)
    s = sup_norm(h - h2)
    tv = tv_distance(gibbs(dom, h), gibbs(dom, h2))
    curv = (log_partition(dom, h) - log_partition(dom, h2)
            - inner(gibbs(dom, h2), h - h2))
    o = oscillation(h - h2)
    return [], [tv - 0.25 * s, curv - 0.125 * s * s], [tv - 0.25 * o, curv - 0.125 * o * o]


def _item_g(dom, rng):
    h, h2 = random_function(dom, rng), random_function(dom, rng)
    lhs = bregman_conjugate(dom, h, h2)
    rhs = relative_entropy(gibbs(dom, h2), gibbs(dom, h))
    return [abs(lhs - rhs)], []


def _item_h(dom, rng):
    mu, mu1, mu2 = (random_density(dom, rng) for _ in range(3))
    lhs = inner(mu2, d_neg_entropy(mu1) - d_neg_entropy(mu)) - inner(mu, d_neg_entropy(mu1) - d_neg_entropy(mu))
    rhs = relative_entropy(mu, mu1) + relative_entropy(mu2, mu) - relative_entropy(mu2, mu1)
    return [abs(lhs - rhs)], []


def _item_i(dom, rng):
    mu = random_density(dom, rng)
    h = random_function(dom, rng)
    eta = _log_uniform(rng, 0.01, 1.0)
    plus = md_step_density(mu, h, eta)
    shift = d_neg_entropy(plus) - d_neg_entropy(mu) + eta * h
    # optimality form: <mu' - mu'', eta h> = <mu' - mu'', dPhi(mu) - dPhi(mu_+)>
    a, b = random_density(dom, rng), random_density(dom, rng)
    diff = d_neg_entropy(mu) - d_neg_entropy(plus)
    opt = (inner(a, eta * h) - inner(b, eta * h)) - (inner(a, diff) - inner(b, diff))
    return [float(shift.max() - shift.min()), abs(opt)], []


def _item_j(dom, rng):
    tilde = random_density(dom, rng)
    star = random_density(dom, rng)
    h, h2 = random_function(dom, rng), random_function(dom, rng)
    eta = _log_uniform(rng, 0.01, 1.0)
    alpha = STRONG_CONVEXITY
    lead = md_step_density(tilde, h, eta)
    plus = md_step_density(tilde, h2, eta)
    lhs = inner(lead, eta * h2) - inner(star, eta * h2)
    base = (relative_entropy(star, tilde) - relative_entropy(star, plus)
            - alpha / 2 * tv_distance(lead, tilde) ** 2)
    rhs = base + eta ** 2 / (2 * alpha) * sup_norm(h - h2) ** 2
    rhs_osc = base + eta ** 2 / (2 * alpha) * oscillation(h - h2) ** 2
    return [], [lhs - rhs], [lhs - rhs_osc]


CHECKS = {"a": _item_a, "b": _item_b, "c": _item_c, "d": _item_d, "e": _item_e,
          "f": _item_f, "g": _item_g, "h": _item_h, "i": _item_i, "j": _item_j}


@dataclass
class ItemResult:
    item: str
    name: str
    worst_residual: float
    worst_violation: float
    trials: int
    failures: int
    oscillation_violation: float | None = None

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def as_dict(self) -> dict:
        return {
            "name": self.name, "worst_residual": self.worst_residual,
            "worst_violation": self.worst_violation, "trials": self.trials,
            "failures": self.failures, "pass": self.passed,
            "oscillation_form_violation": self.oscillation_violation,
        }


def run_item(item: str, domain: GridDomain, trials: int, seed: int) -> ItemResult:
    fn = CHECKS[item]
    worst_res = 0.0
    worst_viol = -math.inf
    failures = 0
    worst_osc = None
    for k in range(trials):
        rng = np.random.default_rng([seed, ITEMS.index(item), k])
        residuals, violations, *extra = fn(domain, rng)
        if extra:
            worst_osc = max(max(extra[0]), -math.inf if worst_osc is None else worst_osc)
        r = max(residuals, default=0.0)
        v = max(violations, default=-math.inf)
        worst_res = max(worst_res, r)
        worst_viol = max(worst_viol, v)
        if r > IDENTITY_TOL or v > INEQUALITY_SLACK or not math.isfinite(r):
            failures += 1
    return ItemResult(item, ITEM_NAMES[item], float(worst_res),
                      float(worst_viol) if math.isfinite(worst_viol) else 0.0, trials, failures,
                      None if worst_osc is None else float(worst_osc))


def foundations_suite(domain: GridDomain | None = None, trials: int = 500, seed: int = 0,
                      items: str = ITEMS) -> dict:
    """Run the property checks and return ``{item: ItemResult}``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    domain = GridDomain(1, 64) if domain is None else domain
    return {it: run_item(it, domain, trials, seed) for it in items}


def report_json(results: dict) -> str:
    body = {it: r.as_dict() for it, r in results.items()}
    body["all_pass"] = all(r.passed for r in results.values())
    return json.dumps(body, indent=2, sort_keys=True)
