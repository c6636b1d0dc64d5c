import json
import math

import numpy as np
import pytest

from mixnash import harness
from mixnash.errors import ConfigError
from mixnash.finite import MatrixGame
from mixnash.harness import ExperimentConfig, check_bounds, fit_rate
from mixnash.prox import make_rule, solve_md, solve_seeds

TILTED_PENNIES = """
[experiment]
solver = md
T = 10000
[problem]
game = matching_pennies
init_p = 0.9 0.1
init_q = 0.9 0.1
"""


def test_fit_rate_power_laws():
    t = np.unique(np.logspace(0, 5, 60).astype(int))
    for slope in (-0.5, -1.0):
        fit = fit_rate(t, 3.7 * t ** slope)
        assert fit.status == "ok"
        assert fit.slope == pytest.approx(slope, abs=1e-6)
        assert fit.intercept == pytest.approx(math.log(3.7), abs=1e-6)


def test_fit_rate_indeterminate():
    t = np.arange(1, 100)
    assert fit_rate(t, np.zeros_like(t, dtype=float)).status == "indeterminate"
    gaps = np.where(t < 95, 0.0, 1.0 / t)
    assert fit_rate(t, gaps).slope is None
    assert fit_rate(t[:7], 1.0 / t[:7]).status == "indeterminate"


def test_check_bounds_negative_control():
    game = MatrixGame.random(10, 10, np.random.default_rng(0))
    rule = make_rule("md_deterministic", game, 2000)
    tr = solve_md(game, 2000, rule)
    good = check_bounds(tr.t, tr.gap_ergodic, rule.constants())
    assert good.ok and good.flags.all()
    inflated = tr.gap_ergodic.copy()
    inflated[::3] = 2 * good.bound[::3]
    bad = check_bounds(tr.t, inflated, rule.constants())
    assert not bad.ok
    np.testing.assert_array_equal(~bad.flags[::3], np.ones(len(bad.flags[::3]), bool))


def test_check_bounds_missing_constants():
    with pytest.raises(ConfigError) as err:
        check_bounds([1, 2], [0.1, 0.1], {"kind": "md_deterministic", "eta": 0.1, "D0_bar": 1.0})
    assert err.value.key == "M"
    with pytest.raises(ConfigError):
        check_bounds([1], [0.1], {"kind": "fixed"})


def test_check_bounds_stochastic_mp_twenty_seeds():
    game = MatrixGame.random(10, 10, np.random.default_rng(1))
    rule = make_rule("mp_stochastic", game, 10**4, noise_bound=0.5)
    traces = solve_seeds("mp", game, 10**4, rule, 0.5, list(range(20)))
    mean = np.mean([tr.gap_ergodic for tr in traces], axis=0)
    res = check_bounds(traces[0].t, mean, traces[0].constants)
    assert res.slack == 1.2 and res.ok


def test_check_bounds_tilted_pennies_run():
    """Literal surrogate on the tilted-start pennies trace."""
    cfg = ExperimentConfig.parse(TILTED_PENNIES)
    game = harness.build_matrix_game(cfg)
    rule = make_rule("md_deterministic", game, 10**4)
    tr = solve_md(game, 10**4, rule, init=harness.matrix_init(cfg, game))
    assert check_bounds(tr.t, tr.gap_ergodic, rule.constants()).ok


def test_config_defaults_and_errors():
    cfg = ExperimentConfig.parse("")
    assert cfg.get("schedule", "beta") == "0.9"
    assert cfg.float("schedule", "gamma0") == 0.01
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse("[experiment]\nsolver = newton\n")
    assert err.value.key == "experiment.solver"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse("[problem]\ncolour = red\n")
    assert err.value.key == "problem.colour"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse("no section here")
    assert err.value.key == "config"
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.parse("[experiment]\nT = ten\n").int("experiment", "T")
    assert err.value.key == "experiment.T"


def test_run_pennies_report(tmp_path):
    summary = harness.run(ExperimentConfig.parse(TILTED_PENNIES), str(tmp_path))
    rows = (tmp_path / "trace.csv").read_text().splitlines()
    assert rows[0] == "t,gap_ergodic,gap_last,eta"
    assert 200 <= len(rows) - 1 <= 260
    stored = json.loads((tmp_path / "summary.json").read_text())
    assert stored["config"]["schedule"]["beta"] == "0.9"
    assert set(stored["constants"]) >= {"M", "L", "D0_bar", "sigma2"}
    # frozen from the probability-space reference loop in test_prox
    assert stored["final_gap"] == pytest.approx(0.021044032533817, rel=1e-9)
    assert summary["fit"]["points"] >= 8
    assert summary["slope"] <= -0.35


def test_run_pennies_slope_matches_reference(tmp_path):
    from test_prox import TILTED, reference_md

    from mixnash.finite import duality_gap
    from mixnash.harness import log_spaced_subset

    summary = harness.run(ExperimentConfig.parse(TILTED_PENNIES), str(tmp_path))
    game = MatrixGame.matching_pennies()
    T = 10**4
    pb, qb = reference_md(game, T, make_rule("md_deterministic", game, T).eta, *TILTED)
    t, _ = log_spaced_subset(np.arange(1, T + 1), np.zeros(T))
    ref = fit_rate(t, [duality_gap(game, pb[k - 1], qb[k - 1]) for k in t], 100, T)
    assert ref.slope == pytest.approx(-0.877227292220, abs=1e-9)
    assert summary["slope"] == pytest.approx(ref.slope, abs=1e-9)


def test_reports_byte_reproducible(tmp_path):
    text = "[experiment]\nsolver = mp\nT = 3000\nseeds = 0 1 2\n[problem]\ngame = random\n[step]\nnoise_bound = 0.5\n"
    for d in ("a", "b"):
        harness.run(ExperimentConfig.parse(text), str(tmp_path / d))
    for name in ("summary.json", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "metadata.json").exists()


def test_run_density_and_particle_solvers(tmp_path):
    s = harness.run(ExperimentConfig.parse(
        "[experiment]\nsolver = inf_md\nT = 500\n[problem]\npoints = 32\ninit = bump\n"), str(tmp_path / "d"))
    assert s["bound_satisfied"] is True
    assert (tmp_path / "d" / "mu_bar.csv").exists()
    s = harness.run(ExperimentConfig.parse(
        "[experiment]\nsolver = approx_mp\nT = 3\n[problem]\npoints = 32\n[schedule]\nn_prime = 8\n"), str(tmp_path / "p"))
    assert s["stored_particles"] == 8 * (3 + 3 + 4 + 4)
    s = harness.run(ExperimentConfig.parse(
        "[experiment]\nsolver = mirror_prox_gan\nT = 20\n[problem]\ntoy = dirac_gan\n"), str(tmp_path / "g"))
    header = (tmp_path / "g" / "trace.csv").read_text().splitlines()[0]
    assert header == "t,w0,theta0,diagnostic"


def test_foundations_report():
    """All ten items on the 64-point torus, 500 trials."""
    s = harness.run_foundations(ExperimentConfig.parse(""))
    assert s["all_pass"], {k: v["failures"] for k, v in s["items"].items()}
