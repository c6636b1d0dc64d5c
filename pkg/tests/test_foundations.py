import math

import numpy as np
import pytest

from mixnash.foundations import (ITEMS, foundations_suite, gibbs, log_partition, oscillation,
                                 random_density, relative_entropy, report_json, run_item, sup_norm,
                                 tv_distance)
from mixnash.grid import GridDensity, GridDomain

DOM = GridDomain(1, 64)


@pytest.mark.parametrize("item", list("abcdefghi"))
def test_items_hold_on_default_batch(item):
    res = run_item(item, DOM, 500, 0)
    assert res.passed, res.as_dict()


def test_identities_are_tight():
    for item in "acegh":
        assert run_item(item, DOM, 200, 0).worst_residual <= 1e-9


def test_oscillation_forms_never_violated():
    for seed in range(3):
        for item in "fj":
            assert run_item(item, DOM, 500, seed).oscillation_violation <= 1e-12


def test_gibbs_equality_constant_function():
    ref = random_density(DOM, np.random.default_rng(1))
    c = 2.5
    h = np.full(DOM.size, c)
    assert math.log(ref.expect(np.exp(h))) == pytest.approx(c, abs=1e-12)
    star = GridDensity.from_log_weights(DOM, h + ref.log_density)
    assert star.expect(h) - relative_entropy(star, ref) == pytest.approx(c, abs=1e-12)


def test_bregman_of_identical_measures():
    mu = random_density(DOM, np.random.default_rng(2))
    assert relative_entropy(mu, mu) == 0.0


def test_sup_norm_smoothness_counterexample():
    # alternating +-s tilt moves mass tanh(s)/2 in half-L1, more than s/4
    s = 0.1
    h = np.zeros(DOM.size)
    d = s * np.where(np.arange(DOM.size) % 2 == 0, 1.0, -1.0)
    tv = tv_distance(gibbs(DOM, h + d), gibbs(DOM, h))
    assert tv == pytest.approx(math.tanh(s) / 2, rel=1e-12)
    assert tv > 0.25 * sup_norm(d)
    assert tv <= 0.25 * oscillation(d)


def test_log_partition_of_uniform():
    assert log_partition(DOM, np.zeros(DOM.size)) == pytest.approx(math.log(DOM.total_volume), abs=1e-12)


def test_report_shape():
    res = foundations_suite(DOM, trials=5, seed=0)
    assert set(res) == set(ITEMS)
    import json
    body = json.loads(report_json(res))
    assert "all_pass" in body and body["a"]["trials"] == 5
    with pytest.raises(ValueError):
        foundations_suite(DOM, trials=0)
