import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixnash.entropy import (LogWeights, entropy, kl_divergence, log_sum_exp, md_update,
                             softmax, tv_norm, uniform)
from mixnash.errors import DomainError

finite_floats = st.floats(-50, 50, allow_nan=False)


def simplex_points(d):
    return arrays(np.float64, d, elements=st.floats(-5, 5)).map(softmax)


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), abs=1e-12)
    assert log_sum_exp([0.0, math.log(3)]) == pytest.approx(math.log(4), abs=1e-15)


def test_log_sum_exp_rejects_nonfinite():
    with pytest.raises(ValueError):
        log_sum_exp([0.0, np.inf])


def test_md_update_examples():
    np.testing.assert_allclose(md_update([0.5, 0.5], [0, 0], 1.0), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(md_update([0.5, 0.5], [math.log(2), 0], 1.0), [1 / 3, 2 / 3], atol=1e-15)
    np.testing.assert_allclose(md_update([1 / 3, 2 / 3], [7.0, -3.0], 0.0), [1 / 3, 2 / 3], atol=1e-15)


def test_md_update_domain_errors():
    with pytest.raises(DomainError):
        md_update([1.0, 0.0], [0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        md_update([0.5, 0.5], [0.0], 1.0)
    with pytest.raises(ValueError):
        md_update([0.6, 0.6], [0.0, 0.0], 1.0)


def test_md_update_extreme_gradient_stays_interior():
    z = md_update([0.5, 0.5], [2000.0, 0.0], 1.0)
    assert z[1] == 1.0 and np.all(np.isfinite(z))


def test_entropy_examples():
    assert entropy(uniform(4)) == pytest.approx(-math.log(4), abs=1e-15)
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy([0.25, 0.75]) == pytest.approx(-0.562335144618, abs=1e-12)


def test_kl_examples():
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    for d in (2, 5, 10):
        assert kl_divergence(uniform(d), uniform(d)) == 0.0
        e = np.eye(d)[0]
        assert kl_divergence(e, uniform(d)) == pytest.approx(math.log(d), abs=1e-14)
    with pytest.raises(DomainError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])


def test_tv_examples():
    assert tv_norm(np.zeros(5)) == 0.0
    assert tv_norm([1.0, -1.0]) == 1.0
    assert tv_norm(np.array([1.0, 0.0]) - np.array([0.5, 0.5])) == 0.5


@given(st.integers(2, 8).flatmap(lambda d: st.tuples(
    simplex_points(d), arrays(np.float64, d, elements=finite_floats),
    arrays(np.float64, d, elements=finite_floats))), st.floats(0.01, 2.0))
def test_md_update_composes(args, eta):
    z, b1, b2 = args
    z = np.clip(z, 1e-300, None)
    z /= z.sum()
    two = md_update(md_update(z, b1, eta), b2, eta)
    one = md_update(z, b1 + b2, eta)
    np.testing.assert_allclose(two, one, atol=1e-12)


@given(arrays(np.float64, st.integers(1, 10), elements=finite_floats), finite_floats)
def test_log_sum_exp_shift(v, c):
    assert log_sum_exp(v + c) == pytest.approx(log_sum_exp(v) + c, abs=1e-10)


@given(st.integers(2, 8).flatmap(lambda d: st.tuples(simplex_points(d), simplex_points(d))))
def test_pinsker_and_nonnegativity(pair):
    z, w = pair
    w = np.clip(w, 1e-300, None)
    w /= w.sum()
    kl = kl_divergence(z, w)
    assert kl >= 0
    assert kl >= 2 * tv_norm(z - w) ** 2 - 1e-12


@given(st.integers(2, 8).flatmap(lambda d: st.tuples(
    simplex_points(d), arrays(np.float64, d, elements=finite_floats))))
def test_fenchel_young(args):
    z, h = args
    # <z, h> <= entropy(z) + lse(h), equality at softmax(h)
    assert np.dot(z, h) <= entropy(z) + log_sum_exp(h) + 1e-9
    s = softmax(h)
    assert np.dot(s, h) == pytest.approx(entropy(s) + log_sum_exp(h), abs=1e-9)


def test_log_weights_match_md_update():
    lw = LogWeights.from_simplex([0.2, 0.3, 0.5])
    b = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(lw.step(b, 0.3).probs(), md_update([0.2, 0.3, 0.5], b, 0.3), atol=1e-15)
