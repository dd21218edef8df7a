from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import binom

from tfde.weights import check_lemma31, tempered_weights, untempered_weights


def _product_form(alpha, K):
    # (-1)^k prod_{m<k} (alpha - m) / k!, evaluated term by term in Python floats
    out = []
    for k in range(K + 1):
        v = 1.0
        for m in range(k):
            v *= (alpha - m) / (m + 1)
        out.append((-1) ** k * v)
    return np.array(out)


def test_untempered_small_case():
    np.testing.assert_allclose(untempered_weights(1.5, 2), [1.0, -1.5, 0.375], rtol=0, atol=1e-15)


def test_untempered_alpha_near_two():
    assert untempered_weights(2 - 1e-12, 1)[1] == pytest.approx(-2.0, abs=1e-11)


@pytest.mark.parametrize("oracle", ["product", "binom"])
def test_untempered_matches_direct_evaluation(oracle):
    g = untempered_weights(1.1, 64)
    k = np.arange(65)
    ref = _product_form(1.1, 64) if oracle == "product" else (-1.0) ** k * binom(1.1, k)
    np.testing.assert_allclose(g, ref, rtol=1e-13)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 0.5, 2.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ValueError):
        untempered_weights(alpha, 4)
    with pytest.raises(ValueError):
        tempered_weights(alpha, 0.0, 0.1, 4)


@pytest.mark.parametrize("kw", [dict(lam=-1.0), dict(h=0.0), dict(h=-0.1), dict(K=-1)])
def test_tempered_bad_arguments(kw):
    args = dict(alpha=1.5, lam=1.0, h=0.1, K=4) | kw
    with pytest.raises(ValueError):
        tempered_weights(**args)


def test_lambda_zero_reduces_to_untempered():
    np.testing.assert_allclose(tempered_weights(1.5, 0.0, 0.1, 2).g, [1.0, -1.5, 0.375], atol=1e-15)


def test_k_zero_branch():
    w = tempered_weights(1.5, 1.0, 0.1, 0)
    assert w.K == 0
    assert w.g[0] == pytest.approx(math.exp(0.1), rel=1e-15)


def test_tempered_against_closed_form():
    alpha, lam, h, K = 1.7, 3.0, 0.05, 40
    g = tempered_weights(alpha, lam, h, K).g
    gt = (-1.0) ** np.arange(K + 1) * binom(alpha, np.arange(K + 1))
    ref = gt * np.exp(-(np.arange(K + 1) - 1) * h * lam)
    ref[1] = gt[1] - math.exp(h * lam) * (1 - math.exp(-h * lam)) ** alpha
    np.testing.assert_allclose(g, ref, rtol=1e-12)


def test_weights_are_read_only():
    g = tempered_weights(1.5, 1.0, 0.1, 8).g
    with pytest.raises(ValueError):
        g[0] = 2.0


@pytest.mark.parametrize(
    "alpha,lam,h,K",
    [(1.9, 5.0, 2.0**-6, 1024), (1.5, 0.0, 0.1, 512), (1.1, 10.0, 2.0**-10, 2048)],
)
def test_sign_and_partial_sum_properties(alpha, lam, h, K):
    rep = check_lemma31(tempered_weights(alpha, lam, h, K))
    assert rep.ok, rep
    assert rep.first_violation is None


def test_untempered_partial_sums_fully_resolved():
    rep = check_lemma31(tempered_weights(1.5, 0.0, 0.1, 4096))
    assert rep.ok and rep.unresolved == 0


def test_corrupted_sequence_detected():
    g = np.array(tempered_weights(1.5, 1.0, 0.1, 16).g)
    g[2] = -g[2]
    rep = check_lemma31(g)
    assert not rep.others_positive
    assert not rep.ok
    assert rep.first_violation == 2


def test_positive_g1_detected():
    g = np.array(tempered_weights(1.5, 0.0, 0.1, 16).g)
    g[1] = 0.1
    rep = check_lemma31(g)
    assert not rep.g1_negative and rep.first_violation == 1


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(1.01, 1.99),
    lam=st.floats(0.0, 20.0),
    h=st.floats(1e-4, 0.5),
    K=st.integers(2, 600),
)
def test_sign_and_partial_sum_random(alpha, lam, h, K):
    assert check_lemma31(tempered_weights(alpha, lam, h, K)).ok


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1.01, 1.99), K=st.integers(1, 3000))
def test_untempered_partial_sums_closed_form(alpha, K):
    # sum_{k<=K} (-1)^k C(alpha, k) = (-1)^K C(alpha - 1, K)
    g = untempered_weights(alpha, K)
    S = np.cumsum(g.astype(np.longdouble))[-1]
    assert float(S) == pytest.approx((-1.0) ** K * binom(alpha - 1.0, K), rel=1e-9, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1.01, 1.99), lam=st.floats(0.01, 10.0), h=st.floats(1e-3, 0.2))
def test_tempered_weights_sum_to_zero(alpha, lam, h):
    # sum_k g_k e^{...} telescopes to zero once the tempered tail has decayed
    K = int(60 / (h * lam)) + 10
    g = tempered_weights(alpha, lam, h, K).g
    assert abs(g.sum()) <= 1e-12 * np.abs(g).sum() + 1e-12
