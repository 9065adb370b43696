import json
import math

import numpy as np
import pytest
from scipy import stats

from netgof import gof, rmt
from netgof.errors import DegenerateBootstrap
from netgof.graph import (
    NodeLabeling,
    ProbMatrix,
    extract_ard,
    graph_from_edges,
    sample_graph,
)
from netgof.models import SbmParams, fit_er, prob_matrix

ALPHA = 0.05


def er(n, p, seed, directed=False):
    return sample_graph(ProbMatrix(np.full((n, n), p), directed=directed), seed=seed)


def test_strict_rejection_at_critical_values():
    lo, hi = gof.tw_critical_values(ALPHA)
    assert gof.two_sided_reject(hi, hi, ALPHA)[0] is False
    assert gof.two_sided_reject(lo, lo, ALPHA)[0] is False
    assert gof.two_sided_reject(np.nextafter(hi, 9), hi, ALPHA)[0] is False
    assert gof.two_sided_reject(hi, np.nextafter(hi, 9), ALPHA)[0] is True
    assert gof.two_sided_reject(np.nextafter(lo, -9), lo, ALPHA)[0] is True


def test_bootstrap_statistic_by_hand():
    # fixed replicate stack so the oracle needs no access to the generator
    n, B = 12, 60
    g = er(n, 0.4, 0)
    p_hat = prob_matrix(fit_er(g), n)
    stack = np.stack([er(n, 0.4, 100 + b).adj for b in range(B)])
    report = gof.test_undirected_bootstrap(g, lambda rng, size: stack[:size], p_hat, B=B, alpha=ALPHA, seed=0)

    p = p_hat.p[0, 1]
    sd = math.sqrt((n - 1) * p * (1 - p))

    def ext(adj):
        a = (adj - p) / sd
        np.fill_diagonal(a, 0)
        w = np.linalg.eigvalsh(a)
        return w[0], w[-1]

    lo, hi = ext(g.adj.astype(float))
    boot = np.array([ext(a.astype(float)) for a in stack])
    z_max = (hi - boot[:, 1].mean()) / boot[:, 1].std(ddof=1)
    z_min = -(lo - boot[:, 0].mean()) / boot[:, 0].std(ddof=1)
    mu, s = rmt.tw1_moments()
    t = mu + s * max(z_max, z_min)
    assert report.statistics["t"] == pytest.approx(t, rel=1e-10)
    q_lo, q_hi = rmt.tw1_quantile(ALPHA / 2), rmt.tw1_quantile(1 - ALPHA / 2)
    assert report.reject == (t > q_hi or t < q_lo)


def test_directed_bootstrap_by_hand():
    n, B = 10, 50
    g = er(n, 0.3, 1, directed=True)
    p_hat = prob_matrix(fit_er(g), n)
    stack = np.stack([er(n, 0.3, 200 + b, directed=True).adj for b in range(B)])
    rep = gof.test_directed_bootstrap(g, lambda rng, size: stack[:size], p_hat, B=B, alpha=ALPHA)
    p = p_hat.p[0, 1]

    def smax(adj):
        a = (adj - p) / math.sqrt(p * (1 - p))
        np.fill_diagonal(a, 0)
        return np.sqrt(np.linalg.eigvalsh(a.T @ a)[-1])

    boot = np.array([smax(a.astype(float)) for a in stack])
    mu, s = rmt.tw1_moments()
    t = mu + s * (smax(g.adj.astype(float)) - boot.mean()) / boot.std(ddof=1)
    assert rep.statistics["t"] == pytest.approx(t, rel=1e-9)


def test_bootstrap_seed_reproducible_and_json():
    g = er(30, 0.2, 3)
    p_hat = prob_matrix(fit_er(g), 30)
    a = gof.test_undirected_bootstrap(g, gof.bernoulli_sampler(p_hat), p_hat, B=80, seed=5)
    b = gof.test_undirected_bootstrap(g, gof.bernoulli_sampler(p_hat), p_hat, B=80, seed=5)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["seed"] == 5 and d["bootstrap_meta"]["B"] == 80


def test_bootstrap_argument_checks():
    g = er(10, 0.5, 0)
    p_hat = prob_matrix(fit_er(g), 10)
    with pytest.raises(ValueError):
        gof.test_undirected_bootstrap(g, gof.bernoulli_sampler(p_hat), p_hat, B=10)
    with pytest.raises(ValueError):
        gof.test_undirected_bootstrap(g, gof.bernoulli_sampler(p_hat), p_hat, alpha=1.0)
    constant = np.stack([g.adj] * 60)
    with pytest.raises(DegenerateBootstrap):
        gof.test_undirected_bootstrap(g, lambda rng, size: constant[:size], p_hat, B=60)


def test_refit_mode_runs():
    g = er(20, 0.3, 2)
    p_hat = prob_matrix(fit_er(g), 20)
    rep = gof.test_undirected_bootstrap(
        g, gof.bernoulli_sampler(p_hat), p_hat, B=60, seed=1, refit=lambda h: prob_matrix(fit_er(h), 20)
    )
    assert rep.bootstrap_meta["refit"] is True


def test_asymptotic_statistics():
    g = er(40, 0.3, 6)
    p_hat = prob_matrix(fit_er(g), 40)
    rep = gof.test_undirected_asymptotic(g, p_hat)
    scale = 40 ** (2 / 3)
    assert rep.statistics["t1"] == pytest.approx(scale * (rep.statistics["lambda_max"] - 2))
    assert rep.statistics["t2"] == pytest.approx(scale * (-rep.statistics["lambda_min"] - 2))


def test_singular_centering_formula():
    mu, sigma = gof.tw_singular_centering(10, 5)
    assert mu == pytest.approx((3 + math.sqrt(5)) ** 2)
    assert sigma == pytest.approx(math.sqrt(mu) * (1 / 3 + 1 / math.sqrt(5)) ** (1 / 3))
    assert gof.tw_singular_centering(5, 10) == (mu, sigma)


def test_bootstrap_null_calibration_er():
    # 150 ER(0.3) graphs at n = 30; rejection count should be Binomial(150, ~0.05)
    rej = 0
    reps = 150
    for r in range(reps):
        g = er(30, 0.3, 1000 + r)
        p_hat = prob_matrix(fit_er(g), 30)
        rej += gof.test_undirected_bootstrap(g, gof.bernoulli_sampler(p_hat), p_hat, B=100, seed=r).reject
    # P(Binomial(150, 0.05) > 17) < 0.001; the fitted-P bootstrap is conservative so allow 0
    assert rej <= 17


def test_bootstrap_detects_block_structure():
    lab = NodeLabeling(np.repeat([0, 1], 30))
    g = sample_graph(prob_matrix(SbmParams(lab, np.array([[0.5, 0.1], [0.1, 0.5]]))), seed=4)
    p_hat = prob_matrix(fit_er(g), 60)
    rep = gof.test_undirected_bootstrap(g, gof.bernoulli_sampler(p_hat), p_hat, B=100, seed=0)
    assert rep.reject and rep.statistics["z_max"] > 10


def test_explaw_null_calibration():
    reps, rej = 300, 0
    for r in range(reps):
        g = er(40, 0.3, 5000 + r, directed=True)
        rej += gof.test_directed_explaw(g, prob_matrix(fit_er(g), 40)).reject
    # two-sided binomial test at the 0.001 level against alpha
    assert stats.binomtest(rej, reps, ALPHA).pvalue > 1e-3


def test_ard_er_null_and_alternative():
    n = 120
    groups = NodeLabeling(np.arange(n) * 12 // n)
    resp = np.arange(0, n, 3)
    y0 = extract_ard(er(n, 0.1, 8), groups, resp)
    null = gof.test_ard_er(y0)
    assert null.extra["p_hat"] == pytest.approx(0.1, abs=0.02)
    lab = NodeLabeling(np.repeat([0, 1], n // 2))
    g1 = sample_graph(prob_matrix(SbmParams(lab, np.array([[0.3, 0.02], [0.02, 0.3]]))), seed=8)
    alt = gof.test_ard_er(extract_ard(g1, groups, resp))
    assert alt.reject
    assert alt.statistics["t"] > null.statistics["t"]
