import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize
from scipy.special import expit, logit

from netgof.errors import DegenerateFit, MleNonexistent
from netgof.graph import Graph, NodeLabeling, ProbMatrix, graph_from_edges, sample_graph
from netgof.models import (
    BetaParams,
    ErParams,
    LatentSpaceParams,
    SbmParams,
    fit_beta_mle,
    fit_er,
    fit_er_ard,
    fit_latent_space,
    fit_sbm,
    params_from_dict,
    params_to_dict,
    prob_matrix,
    project_latent,
)

# n = 5, degrees (3, 2, 2, 2, 1): every degree strictly inside (0, 4)
G5 = graph_from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 2), (3, 4)])


def beta_loglik(beta, adj):
    th = beta[..., :, None] + beta[..., None, :]
    iu = np.triu_indices(adj.shape[0], 1)
    th = th[..., iu[0], iu[1]]
    y = adj[iu]
    return np.sum(y * th - np.logaddexp(0.0, th), axis=-1)


def test_beta_mle_vs_likelihood_grid():
    fit = fit_beta_mle(G5).beta
    adj = G5.adj.astype(float)
    best = beta_loglik(fit, adj)
    # exhaustive grid of half-width 0.6 around the fixed point, step 0.1
    offs = np.arange(-0.6, 0.61, 0.1)
    grid = np.array(list(itertools.product(offs, repeat=5))) + fit
    ll = beta_loglik(grid, adj)
    assert ll.max() <= best + 1e-12
    # the best grid point sits within one grid step of the fixed point
    assert np.max(np.abs(grid[np.argmax(ll)] - fit)) <= 0.1 + 1e-9


def test_beta_mle_vs_generic_optimizer():
    adj = G5.adj.astype(float)
    res = optimize.minimize(lambda b: -beta_loglik(b, adj), np.zeros(5), method="BFGS", options={"gtol": 1e-10})
    np.testing.assert_allclose(fit_beta_mle(G5).beta, res.x, atol=1e-5)


def test_beta_mle_reproduces_degrees():
    g = sample_graph(prob_matrix(BetaParams(np.linspace(-1.5, 0.0, 40))), seed=11)
    fit = fit_beta_mle(g)
    np.testing.assert_allclose(prob_matrix(fit).p.sum(axis=1), g.degrees(), atol=1e-7)


@pytest.mark.parametrize("n,k", [(6, 2), (8, 3), (10, 5), (12, 7)])
def test_k_regular_closed_form(n, k):
    # circulant k-regular graph (k even uses +-1..k/2; odd adds the antipode)
    offsets = list(range(1, k // 2 + 1))
    edges = [(i, (i + o) % n) for i in range(n) for o in offsets]
    if k % 2:
        edges += [(i, i + n // 2) for i in range(n // 2)]
    g = graph_from_edges(n, edges)
    assert np.all(g.degrees() == k)
    beta = fit_beta_mle(g).beta
    np.testing.assert_allclose(beta, 0.5 * logit(k / (n - 1)), atol=1e-9)


def test_beta_mle_nonexistence():
    with pytest.raises(MleNonexistent):
        fit_beta_mle(graph_from_edges(4, [(0, 1), (1, 2)]))
    star = graph_from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2)])
    with pytest.raises(MleNonexistent):
        fit_beta_mle(star)


def test_exp_link_probabilities():
    b = np.array([-1.0, -0.5, -2.0])
    p = prob_matrix(BetaParams(b, link="exp")).p
    assert p[0, 1] == pytest.approx(math.exp(-1.5))
    with pytest.raises(ValueError):
        prob_matrix(BetaParams(np.array([0.5, 0.0]), link="exp"))
    with pytest.raises(ValueError):
        fit_beta_mle(G5, link="exp")


def test_er_and_sbm_fits():
    g = graph_from_edges(4, [(0, 1), (2, 3), (0, 2)])
    assert fit_er(g).p == pytest.approx(0.5)
    lab = NodeLabeling(np.array([0, 0, 1, 1]))
    sbm = fit_sbm(g, lab)
    np.testing.assert_allclose(sbm.B, [[1.0, 0.25], [0.25, 1.0]])
    with pytest.raises(DegenerateFit):
        fit_er(graph_from_edges(3, []))
    with pytest.raises(DegenerateFit):
        fit_sbm(g, NodeLabeling(np.array([0, 1, 1, 1])))


def test_sbm_prob_matrix_and_validation():
    lab = NodeLabeling(np.array([1, 0, 1]))
    p = prob_matrix(SbmParams(lab, np.array([[0.1, 0.2], [0.2, 0.3]]))).p
    assert p[0, 2] == 0.3 and p[0, 1] == 0.2 and p[0, 0] == 0.0
    with pytest.raises(ValueError):
        SbmParams(lab, np.array([[0.1, 0.2], [0.3, 0.3]]))


def test_er_ard_estimate():
    from netgof.graph import ArdMatrix

    y = ArdMatrix(np.array([[1, 2], [3, 0]]), np.array([4, 4]))
    assert fit_er_ard(y) == pytest.approx(6 / 16)


def test_params_roundtrip():
    lab = NodeLabeling(np.array([0, 1, 1]))
    for m in (
        ErParams(0.2),
        SbmParams(lab, np.array([[0.1, 0.2], [0.2, 0.3]])),
        BetaParams(np.array([-1.0, 0.5]), "expit"),
        LatentSpaceParams(np.zeros(3), np.ones((3, 2)), 0.5, np.ones((3, 3))),
    ):
        back = params_from_dict(params_to_dict(m))
        n = 3 if not isinstance(m, BetaParams) else 2
        np.testing.assert_allclose(prob_matrix(back, n).p, prob_matrix(m, n).p)


def _latent_graph(n, d, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(0, 1.0, (n, d))
    z -= z.mean(axis=0)
    alpha = rng.uniform(-1.5, -0.5, n)
    truth = LatentSpaceParams(alpha, z)
    return truth, sample_graph(prob_matrix(truth), seed=rng)


def test_latent_space_objective_is_monotone_and_beats_truth():
    truth, g = _latent_graph(200, 2, 3)
    fit = fit_latent_space(g, 2, max_iter=300)
    assert np.all(np.diff(fit.objective) >= -1e-9)
    iu = np.triu_indices(g.n, 1)
    th = truth.logodds()[iu]
    y = g.adj[iu]
    ll_truth = float(np.sum(y * th - np.logaddexp(0, th)))
    assert fit.objective[-1] >= ll_truth
    # fitted Gram matrix recovers the planted one up to rotation
    zz_hat = fit.params.z @ fit.params.z.T
    zz = truth.z @ truth.z.T
    rel = np.linalg.norm(zz_hat - zz) / np.linalg.norm(zz)
    assert rel < 0.5  # about 0.4 at n = 200, shrinking like n^-1/2


def test_latent_space_with_covariate():
    rng = np.random.default_rng(8)
    n = 100
    x = rng.normal(size=(n, n))
    x = (x + x.T) / 2
    np.fill_diagonal(x, 0)
    truth = LatentSpaceParams(np.full(n, -1.0), rng.normal(0, 0.7, (n, 1)), 1.0, x)
    g = sample_graph(prob_matrix(truth), seed=rng)
    fit = fit_latent_space(g, 1, x=x, max_iter=300)
    assert fit.params.beta_cov == pytest.approx(1.0, abs=0.3)


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(2, 20),
    d=st.integers(1, 4),
    scale=st.floats(0.1, 20.0),
    bound=st.floats(1.0, 30.0),
    seed=st.integers(0, 10**6),
)
def test_projection_bounds_logits(n, d, scale, bound, seed):
    rng = np.random.default_rng(seed)
    alpha, z = project_latent(rng.normal(0, scale, n), rng.normal(0, scale, (n, d)), bound)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9 * max(scale, 1.0))
    assert np.all(np.abs(alpha) <= bound / 4 + 1e-12)
    # centering can move a row by at most the largest pre-centering norm
    assert np.max(np.sum(z * z, axis=1)) <= 4 * bound / 2 + 1e-9
    th = alpha[:, None] + alpha[None, :] + z @ z.T
    assert np.max(np.abs(th)) <= 2.5 * bound + 1e-9


def test_latent_space_on_er_graph_stays_interior():
    g = sample_graph(ProbMatrix(np.full((40, 40), 0.2)), seed=0)
    fit = fit_latent_space(g, 2)
    p = prob_matrix(fit).p[~np.eye(40, dtype=bool)]
    assert p.min() > expit(-3 * 16.0)
    assert np.all(np.isfinite(fit.objective))
