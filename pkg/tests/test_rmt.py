import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from netgof import rmt

# Published TW1 constants (mean, variance) to the digits usually quoted.
TW1_MEAN = -1.2065335745820
TW1_VAR = 1.6077810345810


def test_table_moments_match_published_constants():
    mean, sd = rmt.tw1_moments()
    assert abs(mean - TW1_MEAN) < 1e-3
    assert abs(sd * sd - TW1_VAR) < 2e-3


def test_table_quantiles():
    assert rmt.tw1_quantile(0.025) == pytest.approx(-3.5159, abs=2e-3)
    assert rmt.tw1_quantile(0.975) == pytest.approx(1.4538, abs=2e-3)
    assert rmt.tw1_quantile(0.5) == pytest.approx(-1.2686, abs=2e-3)


def test_cdf_and_quantile_are_inverse():
    for q in (0.01, 0.1, 0.5, 0.9, 0.99):
        assert rmt.tw1_cdf(rmt.tw1_quantile(q)) == pytest.approx(q, abs=1e-9)


def test_cdf_clamps_outside_grid():
    assert rmt.tw1_cdf(-50.0) == 0.0
    assert rmt.tw1_cdf(50.0) == 1.0
    with pytest.raises(ValueError):
        rmt.tw1_quantile(0.0)
    with pytest.raises(ValueError):
        rmt.tw1_quantile(1e-30)


def test_fredholm_matches_table_pointwise():
    tab = rmt.default_table()
    for s in (-4.0, -1.5, 0.0, 1.0):
        assert rmt.tw1_cdf_fredholm(s) == pytest.approx(float(tab.cdf(s)), abs=1e-8)


def test_small_table_rebuild_roundtrip(tmp_path):
    t = rmt.build_tw1_table(-2.0, 0.0, 0.5, nodes=30)
    f = tmp_path / "t.csv"
    rmt.write_tw1_table(t, f)
    back = rmt.read_tw1_table(f)
    np.testing.assert_allclose(back.grid, t.grid)
    np.testing.assert_allclose(back.cdf_values, t.cdf_values, atol=1e-12)


def test_dense_goe_oracle_agrees_with_table():
    # independent route: full GOE matrices rather than the tridiagonal model
    rng = np.random.default_rng(20240101)
    n, reps = 200, 1500
    out = np.empty(reps)
    for r in range(reps):
        x = rng.normal(size=(n, n))
        h = (x + x.T) / math.sqrt(2.0)
        lam = np.linalg.eigvalsh(h)[-1]
        out[r] = n ** (2 / 3) * (lam / math.sqrt(n) - 2.0)
    mean, sd = rmt.tw1_moments()
    # finite-n bias at n = 200 is well under 0.1; MC error of the mean is ~0.033
    assert abs(out.mean() - mean) < 0.15
    assert abs(out.std(ddof=1) - sd) < 0.12
    # 99% KS band for 1500 draws is 0.042; allow ~0.025 more for the n = 200 edge bias
    assert stats.kstest(out, rmt.tw1_cdf).statistic < 0.07


@pytest.mark.parametrize("edge", ["max", "min"])
def test_tridiagonal_sampler_both_edges(edge):
    x = rmt.goe_edge_sample(400, 1500, seed=5, edge=edge)
    assert stats.kstest(x, rmt.tw1_cdf).statistic < 0.05


def test_explaw_closed_form_vs_bisection():
    for q in (1e-6, 0.05, 0.5, 0.95, 0.999999):
        # bisect on the log survival, which is well conditioned in both tails
        root = optimize.brentq(lambda t: -0.5 * t * t - t - math.log1p(-q), 0.0, 50.0, xtol=1e-15, rtol=1e-15)
        assert abs(rmt.explaw_quantile(q) - root) < 1e-12


def test_explaw_survival_domain():
    assert rmt.explaw_survival(0.0) == 1.0
    with pytest.raises(ValueError):
        rmt.explaw_survival(-1.0)
    with pytest.raises(ValueError):
        rmt.explaw_quantile(1.0)


@settings(max_examples=60, deadline=None)
@given(q=st.floats(1e-9, 1 - 1e-9))
def test_explaw_roundtrip(q):
    t = rmt.explaw_quantile(q)
    assert t >= 0
    assert 1.0 - rmt.explaw_survival(t) == pytest.approx(q, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_tw_cdf_monotone(a, b):
    lo, hi = sorted((a, b))
    assert rmt.tw1_cdf(lo) <= rmt.tw1_cdf(hi)
