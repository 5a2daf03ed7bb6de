import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import bisect

from pantograph_sde.errors import FitError, NoRealRootError
from pantograph_sde.analysis import (alpha_ms, check_as_stable, check_ms_stable,
                                     chunk_ranges, consistency_orders, fit_ms_decay,
                                     fit_order, fit_pathwise_decay, ms_curve, series_error,
                                     stability_report, strong_error, tail_indices)
from pantograph_sde.model import (LinearDiffusion, SpdeProblem, StructuralConstants,
                                  drift_only, linear)
from pantograph_sde.scheme import SchemeConfig

LOG3 = math.log(3) / math.log(0.5)


@pytest.mark.parametrize("params, expected", [
    ((-2, 0.5, 0.5, 0.5, 0.5), LOG3),
    ((-1, 0.5, 0, 0, 0.5), LOG3),
    ((-1, 0.5, 0.5, 0.5, 0.3), 0.0),
])
def test_alpha_examples(params, expected):
    assert alpha_ms(*params) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("params", [(-1, 0, 0, 0, 0.5), (1, 0.5, 0.5, 0.5, 0.5)])
def test_alpha_without_root(params):
    with pytest.raises(NoRealRootError):
        alpha_ms(*params)
    assert "NO_REAL_ROOT" in stability_report(*params).flags


@st.composite
def stable_draw(draw):
    b = draw(st.floats(0, 3))
    c = draw(st.floats(0, 2))
    d = draw(st.floats(0, 2))
    if b + 2 * d * d < 1e-3:
        d = 0.1
    a = draw(st.floats(-10, 0)) - (b + 2 * c * c) / 2 - 1e-3
    q = draw(st.floats(0.1, 0.9))
    return a, b, c, d, q


@settings(max_examples=200, deadline=None)
@given(stable_draw())
def test_alpha_root_properties(p):
    a, b, c, d, q = p
    alpha = alpha_ms(*p)
    F = lambda x: 2 * a + b + 2 * c * c + (b + 2 * d * d) * q ** x
    scale = abs(2 * a + b + 2 * c * c)
    assert abs(F(alpha)) < 1e-10 * max(1, scale)
    lo, hi = alpha - 1, alpha + 1
    assert abs(bisect(F, lo, hi, xtol=1e-13) - alpha) < 1e-10


@settings(max_examples=300, deadline=None)
@given(a=st.floats(-5, 1), b=st.floats(0, 2), c=st.floats(0, 1.5), d=st.floats(0, 1.5),
       q=st.floats(0.05, 0.95))
def test_as_implies_ms(a, b, c, d, q):
    ok, rate = check_as_stable(a, b, c, d, q)
    if ok:
        assert check_ms_stable(a, b, c, d)
        if b + 2 * d * d > 0:
            assert alpha_ms(a, b, c, d, q) < -1
            assert rate < 0
        else:
            assert rate is None


def test_predicate_examples():
    assert check_ms_stable(-2, 0.5, 0.5, 0.5)
    assert not check_ms_stable(0.1, 0.1, 0.1, 0.1)
    ok, rate = check_as_stable(-2, 0.5, 0.5, 0.5, 0.5)
    assert ok and rate == pytest.approx((1 + LOG3) / 2, abs=1e-12)
    assert check_as_stable(-2, 0.5, 0.5, 0.5, 0.25) == (False, None)


def test_predicate_boundaries_are_strict():
    # a + b + c^2 + d^2 = 0 exactly in floating point
    assert not check_ms_stable(-1, 0.5, 0.5, 0.5)
    # 2a + b + 2c^2 + (b + 2d^2)/q = -2.5 + 2.5 = 0
    assert check_as_stable(-1.5, 0.5, 0.0, 0.5, 0.4)[0] is False


def test_fit_ms_decay_exact_power_laws():
    t = np.geomspace(2, 200, 30)
    fit = fit_ms_decay(t, t ** -2.0)
    assert abs(fit.slope + 2) < 1e-12 and fit.residual < 1e-12
    fit = fit_ms_decay(t, 5 * t ** -1.585)
    assert abs(fit.slope + 1.585) < 1e-12
    assert fit.intercept == pytest.approx(math.log(5))


def test_fit_ms_decay_noise_floor():
    t = np.geomspace(2, 200, 10)
    v = t ** -1.0
    v[-2:] = [0.0, -1e-9]
    fit = fit_ms_decay(t, v)
    assert "NOISE_FLOOR" in fit.flags and len(fit.t) == 8
    assert abs(fit.slope + 1) < 1e-12
    with pytest.raises(ValueError):
        fit_ms_decay(np.array([0.5, 2, 3]), np.ones(3))


def test_pathwise_decay():
    t = np.geomspace(2, 100, 20)
    assert fit_pathwise_decay(t, t ** -0.3) == pytest.approx(-0.3, abs=1e-12)
    assert fit_pathwise_decay(t, np.full(20, 4.2)) == pytest.approx(0, abs=1e-12)


def test_fit_order_sqrt():
    h = 2.0 ** -np.arange(3, 9)
    fit = fit_order(h, 3 * np.sqrt(h))
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.ci95[0] <= fit.slope <= fit.ci95[1]
    assert len(fit.rows()) == 6
    with pytest.raises(FitError):
        fit_order(h[:2], h[:2])


def test_zero_problem_strong_error_is_rejected():
    p = SpdeProblem(1, 1, 0.5, lambda t, x, y: 0 * x, LinearDiffusion(0, 0), [1.0],
                    StructuralConstants(0, 0, 0, 0, 1))
    with pytest.raises(FitError) as info:
        strong_error(p, 0.5, [2 ** -2, 2 ** -3, 2 ** -4], M=4, seed=0, fine_factor=2)
    assert info.value.code == "ZERO_ERROR"


def test_zero_problem_defect_vanishes():
    p = SpdeProblem(1, 1, 0.5, lambda t, x, y: 0 * x, LinearDiffusion(0, 0), [1.0],
                    StructuralConstants(0, 0, 0, 0, 1))
    with pytest.raises(FitError):
        consistency_orders(p, 0.5, [2 ** -2, 2 ** -3, 2 ** -4], M=4, seed=0, fine_factor=2)


def test_chunking():
    assert chunk_ranges(5, 2) == [(0, 2), (2, 4), (4, 5)]
    t = np.linspace(0, 100, 10001)
    idx = tail_indices(t, 10, 100, 40)
    assert t[idx[0]] >= 10 and t[idx[-1]] <= 100 and len(idx) >= 30


def test_results_do_not_depend_on_worker_count():
    p = linear(-2, 0.5, 0.5, 0.5, 0.5)
    cfg = SchemeConfig(theta=0.5)
    one = ms_curve(p, 2, 32, cfg, M=60, seed=4, workers=1, chunk=16)
    two = ms_curve(p, 2, 32, cfg, M=60, seed=4, workers=2, chunk=16)
    assert np.array_equal(one.ms, two.ms) and np.array_equal(one.stderr, two.stderr)
    hs = [2 ** -3, 2 ** -4, 2 ** -5]
    s1 = strong_error(p, 0.5, hs, M=40, seed=1, fine_factor=4, workers=1, chunk=16)
    s2 = strong_error(p, 0.5, hs, M=40, seed=1, fine_factor=4, workers=2, chunk=16)
    assert np.array_equal(s1.error, s2.error)


def test_strong_error_monotone():
    p = linear(-2, 0.5, 0.5, 0.5, 0.5)
    res = strong_error(p, 0.5, [2.0 ** -k for k in range(3, 7)], M=400, seed=8,
                       fine_factor=8, chunk=200)
    for j in range(len(res.h) - 1):
        # h decreases along the arrays
        gap = res.error[j + 1] - res.error[j]
        assert gap <= 2 * math.hypot(res.stderr[j], res.stderr[j + 1])
    assert res.h_ref == 2.0 ** -9


def test_deterministic_consistency_order():
    p = drift_only(-1, 0.5, 0.5)
    hs = [2.0 ** -k for k in range(3, 8)]
    res = consistency_orders(p, 0.0, hs, M=2, seed=0, fine_factor=64, max_over_n=False)
    assert not res.flags
    assert res.avg_fit.slope == pytest.approx(2.0, abs=0.15)
    assert np.allclose(res.mean_defect, res.rms_defect)
    assert np.all(res.mean_stderr == 0)


def test_series_error_first_order():
    fit = series_error(drift_only(-1, 0.5, 0.5), [2.0 ** -k for k in range(3, 9)])
    assert 0.8 <= fit.slope <= 1.2


def test_stability_report_fields():
    r = stability_report(-2, 0.5, 0.5, 0.5, 0.5)
    assert r.ms_stable and r.as_stable and not r.flags
    assert r.alpha == pytest.approx(LOG3)


def test_report_without_delay_term():
    r = stability_report(-1, 0, 0, 0, 0.5)
    assert r.alpha is None and "NO_REAL_ROOT" in r.flags
    assert r.ms_stable and r.as_stable and r.as_rate is None
