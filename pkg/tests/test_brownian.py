import numpy as np
import pytest

from pantograph_sde.brownian import BrownianPath, sample_ensemble
from pantograph_sde.errors import BrownianError
from pantograph_sde.mesh import build_uniform, refine


def test_origin_is_zero():
    p = BrownianPath(3, seed=1)
    np.testing.assert_array_equal(p.query(0.0), np.zeros(3))


def test_memoised():
    p = BrownianPath(2, seed=1)
    a = p.query(0.3).copy()
    p.query(0.7)
    p.query(0.1)
    np.testing.assert_array_equal(p.query(0.3), a)


@pytest.mark.parametrize("t", [-0.1, np.inf, np.nan])
def test_rejects_bad_times(t):
    with pytest.raises(BrownianError):
        BrownianPath(1, 0).query(t)


def test_increment():
    p = BrownianPath(2, seed=4)
    np.testing.assert_array_equal(p.increment(0.5, 0.5), np.zeros(2))
    full = p.increment(0, 1)
    split = p.increment(0, 0.5) + p.increment(0.5, 1)
    np.testing.assert_array_equal(full, p.query(1.0) - p.query(0.0))
    np.testing.assert_allclose(full, split, rtol=0, atol=1e-15)
    with pytest.raises(BrownianError):
        p.increment(0.6, 0.5)


def test_bridge_law():
    # B(1) = w fixed, B(0.5) ~ N(w/2, 1/4) per component
    w = np.array([1.0, -2.0])
    draws = []
    for i in range(10000):
        p = BrownianPath(2, seed=9, path_index=i)
        p._times.append(1.0)
        p._values.append(w)
        draws.append(p.query(0.5))
    draws = np.array(draws)
    se = np.sqrt(0.25 / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - w / 2) < 4 * se)
    assert np.all(np.abs(draws.var(axis=0, ddof=1) / 0.25 - 1) < 0.06)


def test_presample_then_bridge():
    mesh = refine(build_uniform(1, 4), 0.5)
    p = BrownianPath(1, seed=2)
    p.presample(build_uniform(1, 4).points)
    before = {t: p.query(t).copy() for t in (0.25, 0.5)}
    v = p.query(0.375)
    assert len(p) == 6
    for t, val in before.items():
        np.testing.assert_array_equal(p.query(t), val)
    assert np.isfinite(v).all()
    p.presample([])
    snapshot = p.values_at(mesh.points)
    p.presample(mesh.points)
    np.testing.assert_array_equal(p.values_at(mesh.points), snapshot)


def test_presample_rejects_unsorted():
    with pytest.raises(BrownianError):
        BrownianPath(1, 0).presample([0.5, 0.2])


def test_refinement_consistency():
    coarse = refine(build_uniform(1, 64), 0.5).points
    fine = refine(build_uniform(1, 128), 0.5).points
    p = BrownianPath(2, seed=11)
    p.presample(coarse)
    kept = p.values_at(coarse).copy()
    for t in fine:
        p.query(t)
    np.testing.assert_array_equal(p.values_at(coarse), kept)


def test_determinism_and_stream_independence():
    t = np.linspace(0, 1, 33)
    a = sample_ensemble(5, [0, 1, 2], 2, t)
    b = sample_ensemble(5, [2, 0], 2, t)
    np.testing.assert_array_equal(a[2], b[0])
    np.testing.assert_array_equal(a[0], b[1])
    assert not np.array_equal(a[0], a[1])
    assert not np.array_equal(sample_ensemble(6, [0], 2, t)[0], a[0])


def test_ensemble_matches_single_path():
    t = refine(build_uniform(2, 40), 0.3).points
    ens = sample_ensemble(8, [3, 4], 2, t)
    for k, i in enumerate([3, 4]):
        p = BrownianPath(2, 8, i)
        p.presample(t)
        np.testing.assert_array_equal(p.values_at(t), ens[k])
    # a time grid without 0 goes through the general route
    ens = sample_ensemble(8, [3], 1, t[1:])
    p = BrownianPath(1, 8, 3)
    p.presample(t[1:])
    np.testing.assert_array_equal(p.values_at(t[1:]), ens[0])
