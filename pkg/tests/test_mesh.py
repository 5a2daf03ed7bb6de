import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pantograph_sde.errors import MeshError
from pantograph_sde.mesh import (DELAYED, GRID, build_uniform, index_of, locate,
                                 match_indices, refine)


def test_uniform_points():
    m = build_uniform(1, 4)
    assert m.h == 0.25
    np.testing.assert_array_equal(m.points, [0, 0.25, 0.5, 0.75, 1])
    m = build_uniform(2, 8)
    assert m.h == 0.25 and m.points[3] == 0.75


@pytest.mark.parametrize("T, N", [(1, 1), (0, 4), (-1, 4), (1, 0), (3, 2)])
def test_uniform_rejects(T, N):
    with pytest.raises(MeshError):
        build_uniform(T, N)


def test_refine_half():
    r = refine(build_uniform(1, 4), 0.5)
    np.testing.assert_array_equal(r.points, [0, 0.125, 0.25, 0.375, 0.5, 0.75, 1])


def test_refine_locator_of_delayed_point():
    r = refine(build_uniform(1, 4), 0.9)
    l = index_of(r, 0.225)
    assert r.interval[l] == 0
    assert r.zeta[l] == pytest.approx(0.9, abs=1e-15)


def test_refine_tags():
    r = refine(build_uniform(1, 2), 0.5)
    np.testing.assert_array_equal(r.points, [0, 0.25, 0.5, 1])
    assert r.tags[1] == DELAYED
    assert r.tags[2] == GRID | DELAYED
    assert r.tags[3] == GRID


@pytest.mark.parametrize("q", [0.0, 1.0, -0.5, 1.5])
def test_refine_rejects_q(q):
    with pytest.raises(MeshError):
        refine(build_uniform(1, 4), q)


def test_locate():
    r = refine(build_uniform(1, 4), 0.5)
    assert locate(r, 0.375) == (1, 0.5)
    assert locate(r, 0.25) == (0, 1.0)
    with pytest.raises(MeshError):
        locate(r, 0.13)
    with pytest.raises(MeshError):
        locate(r, 0.0)


def test_match_indices():
    pts = np.array([0.0, 0.5, 1.0])
    np.testing.assert_array_equal(match_indices(pts, [1.0, 0.0], 1e-12), [2, 0])
    with pytest.raises(MeshError):
        match_indices(pts, [0.3], 1e-12)


@settings(max_examples=200, deadline=None)
@given(T=st.floats(0.05, 20), N=st.integers(1, 400), q=st.floats(0.01, 0.99))
def test_refined_mesh_properties(T, N, q):
    if T / N >= 1:
        return
    base = build_uniform(T, N)
    r = refine(base, q)
    assert N + 1 <= len(r) <= 2 * N + 1
    assert np.all(np.diff(r.points) > 0)
    assert r.points[0] == 0 and r.points[-1] == T
    assert abs(base.h * N - T) <= np.spacing(T)
    # every t_n and q t_n is present
    match_indices(r.points, base.points, r.tol)
    match_indices(r.points, q * base.points, r.tol)
    # locators
    n, z, s = r.interval[1:], r.zeta[1:], r.points[1:]
    assert np.all((z > 0) & (z <= 1))
    assert np.all(base.points[n] < s) and np.all(s <= base.points[n + 1] + r.tol)
    ulp = np.spacing(np.maximum(s, base.points[n] + z * base.h))
    assert np.all(np.abs(base.points[n] + z * base.h - s) <= 2 * ulp + 1e-300)
    # coupling window: q t_{n+1} inside (t_n, t_{n+1}) iff n < q / (1 - q)
    for k in range(N):
        expect = q * (k + 1) * base.h > k * base.h + r.tol
        assert r.coupled(k) == expect
        if q * (k + 1) * base.h > k * base.h + r.tol:
            assert k < q / (1 - q)


def test_coupling_window_small_q():
    r = refine(build_uniform(1, 10), 0.5)
    assert r.coupled(0)
    assert not any(r.coupled(n) for n in range(1, 10))
    r = refine(build_uniform(1, 10), 0.8)
    assert [n for n in range(10) if r.coupled(n)] == [0, 1, 2, 3]
