"""Uniform step meshes and their refinement by proportional-delay points.

A scheme for ``x'(t) = F(t, x(t), x(qt))`` stepping on ``t_n = n h`` needs the
numerical solution at every ``q t_n`` as well.  Those points generally fall
between grid points, so the working mesh is the sorted union of both sets.
Each refined point ``s`` is addressed by the pair ``(n, zeta)`` with
``s = t_n + zeta * h`` and ``zeta`` in ``(0, 1]``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import MeshError

GRID = 1
DELAYED = 2


def dedup_tolerance(T):
    """Absolute tolerance below which two mesh times are identified."""
    return 1e-12 * max(1.0, float(T))


@dataclass(frozen=True)
class UniformMesh:
    T: float
    N: int
    h: float = field(init=False)
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = self.T / self.N
        pts = np.arange(self.N + 1, dtype=float) * h
        pts[-1] = self.T
        pts.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "points", pts)

    @property
    def tol(self):
        return dedup_tolerance(self.T)


def build_uniform(T, N):
    """Return the mesh ``t_n = n T / N``, ``n = 0..N``.

    The step must satisfy ``h < 1``.
    """
    if not (isinstance(N, (int, np.integer)) and not isinstance(N, bool)):
        raise MeshError(f"step count must be an integer, got {N!r}")
    T = float(T)
    if not math.isfinite(T) or T <= 0:
        raise MeshError(f"horizon must be positive and finite, got {T}")
    if N < 1:
        raise MeshError(f"step count must be >= 1, got {N}")
    if T / N >= 1.0:
        raise MeshError(f"step h = {T / N} violates h < 1")
    return UniformMesh(T, int(N))


@dataclass(frozen=True, eq=False)
class RefinedMesh:
    """Union of a uniform grid with its proportional points ``q t_n``.

    Arrays are indexed by refined position ``l`` unless noted:

    points      s_l, strictly increasing, ``s_0 = 0`` and ``s_{-1} = T``
    interval    n with ``t_n < s_l <= t_{n+1}`` (``-1`` for ``s_0``)
    zeta        ``(s_l - t_n) / h`` in ``(0, 1]`` (``nan`` for ``s_0``)
    tags        bit set of ``GRID`` and ``DELAYED``
    grid_index  (length N+1) refined position of ``t_n``
    delay_index (length N+1) refined position of ``q t_n``
    """

    base: UniformMesh
    q: float
    points: np.ndarray
    interval: np.ndarray
    zeta: np.ndarray
    tags: np.ndarray
    grid_index: np.ndarray
    delay_index: np.ndarray

    @property
    def h(self):
        return self.base.h

    @property
    def N(self):
        return self.base.N

    @property
    def T(self):
        return self.base.T

    @property
    def tol(self):
        return self.base.tol

    def __len__(self):
        return len(self.points)

    def is_grid(self, l):
        return bool(self.tags[l] & GRID)

    def is_delayed(self, l):
        return bool(self.tags[l] & DELAYED)

    def interior(self, n):
        """Refined positions strictly inside ``(t_n, t_{n+1})``."""
        return np.arange(self.grid_index[n] + 1, self.grid_index[n + 1])

    def coupled(self, n):
        """True when ``q t_{n+1}`` falls strictly inside ``(t_n, t_{n+1})``.

        At such steps the implicit drift needs a delayed value that is itself
        produced by the same step.
        """
        l = self.delay_index[n + 1]
        return bool(self.interval[l] == n and not (self.tags[l] & GRID))


def _split(s, h, N, tol):
    """Vectorised ``(n, zeta)`` with snapping of near-grid times."""
    r = s / h
    k = np.rint(r)
    on_grid = np.abs(s - k * h) <= tol
    n = np.where(on_grid, k - 1, np.floor(r)).astype(np.int64)
    n = np.clip(n, 0, N - 1)
    zeta = np.where(on_grid, 1.0, (s - n * h) / h)
    return n, zeta, on_grid


def refine(mesh, q):
    """Merge ``mesh`` with the points ``q t_n`` into a :class:`RefinedMesh`."""
    q = float(q)
    if not (0.0 < q < 1.0):
        raise MeshError(f"delay ratio q must lie in (0, 1), got {q}")
    N, h, tol = mesh.N, mesh.h, mesh.tol
    grid = mesh.points
    delayed = q * (np.arange(N + 1, dtype=float) * h)

    # grid entries first so a stable sort puts them ahead of equal delayed ones
    values = np.concatenate([grid, delayed])
    tag = np.concatenate([np.full(N + 1, GRID), np.full(N + 1, DELAYED)])
    source = np.concatenate([np.arange(N + 1), np.arange(N + 1)])
    order = np.argsort(values, kind="stable")
    values, tag, source = values[order], tag[order], source[order]

    new_group = np.empty(len(values), dtype=bool)
    new_group[0] = True
    new_group[1:] = np.diff(values) > tol
    group = np.cumsum(new_group) - 1
    L = int(group[-1]) + 1

    # a group holds at most one grid point; its exact value wins
    points = np.empty(L)
    tags = np.zeros(L, dtype=np.int8)
    np.bitwise_or.at(tags, group, tag.astype(np.int8))
    points[group[new_group]] = values[new_group]
    is_grid = tag == GRID
    points[group[is_grid]] = values[is_grid]

    grid_index = np.empty(N + 1, dtype=np.int64)
    delay_index = np.empty(N + 1, dtype=np.int64)
    grid_index[source[is_grid]] = group[is_grid]
    delay_index[source[~is_grid]] = group[~is_grid]

    interval = np.full(L, -1, dtype=np.int64)
    zeta = np.full(L, np.nan)
    n, z, _ = _split(points[1:], h, N, tol)
    interval[1:] = n
    zeta[1:] = np.where(tags[1:] & GRID, 1.0, z)

    for arr in (points, interval, zeta, tags, grid_index, delay_index):
        arr.setflags(write=False)
    return RefinedMesh(mesh, q, points, interval, zeta, tags, grid_index, delay_index)


def index_of(mesh, s):
    """Refined position of the mesh time ``s`` (within the dedup tolerance)."""
    s = float(s)
    pts = mesh.points
    i = int(np.searchsorted(pts, s))
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(pts) and abs(pts[j] - s) <= mesh.tol:
            best = j
    if best is None:
        raise MeshError(f"{s} is not a point of the refined mesh")
    return best


def locate(mesh, s):
    """Return ``(n, zeta)`` with ``t_n < s <= t_{n+1}`` and ``s = t_n + zeta h``.

    A grid point ``t_{n+1}`` maps to ``(n, 1.0)``.
    """
    l = index_of(mesh, s)
    if l == 0:
        raise MeshError("s = 0 has no enclosing half-open interval")
    return int(mesh.interval[l]), float(mesh.zeta[l])


def match_indices(points, sub, tol):
    """Positions of each ``sub`` time inside the sorted array ``points``.

    Raises :class:`MeshError` if some time is not present within ``tol``.
    """
    points = np.asarray(points)
    sub = np.asarray(sub)
    i = np.clip(np.searchsorted(points, sub), 1, len(points) - 1)
    left, right = points[i - 1], points[i]
    idx = np.where(np.abs(sub - left) <= np.abs(right - sub), i - 1, i)
    if len(points) == 1:
        idx = np.zeros(len(sub), dtype=np.int64)
    miss = np.abs(points[idx] - sub) > tol
    if np.any(miss):
        raise MeshError(f"time {sub[miss][0]} not found among mesh points")
    return idx
