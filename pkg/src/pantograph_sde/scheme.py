"""Semi-implicit theta-Euler scheme on a refined proportional-delay mesh.

For each step ``n`` the grid value is

    y(t_{n+1}) = y(t_n) + h [(1-theta) f_n + theta f_{n+1}] + g_n (B(t_{n+1}) - B(t_n))

with ``f_n = f(t_n, y(t_n), y(q t_n))``, ``f_{n+1}`` evaluated at
``(t_{n+1}, y(t_{n+1}), y(q t_{n+1}))`` and ``g_n`` frozen at the left end.
Refined points ``t_n + zeta h`` inside the step use the same formula with ``h``
replaced by ``zeta h`` and the Brownian increment up to that point.

When ``q t_{n+1}`` lies inside ``(t_n, t_{n+1})`` (only for ``n < q/(1-q)``) the
implicit stage depends on a delayed value produced by the same step; both
unknowns are then iterated together.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import (ImplicitDivergedError, MeshError, NonFiniteStateError,
                     ReferenceCoverageError, StepTooLargeError)
from .mesh import match_indices


@dataclass(frozen=True)
class SchemeConfig:
    theta: float = 0.5
    tol: float = 1e-12
    max_iter: int = 50
    damping: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.tol > 0:
            raise ValueError("implicit tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


@dataclass(eq=False)
class Trajectory:
    """Numerical solution on every point of ``mesh``; ``values`` is ``(L, d)``."""

    mesh: object
    values: np.ndarray
    theta: float
    seed: int = None
    path_index: int = None

    @property
    def times(self):
        return self.mesh.points

    def at_grid(self):
        return self.values[self.mesh.grid_index]


def check_step(problem, h, cfg):
    """Reject implicit steps with ``theta h sqrt(K) >= 1/2``.

    Under that bound the fixed-point map of every implicit stage, including
    the coupled two-unknown stage, is a contraction.
    """
    if cfg.theta > 0 and cfg.theta * h * math.sqrt(problem.constants.K) >= 0.5:
        raise StepTooLargeError(
            f"theta*h*sqrt(K) = {cfg.theta * h * math.sqrt(problem.constants.K):.4g}"
            " must stay below 1/2")


def solve_implicit(phi, guess, cfg, full_output=False):
    """Damped Picard iteration for ``z = phi(z)``.

    ``z`` may be a batch; convergence is declared when every row satisfies
    ``|z - phi(z)| <= cfg.tol`` in the Euclidean norm over its trailing axes.
    """
    z = np.asarray(guess, dtype=float)
    axes = tuple(range(1, z.ndim)) if z.ndim > 1 else None
    for it in range(cfg.max_iter + 1):
        nxt = phi(z)
        diff = nxt - z
        with np.errstate(over="ignore", invalid="ignore"):
            res = np.sqrt(np.sum(diff * diff, axis=axes))
        if np.all(res <= cfg.tol):
            out = nxt if it else z
            return (out, it) if full_output else out
        if not np.all(np.isfinite(res)):
            break
        z = z + cfg.damping * diff
    raise ImplicitDivergedError(
        f"fixed-point residual {np.max(res):.3g} above {cfg.tol:g} "
        f"after {cfg.max_iter} iterations")


def _apply(G, dB):
    return np.matmul(G, dB[..., None])[..., 0]


def run(problem, mesh, brown, cfg, M=1, observer=None):
    """Integrate ``M`` paths at once.

    ``brown(idx)`` returns Brownian values at refined positions ``idx`` with
    shape ``(M, m)`` for an integer or ``(M, k, m)`` for an index array.
    ``observer(n)``, if given, is called before step ``n`` starts.

    Returns an array ``(M, L, d)``.
    """
    check_step(problem, mesh.h, cfg)
    theta, h = cfg.theta, mesh.h
    f, g = problem.drift, problem.diffusion
    pts = mesh.points
    gidx, didx, zeta = mesh.grid_index, mesh.delay_index, mesh.zeta
    Y = np.empty((M, len(mesh), problem.d))
    Y[:, 0] = problem.x0

    for n in range(mesh.N):
        if observer is not None:
            observer(n)
        i0, i1 = gidx[n], gidx[n + 1]
        t0, t1 = pts[i0], pts[i1]
        yn = Y[:, i0]
        fn = f(t0, yn, Y[:, didx[n]])
        Gn = g(t0, yn, Y[:, didx[n]])
        Bn = brown(i0)
        explicit = yn + (1.0 - theta) * h * fn + _apply(Gn, brown(i1) - Bn)
        lq = didx[n + 1]

        if not mesh.coupled(n):
            yq1 = Y[:, lq]
            if theta == 0.0:
                y1 = explicit
            else:
                y1 = solve_implicit(lambda z: explicit + theta * h * f(t1, z, yq1),
                                    explicit + theta * h * fn, cfg)
        elif theta == 0.0:
            y1 = explicit
        else:
            zq = zeta[lq]
            explicit_q = yn + (1.0 - theta) * zq * h * fn + _apply(Gn, brown(lq) - Bn)
            d = problem.d

            def phi(z):
                fz = f(t1, z[:, :d], z[:, d:])
                return np.concatenate([explicit + theta * h * fz,
                                       explicit_q + theta * zq * h * fz], axis=1)

            guess = np.concatenate([explicit + theta * h * fn,
                                    explicit_q + theta * zq * h * fn], axis=1)
            z = solve_implicit(phi, guess, cfg)
            y1 = z[:, :d]
            Y[:, lq] = z[:, d:]

        Y[:, i1] = y1
        inner = np.arange(i0 + 1, i1)
        if inner.size:
            slope = (1.0 - theta) * fn
            if theta:
                slope = slope + theta * f(t1, y1, Y[:, lq])
            dB = brown(inner) - Bn[:, None, :]
            Y[:, inner] = (yn[:, None, :] + (zeta[inner] * h)[None, :, None] * slope[:, None, :]
                           + np.matmul(Gn[:, None], dB[..., None])[..., 0])
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(Y[:, inner]))):
            raise NonFiniteStateError(f"non-finite state at step {n} (t = {t1:g})")
    return Y


def integrate(problem, mesh, path, cfg, observer=None):
    """Integrate one path driven by ``path`` (a :class:`BrownianPath`).

    The path should already be presampled on ``mesh.points`` (or a finer
    superset) in ascending order; otherwise samples are drawn on first use.
    """
    if path.m != problem.m:
        raise ValueError("Brownian dimension does not match the problem")
    pts = mesh.points

    def brown(idx):
        if np.ndim(idx) == 0:
            return path.query(pts[idx])[None, :]
        return path.values_at(pts[idx])[None, :, :]

    Y = run(problem, mesh, brown, cfg, M=1, observer=observer)
    return Trajectory(mesh, Y[0], cfg.theta, path.seed, path.path_index)


def integrate_batch(problem, mesh, W, cfg, observer=None):
    """Integrate paths whose Brownian values on ``mesh.points`` are ``W``.

    ``W`` has shape ``(M, L, m)``; the result has shape ``(M, L, d)``.
    """
    W = np.asarray(W)
    if W.shape[1:] != (len(mesh), problem.m):
        raise ValueError(f"Brownian array shape {W.shape} does not fit the mesh")
    return run(problem, mesh, lambda idx: W[:, idx], cfg, M=W.shape[0],
               observer=observer)


def local_truncation(problem, ref_points, ref_values, ref_W, t_n, zeta, h, theta, tol):
    """Defect of the reference solution inserted into one scheme step.

    ``ref_values`` ``(M, L, d)`` and ``ref_W`` ``(M, L, m)`` live on the sorted
    ``ref_points``, which must contain ``t_n``, ``q t_n``, ``t_n + h``,
    ``q (t_n + h)`` and ``t_n + zeta h``.  Returns ``(M, d)``.
    """
    q = problem.q
    t1 = t_n + h
    need = np.array([t_n, q * t_n, t1, q * t1, t_n + zeta * h])
    try:
        i_n, i_qn, i_1, i_q1, i_z = match_indices(ref_points, need, tol)
    except MeshError as exc:
        raise ReferenceCoverageError(str(exc)) from None
    x = ref_values
    fn = problem.drift(t_n, x[:, i_n], x[:, i_qn])
    f1 = problem.drift(t1, x[:, i_1], x[:, i_q1])
    Gn = problem.diffusion(t_n, x[:, i_n], x[:, i_qn])
    step = (x[:, i_n] + (1.0 - theta) * zeta * h * fn + theta * zeta * h * f1
            + _apply(Gn, ref_W[:, i_z] - ref_W[:, i_n]))
    return x[:, i_z] - step


def local_truncation_sample(problem, t_n, zeta, h, cfg, path, reference):
    """Single-path defect using a fine ``reference`` :class:`Trajectory`.

    ``path`` is the :class:`BrownianPath` that drove the reference.
    """
    pts = reference.mesh.points
    W = path.values_at(pts)[None]
    return local_truncation(problem, pts, reference.values[None], W, t_n, zeta, h,
                            cfg.theta, reference.mesh.tol)[0]

