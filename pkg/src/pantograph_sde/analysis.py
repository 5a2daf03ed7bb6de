"""Stability predicates, decay-rate fits and Monte Carlo order studies.

The closed-form mean-square exponent ``alpha`` solves

    2a + b + 2c^2 + (b + 2d^2) q**alpha = 0,

mean-square polynomial stability holds when ``a + b + c^2 + d^2 < 0`` and
almost-sure polynomial stability (with pathwise rate ``(1 + alpha) / 2``) when
``2a + b + 2c^2 + (b + 2d^2) / q < 0``.

Monte Carlo studies run paths in fixed-size chunks.  Chunk boundaries depend
only on the path count and chunk size, and chunk results are reduced in chunk
order, so the output is independent of the number of worker processes.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from .brownian import sample_ensemble
from .errors import FitError, NoRealRootError, NumericalError
from .mesh import build_uniform, match_indices, refine
from .oracle import series_solve
from .scheme import SchemeConfig, integrate_batch, local_truncation


# --------------------------------------------------------------------------
# closed-form stability theory

def alpha_ms(a, b, c, d, q):
    """Mean-square decay exponent from the closed form above."""
    lead = 2 * a + b + 2 * c * c
    delay = b + 2 * d * d
    if not (delay > 0 and lead < 0):
        raise NoRealRootError(
            f"need 2a+b+2c^2 < 0 < b+2d^2, got {lead:g} and {delay:g}")
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    return math.log(-lead / delay) / math.log(q)


def check_ms_stable(a, b, c, d):
    return a + b + c * c + d * d < 0


def check_as_stable(a, b, c, d, q):
    """Return ``(verdict, rate)``.

    ``rate`` is ``None`` when the test fails, and also when ``b + 2d^2 = 0``:
    without a delayed term there is no polynomial rate to report.
    """
    ok = 2 * a + b + 2 * c * c + (b + 2 * d * d) / q < 0
    if not ok:
        return False, None
    if not b + 2 * d * d > 0:
        return True, None
    return True, (1.0 + alpha_ms(a, b, c, d, q)) / 2.0


@dataclass
class StabilityReport:
    alpha: float
    ms_stable: bool
    as_stable: bool
    as_rate: float = None
    fitted_ms_slope: float = None
    window: tuple = None
    paths: int = None
    flags: set = field(default_factory=set)


def stability_report(a, b, c, d, q):
    try:
        alpha = alpha_ms(a, b, c, d, q)
        flags = set()
    except NoRealRootError:
        alpha, flags = None, {"NO_REAL_ROOT"}
    as_ok, rate = check_as_stable(a, b, c, d, q)
    return StabilityReport(alpha, check_ms_stable(a, b, c, d), as_ok, rate, flags=flags)


# --------------------------------------------------------------------------
# log-log fitting

@dataclass
class DecayFit:
    slope: float
    intercept: float
    residual: float
    t: np.ndarray
    values: np.ndarray
    flags: set = field(default_factory=set)


def _loglog(x, y):
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.linalg.norm(ly - (slope * lx + intercept)))
    return float(slope), float(intercept), resid


def fit_ms_decay(t, msq, t_min=None):
    """Least-squares slope of ``log E|y|^2`` against ``log t``.

    Non-positive values (the estimate reached its noise floor) are dropped
    and the fit is flagged ``NOISE_FLOOR``.
    """
    t = np.asarray(t, dtype=float)
    msq = np.asarray(msq, dtype=float)
    if t_min is not None:
        keep = t >= t_min
        t, msq = t[keep], msq[keep]
    if np.any(t <= 1.0):
        raise ValueError("decay window must lie in t > 1")
    flags = set()
    pos = msq > 0
    if not pos.all():
        flags.add("NOISE_FLOOR")
        t, msq = t[pos], msq[pos]
    if len(t) < 2:
        raise FitError("fewer than two positive samples in window", "NOISE_FLOOR")
    slope, intercept, resid = _loglog(t, msq)
    return DecayFit(slope, intercept, resid, t, msq, flags)


def fit_pathwise_decay(t, y):
    """Slope of ``log|y(t)|`` against ``log t`` for one path (diagnostic only)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mag = np.linalg.norm(y.reshape(len(t), -1), axis=1)
    if np.any(mag == 0):
        raise FitError("zero state in window", "ZERO_VALUE")
    return _loglog(t, mag)[0]


@dataclass
class OrderFit:
    h: np.ndarray
    e: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    ci95: tuple
    residual: float
    stderr: np.ndarray = None
    flags: set = field(default_factory=set)

    def rows(self):
        se = self.stderr if self.stderr is not None else np.full(len(self.h), np.nan)
        return list(zip(self.h.tolist(), self.e.tolist(), se.tolist()))


def fit_order(h, e, stderr=None, min_points=3):
    """Fit ``e ~ C h**p`` by least squares on ``(log h, log e)``."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    if h.shape != e.shape or h.ndim != 1:
        raise ValueError("h and e must be 1-d arrays of equal length")
    if len(h) < min_points:
        raise FitError(f"need at least {min_points} step sizes, got {len(h)}")
    if np.any(h <= 0):
        raise ValueError("step sizes must be positive")
    if np.any(e <= 0):
        raise FitError("non-positive error values cannot be fitted", "ZERO_ERROR")
    order = np.argsort(-h)
    h, e = h[order], e[order]
    if stderr is not None:
        stderr = np.asarray(stderr, dtype=float)[order]
    reg = stats.linregress(np.log(h), np.log(e))
    k = len(h)
    if k > 2:
        half = stats.t.ppf(0.975, k - 2) * reg.stderr
    else:
        half = float("nan")
    resid = float(np.linalg.norm(np.log(e) - (reg.slope * np.log(h) + reg.intercept)))
    return OrderFit(h, e, float(reg.slope), float(reg.intercept), float(reg.stderr),
                    (reg.slope - half, reg.slope + half), resid, stderr)


# --------------------------------------------------------------------------
# path-parallel machinery

def chunk_ranges(M, chunk):
    return [(s, min(s + chunk, M)) for s in range(0, M, chunk)]


def parallel_map(func, tasks, workers=1):
    """Ordered map; uses processes when ``workers > 1``."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def _stack_sum(parts):
    """Pairwise (numpy) sum over chunk results, in chunk order."""
    return np.sum(np.stack(parts), axis=0)


def _mean_se(total, total_sq, M):
    mean = total / M
    var = np.maximum(total_sq / M - mean * mean, 0.0) * M / max(M - 1, 1)
    return mean, np.sqrt(var / M)


def _rms_se(total, total_sq, M):
    """``sqrt(E X)`` and its delta-method standard error from sums of X, X^2."""
    mean, se = _mean_se(total, total_sq, M)
    rms = np.sqrt(mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        se_rms = np.where(rms > 0, se / (2 * rms), 0.0)
    return rms, se_rms


def _steps(T, h_list):
    Ns = []
    for h in h_list:
        N = int(round(T / h))
        if N < 1 or abs(N * h - T) > 1e-9 * T:
            raise ValueError(f"step {h} does not divide the horizon {T}")
        Ns.append(N)
    return Ns


def _nested_counts(T, h_list, fine_factor):
    h_list = sorted(map(float, h_list), reverse=True)
    if len(h_list) < 3:
        raise ValueError("need at least three step sizes")
    Ns = _steps(T, h_list)
    N_ref = Ns[-1] * int(fine_factor)
    for N in Ns:
        if N_ref % N:
            raise ValueError("reference grid must be a refinement of every coarse grid")
    return h_list, Ns, N_ref


class StudyError(NumericalError):
    """Integration failure inside a Monte Carlo study, with its location."""

    def __init__(self, cause, h, paths):
        super().__init__(f"{cause.code} at h={h:g}, paths {paths[0]}..{paths[1] - 1}: {cause}")
        self.code = cause.code
        self.h = h
        self.paths = paths


def _integrate(problem, mesh, W, cfg, paths):
    try:
        return integrate_batch(problem, mesh, W, cfg)
    except NumericalError as exc:
        raise StudyError(exc, mesh.h, paths) from exc


# --------------------------------------------------------------------------
# mean-square decay

@dataclass
class MomentCurve:
    t: np.ndarray
    ms: np.ndarray
    stderr: np.ndarray
    sup_ms: float
    paths: int


def _moment_chunk(args):
    problem, mesh, cfg, seed, start, stop = args
    W = sample_ensemble(seed, range(start, stop), problem.m, mesh.points)
    Y = _integrate(problem, mesh, W, cfg, (start, stop))[:, mesh.grid_index]
    sq = np.sum(Y * Y, axis=2)
    return sq.sum(axis=0), (sq * sq).sum(axis=0), sq.max(axis=1).sum()


def ms_curve(problem, T, N, cfg, M, seed, workers=1, chunk=250):
    """Ensemble estimate of ``E|y(t_n)|^2`` on the uniform grid."""
    if M < 1:
        raise ValueError("path count must be >= 1")
    mesh = refine(build_uniform(T, N), problem.q)
    tasks = [(problem, mesh, cfg, seed, s, e) for s, e in chunk_ranges(M, chunk)]
    parts = parallel_map(_moment_chunk, tasks, workers)
    tot = _stack_sum([p[0] for p in parts])
    tot2 = _stack_sum([p[1] for p in parts])
    sup = float(_stack_sum([np.array(p[2]) for p in parts])) / M
    mean, se = _mean_se(tot, tot2, M)
    return MomentCurve(mesh.base.points.copy(), mean, se, sup, M)


def tail_indices(t, lo, hi, count=40):
    """Grid positions closest to ``count`` log-spaced times in ``[lo, hi]``."""
    t = np.asarray(t)
    want = np.geomspace(lo, hi, count)
    idx = np.unique(np.clip(np.searchsorted(t, want), 0, len(t) - 1))
    return idx[(t[idx] >= lo * (1 - 1e-12)) & (t[idx] <= hi * (1 + 1e-12))]


def stability_fit(problem, T, h, cfg, M, seed, window=None, count=40,
                  workers=1, chunk=250):
    """Simulate the mean-square curve and fit its log-log tail slope.

    ``window`` defaults to ``[T/10, T]``.  Returns ``(report, curve, fit)``
    where ``report`` combines the closed-form verdicts of the declared
    constants with the fitted slope.
    """
    N = int(round(T / h))
    curve = ms_curve(problem, T, N, cfg, M, seed, workers, chunk)
    lo, hi = window if window is not None else (T / 10.0, T)
    idx = tail_indices(curve.t, lo, hi, count)
    if len(idx) < 8:
        raise ValueError("decay window must contain at least 8 samples")
    fit = fit_ms_decay(curve.t[idx], curve.ms[idx])
    k = problem.constants
    report = stability_report(k.a, k.b, k.c, k.d, problem.q)
    report.fitted_ms_slope = fit.slope
    report.window = (lo, hi)
    report.paths = M
    report.flags |= fit.flags
    return report, curve, fit


# --------------------------------------------------------------------------
# strong convergence

@dataclass
class StrongErrorResult:
    fit: OrderFit
    h: np.ndarray
    error: np.ndarray
    stderr: np.ndarray
    argmax_time: np.ndarray
    h_ref: float
    paths: int


def _strong_chunk(args):
    problem, ref, coarse, cfg, seed, start, stop = args
    W = sample_ensemble(seed, range(start, stop), problem.m, ref.points)
    X = _integrate(problem, ref, W, cfg, (start, stop))
    out = []
    for mesh, idx, shared, ref_shared in coarse:
        Y = _integrate(problem, mesh, W[:, idx], cfg, (start, stop))
        err = Y[:, shared] - X[:, ref_shared]
        sq = np.sum(err * err, axis=2)
        out.append((sq.sum(axis=0), (sq * sq).sum(axis=0)))
    return out


def strong_error(problem, theta, h_list, M, seed, T=1.0, fine_factor=16,
                 workers=1, chunk=250, cfg=None):
    """Strong error ``max_s (E|x_ref(s) - y_h(s)|^2)^(1/2)`` for each step ``h``.

    The reference uses step ``min(h_list) / fine_factor`` on the same
    Brownian paths, presampled on the reference mesh (which contains every
    coarse refined mesh).  The maximum runs over points shared by all coarse
    refined meshes.
    """
    if M < 2:
        raise ValueError("need at least two paths")
    cfg = cfg or SchemeConfig(theta=theta)
    h_list, Ns, N_ref = _nested_counts(T, h_list, fine_factor)
    ref = refine(build_uniform(T, N_ref), problem.q)
    meshes = [refine(build_uniform(T, N), problem.q) for N in Ns]
    tol = ref.tol
    shared_t = meshes[0].points
    for m in meshes[1:]:
        pos = np.clip(np.searchsorted(m.points, shared_t), 0, len(m) - 1)
        lo = np.clip(pos - 1, 0, None)
        hit = (np.abs(m.points[pos] - shared_t) <= tol) | (np.abs(m.points[lo] - shared_t) <= tol)
        shared_t = shared_t[hit]
    ref_shared = match_indices(ref.points, shared_t, tol)
    coarse = [(m, match_indices(ref.points, m.points, tol),
               match_indices(m.points, shared_t, tol), ref_shared) for m in meshes]

    tasks = [(problem, ref, coarse, cfg, seed, s, e) for s, e in chunk_ranges(M, chunk)]
    parts = parallel_map(_strong_chunk, tasks, workers)
    errs, ses, where = [], [], []
    for j in range(len(meshes)):
        tot = _stack_sum([p[j][0] for p in parts])
        tot2 = _stack_sum([p[j][1] for p in parts])
        rms, se = _rms_se(tot, tot2, M)
        k = int(np.argmax(rms))
        errs.append(rms[k])
        ses.append(se[k])
        where.append(shared_t[k])
    errs, ses = np.array(errs), np.array(ses)
    fit = fit_order(np.array(h_list), errs, ses)
    return StrongErrorResult(fit, np.array(h_list), errs, ses, np.array(where),
                             T / N_ref, M)


# --------------------------------------------------------------------------
# consistency

@dataclass
class ConsistencyResult:
    h: np.ndarray
    mean_defect: np.ndarray       # |E delta|
    mean_stderr: np.ndarray
    rms_defect: np.ndarray        # (E|delta|^2)^(1/2)
    rms_stderr: np.ndarray
    avg_fit: OrderFit             # None if fewer than three h survive the noise floor
    ms_fit: OrderFit
    max_mean_defect: np.ndarray   # max over steps n, zeta fixed
    max_rms_defect: np.ndarray
    flags: set
    surviving: np.ndarray         # h values used by avg_fit
    anchor: np.ndarray            # t_n used for each h
    h_ref: float
    paths: int


def _consistency_chunk(args):
    (problem, ref, cfg, seed, start, stop, plan, zeta, antithetic) = args
    W = sample_ensemble(seed, range(start, stop), problem.m, ref.points)
    if antithetic:
        W = np.concatenate([W, -W])
    X = _integrate(problem, ref, W, cfg, (start, stop))
    P = stop - start
    out = []
    for h, anchors in plan:
        rows = []
        for t_n in anchors:
            dlt = local_truncation(problem, ref.points, X, W, t_n, zeta, h, cfg.theta, ref.tol)
            pair = (dlt[:P] + dlt[P:]) / 2 if antithetic else dlt
            sq = np.sum(dlt * dlt, axis=1)
            rows.append((pair.sum(axis=0), (pair * pair).sum(axis=0),
                         sq.sum(), (sq * sq).sum()))
        out.append(rows)
    return out


def consistency_orders(problem, theta, h_list, M, seed, t_anchor=0.5, zeta=1.0,
                       antithetic=True, fine_factor=16, horizon=None, workers=1,
                       chunk=500, cfg=None, max_over_n=True):
    """Monte Carlo consistency orders of the local truncation error.

    The defect is sampled at ``t_n``, the grid point at or below ``t_anchor``
    for each ``h``, with the given ``zeta``.  With ``antithetic`` every
    Brownian path is paired with its negation: ``M`` counts paths including
    the mirrored ones and must be even.  ``E delta`` is estimated from pair
    averages.

    The average-order fit excludes step sizes at which the standard error
    exceeds half of the estimate (flag ``NOISE_FLOOR``); only the leading run
    of clean step sizes is kept.

    With ``max_over_n`` the defect is also evaluated at every step of the
    horizon and the maximum over ``n`` of each statistic is reported.
    """
    cfg = cfg or SchemeConfig(theta=theta)
    if antithetic and M % 2:
        raise ValueError("antithetic sampling needs an even path count")
    if not (0 < zeta <= 1):
        raise ValueError("zeta must lie in (0, 1]")
    h_list = sorted(map(float, h_list), reverse=True)
    h_max = h_list[0]
    if horizon is None:
        horizon = math.ceil((t_anchor + h_max) / h_max - 1e-9) * h_max
    h_list, Ns, N_ref = _nested_counts(horizon, h_list, fine_factor)
    ref = refine(build_uniform(horizon, N_ref), problem.q)

    plan, anchors = [], []
    for h, N in zip(h_list, Ns):
        n_anchor = int(math.floor(t_anchor / h + 1e-9))
        if n_anchor + 1 > N:
            raise ValueError("anchor step exceeds the horizon")
        anchors.append(n_anchor * h)
        steps = [n_anchor * h]
        if max_over_n:
            steps += [n * h for n in range(N) if n != n_anchor]
        plan.append((h, steps))

    P = M // 2 if antithetic else M
    tasks = [(problem, ref, cfg, seed, s, e, plan, zeta, antithetic)
             for s, e in chunk_ranges(P, chunk)]
    parts = parallel_map(_consistency_chunk, tasks, workers)

    def reduce(j, i):
        tot = _stack_sum([p[j][i][0] for p in parts])
        tot2 = _stack_sum([p[j][i][1] for p in parts])
        sq = _stack_sum([np.array(p[j][i][2]) for p in parts])
        sq2 = _stack_sum([np.array(p[j][i][3]) for p in parts])
        mean, mean_se = _mean_se(tot, tot2, P)
        rms, rms_se = _rms_se(sq, sq2, 2 * P if antithetic else P)
        return (float(np.linalg.norm(mean)), float(np.linalg.norm(mean_se)),
                float(rms), float(rms_se))

    anchor_stats, max_mean, max_rms = [], [], []
    for j, (h, steps) in enumerate(plan):
        stats_n = [reduce(j, i) for i in range(len(steps))]
        anchor_stats.append(stats_n[0])
        max_mean.append(max(s[0] for s in stats_n))
        max_rms.append(max(s[2] for s in stats_n))
    mean_d, mean_se, rms_d, rms_se = map(np.array, zip(*anchor_stats))
    h_arr = np.array(h_list)

    flags = set()
    clean = mean_se <= 0.5 * mean_d
    if not clean.all():
        flags.add("NOISE_FLOOR")
    keep = np.cumprod(clean).astype(bool)
    avg_fit = None
    if keep.sum() >= 3:
        avg_fit = fit_order(h_arr[keep], mean_d[keep], mean_se[keep])
        avg_fit.flags |= flags
    ms_fit = fit_order(h_arr, rms_d, rms_se)
    return ConsistencyResult(h_arr, mean_d, mean_se, rms_d, rms_se, avg_fit, ms_fit,
                             np.array(max_mean), np.array(max_rms), flags,
                             h_arr[keep], np.array(anchors), horizon / N_ref, M)


# --------------------------------------------------------------------------
# deterministic oracle comparison

def series_error(problem, h_list, T=1.0, cfg=None):
    """Error at ``T`` of the scheme against the power series, for ``g = 0``.

    Only meaningful for scalar linear drift ``a x + b y`` problems.
    """
    cfg = cfg or SchemeConfig(theta=0.0)
    a, b = problem.f.a, problem.f.b
    exact = series_solve(a, b, problem.q, float(problem.x0[0]), T)
    errs = []
    for N in _steps(T, h_list):
        mesh = refine(build_uniform(T, N), problem.q)
        W = np.zeros((1, len(mesh), problem.m))
        y = integrate_batch(problem, mesh, W, cfg)[0, -1, 0]
        errs.append(abs(y - exact))
    return fit_order(np.array(h_list, dtype=float), np.array(errs))
