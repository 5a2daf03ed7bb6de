"""Independent reference solutions used to check the integrator.

* power series of the deterministic pantograph equation
  ``x'(t) = abar x(t) + bbar x(qt)``,
* the polynomial decay exponent of that equation and an envelope test for
  functions obeying the matching differential inequality,
* the exact second moment of the delay-free Ornstein-Uhlenbeck process.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import NoRealRootError


class PantographSeries:
    """Taylor coefficients of the solution of ``x' = abar x + bbar x(qt)``.

    Matching powers of ``t`` gives ``c_{k+1} = (abar + bbar q^k) c_k / (k + 1)``
    with ``c_0 = x0``; the series is entire.
    """

    def __init__(self, abar, bbar, q, x0, order=200):
        self.abar, self.bbar, self.q, self.x0 = float(abar), float(bbar), float(q), float(x0)
        c = np.empty(order + 1)
        c[0] = self.x0
        qk = 1.0
        for k in range(order):
            c[k + 1] = (self.abar + self.bbar * qk) * c[k] / (k + 1)
            qk *= self.q
        self.coefficients = c

    @property
    def order(self):
        return len(self.coefficients) - 1

    def __call__(self, t, tol=1e-16):
        return series_sum(self.coefficients, t, tol)


def series_sum(coefficients, t, tol):
    """Partial sum that stops after two consecutive negligible terms."""
    t = float(t)
    total, power, small = 0.0, 1.0, 0
    for c in coefficients:
        term = c * power
        total += term
        if abs(term) < tol * (1.0 + abs(total)):
            small += 1
            if small == 2:
                break
        else:
            small = 0
        power *= t
    return total


def series_solve(abar, bbar, q, x0, t, tol=1e-16, max_order=200):
    """Value at ``t`` of the deterministic pantograph solution.

    Terms are summed until two consecutive ones fall below
    ``tol * (1 + |partial sum|)``, with at most ``max_order`` terms.  For large
    ``|abar| t`` the alternating terms cancel heavily; keep ``|abar| t`` below
    roughly 20 for double-precision accuracy.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t < 0:
        raise ValueError("t must be non-negative")
    return PantographSeries(abar, bbar, q, x0, max_order)(t, tol)


def decay_exponent_det(abar, bbar, q):
    """Root ``alpha`` of ``abar + bbar q**alpha = 0``."""
    if not (abar < 0 and bbar > 0):
        raise NoRealRootError(f"need abar < 0 < bbar, got abar={abar}, bbar={bbar}")
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    return math.log(-abar / bbar) / math.log(q)


@dataclass
class EnvelopeResult:
    ok: bool
    margin: float     # max over the tail of p(t) / (C p(0) t**alpha); <= 1 passes
    scale: float      # fitted C p(0)
    alpha: float


def envelope_check(t, p, abar, bbar, q, fit_window=(1.0, 2.0)):
    """Test ``p(t) <= C p(0) t**alpha`` on the tail ``t > fit_window[1]``.

    The product ``C p(0)`` is not known in advance; it is fitted as the
    maximum of ``p(t) / t**alpha`` over ``fit_window``.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("t and p must be 1-d arrays of equal length")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be increasing")
    if np.any(p < 0):
        raise ValueError("p must be non-negative")
    if not np.any(p > 0):
        raise ValueError("all samples are zero")
    alpha = decay_exponent_det(abar, bbar, q)
    lo, hi = fit_window
    fit = (t >= lo) & (t <= hi)
    tail = t > hi
    if not fit.any() or not tail.any():
        raise ValueError("grid must cover the fit window and extend beyond it")
    scale = float(np.max(p[fit] / t[fit] ** alpha))
    margin = float(np.max(p[tail] / (scale * t[tail] ** alpha)))
    return EnvelopeResult(margin <= 1.0, margin, scale, alpha)


def ou_second_moment(a, sigma, x0, T):
    """``E x(T)^2`` for ``dx = a x dt + sigma dB``, ``x(0) = x0``.

    Uses ``expm1`` so that small ``|a|`` stays accurate; ``a = 0`` gives the
    limit ``x0^2 + sigma^2 T``.
    """
    if a == 0:
        return x0 * x0 + sigma * sigma * T
    return x0 * x0 * math.exp(2 * a * T) + sigma * sigma * math.expm1(2 * a * T) / (2 * a)
