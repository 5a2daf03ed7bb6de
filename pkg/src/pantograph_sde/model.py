"""Stochastic pantograph problems ``dx = f(t, x, x(qt)) dt + g(t, x, x(qt)) dB``.

Coefficient functions work on batches: ``x`` and ``y`` have shape ``(M, d)``
(one row per sample path) and ``t`` is a scalar.  ``f`` returns ``(M, d)`` and
``g`` returns ``(M, d, m)``.  They must be pure; for multi-process runs they
must also be picklable, which is why the built-in coefficients are small
classes rather than lambdas.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ModelError


@dataclass(frozen=True)
class StructuralConstants:
    """Declared constants of the coefficient bounds.

    ``a``        one-sided drift bound in ``x``
    ``b``        drift Lipschitz constant in the delayed argument
    ``c``, ``d`` diffusion Lipschitz constants in ``x`` and in the delayed argument
    ``K``        joint Lipschitz / linear-growth constant (squared form)

    Zero is accepted for ``b``, ``c``, ``d`` so that delay-free and
    deterministic problems can be expressed; the stability predicates demand
    strictly positive values themselves.
    """

    a: float
    b: float
    c: float
    d: float
    K: float

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "K"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"constant {name} must be finite")
        for name in ("b", "c", "d"):
            if getattr(self, name) < 0:
                raise ModelError(f"constant {name} must be non-negative")
        if self.K <= 0:
            raise ModelError("constant K must be positive")


@dataclass(frozen=True, eq=False)
class SpdeProblem:
    d: int
    m: int
    q: float
    f: object
    g: object
    x0: np.ndarray
    constants: StructuralConstants
    name: str = "custom"

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ModelError("dimensions must be positive")
        if not (0.0 < self.q < 1.0):
            raise ModelError(f"delay ratio q must lie in (0, 1), got {self.q}")
        x0 = np.asarray(self.x0, dtype=float).reshape(self.d)
        if not np.all(np.isfinite(x0)):
            raise ModelError("initial value must be finite")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    def drift(self, t, x, y):
        return np.asarray(self.f(t, x, y), dtype=float)

    def diffusion(self, t, x, y):
        return np.asarray(self.g(t, x, y), dtype=float)


class LinearDrift:
    """``f(t, x, y) = a x + b y`` applied componentwise."""

    def __init__(self, a, b):
        self.a, self.b = float(a), float(b)

    def __call__(self, t, x, y):
        return self.a * x + self.b * y


class LinearDiffusion:
    """``g(t, x, y) = (c x + d y)`` as a ``(d, 1)`` column per path."""

    def __init__(self, c, d):
        self.c, self.d = float(c), float(d)

    def __call__(self, t, x, y):
        return (self.c * x + self.d * y)[..., None]


class ConstantDiffusion:
    def __init__(self, sigma, d=1, m=1):
        self.sigma = float(sigma)
        self.shape = (d, m)

    def __call__(self, t, x, y):
        return np.full(x.shape[:-1] + self.shape, self.sigma)


def linear(a, b, c, d, q, x0=1.0):
    """Scalar ``dx = (a x + b x(qt)) dt + (c x + d x(qt)) dB``."""
    K = 2.0 * max(a * a, b * b, c * c, d * d)
    consts = StructuralConstants(a, abs(b), abs(c), abs(d), K if K > 0 else 1.0)
    return SpdeProblem(1, 1, q, LinearDrift(a, b), LinearDiffusion(c, d),
                       np.array([x0]), consts, name="linear")


def drift_only(a, b, q, x0=1.0):
    """The deterministic pantograph equation ``x' = a x + b x(qt)``."""
    p = linear(a, b, 0.0, 0.0, q, x0)
    return SpdeProblem(1, 1, q, p.f, p.g, p.x0, p.constants, name="drift_only")


def ou(a, sigma, x0=1.0, q=0.5):
    """Delay-free Ornstein-Uhlenbeck ``dx = a x dt + sigma dB``.

    ``q`` is carried for interface uniformity only; no coefficient reads the
    delayed argument.  The additive noise means ``g(t, 0, 0) != 0``.
    """
    K = max(a * a, sigma * sigma)
    consts = StructuralConstants(a, 0.0, 0.0, 0.0, K if K > 0 else 1.0)
    return SpdeProblem(1, 1, q, LinearDrift(a, 0.0), ConstantDiffusion(sigma),
                       np.array([x0]), consts, name="ou")


BUILTIN = {"linear": linear, "drift_only": drift_only, "ou": ou}


def builtin(name, **params):
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise ModelError(f"unknown problem {name!r}; choose from {sorted(BUILTIN)}")
    return factory(**params)


def verify_zero_fixed_point(problem, t_samples, atol=1e-12):
    """Check ``f(t, 0, 0) = 0`` and ``g(t, 0, 0) = 0`` at each sampled time."""
    t_samples = list(t_samples)
    if not t_samples:
        raise ModelError("need at least one sample time")
    zero = np.zeros((1, problem.d))
    for t in t_samples:
        if np.max(np.abs(problem.drift(t, zero, zero)), initial=0.0) > atol:
            return False
        if np.max(np.abs(problem.diffusion(t, zero, zero)), initial=0.0) > atol:
            return False
    return True


@dataclass
class ConstantsReport:
    """Worst observed ratio per inequality; a ratio above one is a violation."""

    ratios: dict
    trials: int

    @property
    def ok(self):
        return all(r <= 1.0 + 1e-9 for r in self.ratios.values())

    def violations(self, slack=1e-9):
        return {k: r for k, r in self.ratios.items() if r > 1.0 + slack}


def _sq(v):
    return np.sum(v * v, axis=tuple(range(1, v.ndim)))


def verify_constants(problem, trials, box=(-1.0, 1.0), t_range=(0.0, 1.0),
                     rng=None, block=256):
    """Spot-check the declared :class:`StructuralConstants` by random sampling.

    Points ``x1, x2, y1, y2`` are drawn uniformly from ``box`` in every
    coordinate and ``t`` uniformly from ``t_range`` (one ``t`` per block).

    Reported ratios, each of which must stay at or below one:

    ``one_sided``   ``1 + (<dx, f(x1,y)-f(x2,y)> - a|dx|^2) / (max(|a|,1e-300)|dx|^2)``
    ``drift_delay`` ``|f(x,y1)-f(x,y2)| / (b |dy|)``
    ``diff_state``  ``|g(x1,y)-g(x2,y)| / (c |dx|)``
    ``diff_delay``  ``|g(x,y1)-g(x,y2)| / (d |dy|)``
    ``lipschitz``   ``max(|df|^2, |dg|^2) / (K (|dx|^2 + |dy|^2))``
    ``growth``      ``max(|f|^2, |g|^2) / (K (1 + |x|^2 + |y|^2))``

    A zero declared constant paired with a nonzero left side gives ``inf``.
    """
    trials = int(trials)
    if trials < 1:
        raise ModelError("trials must be >= 1")
    lo, hi = map(float, box)
    t0, t1 = map(float, t_range)
    if not hi > lo:
        raise ModelError("sampling box has zero volume")
    if t1 < t0:
        raise ModelError("invalid time range")
    rng = np.random.default_rng() if rng is None else rng
    k = problem.constants
    d = problem.d
    worst = dict.fromkeys(
        ("one_sided", "drift_delay", "diff_state", "diff_delay", "lipschitz", "growth"),
        -np.inf)

    def ratio(lhs, rhs):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0),
                         np.where(lhs > 0, np.inf, 0.0))
        return float(np.max(r))

    done = 0
    while done < trials:
        n = min(block, trials - done)
        done += n
        t = rng.uniform(t0, t1)
        x1, x2, y1, y2 = (rng.uniform(lo, hi, (n, d)) for _ in range(4))
        f, g = problem.drift, problem.diffusion
        dx, dy = x1 - x2, y1 - y2
        ndx, ndy = _sq(dx), _sq(dy)

        inner = np.sum(dx * (f(t, x1, y1) - f(t, x2, y1)), axis=1)
        scale = max(abs(k.a), 1e-300) * ndx
        worst["one_sided"] = max(worst["one_sided"],
                                 float(np.max(1.0 + (inner - k.a * ndx) / scale)))
        worst["drift_delay"] = max(worst["drift_delay"], ratio(
            np.sqrt(_sq(f(t, x1, y1) - f(t, x1, y2))), k.b * np.sqrt(ndy)))
        worst["diff_state"] = max(worst["diff_state"], ratio(
            np.sqrt(_sq(g(t, x1, y1) - g(t, x2, y1))), k.c * np.sqrt(ndx)))
        worst["diff_delay"] = max(worst["diff_delay"], ratio(
            np.sqrt(_sq(g(t, x1, y1) - g(t, x1, y2))), k.d * np.sqrt(ndy)))
        lip = np.maximum(_sq(f(t, x1, y1) - f(t, x2, y2)), _sq(g(t, x1, y1) - g(t, x2, y2)))
        worst["lipschitz"] = max(worst["lipschitz"], ratio(lip, k.K * (ndx + ndy)))
        grow = np.maximum(_sq(f(t, x1, y1)), _sq(g(t, x1, y1)))
        worst["growth"] = max(worst["growth"],
                              ratio(grow, k.K * (1.0 + _sq(x1) + _sq(y1))))
    return ConstantsReport(worst, trials)
