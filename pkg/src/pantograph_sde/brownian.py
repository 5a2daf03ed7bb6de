"""Lazily sampled Wiener paths with Brownian-bridge refinement.

A :class:`BrownianPath` remembers every value it has handed out.  Queries past
the last sampled time draw fresh Gaussian increments; queries between two
sampled times draw from the bridge law conditioned on both neighbours.  A
coarse solution and a fine reference solution can therefore be driven by one
and the same realisation, provided the finest mesh is presampled first.

Each ``(seed, path_index)`` pair owns an independent Philox stream derived
through :class:`numpy.random.SeedSequence`, so path ``i`` is the same no matter
which worker generates it or in which order paths are visited.
"""

import bisect
import math

import numpy as np

from .errors import BrownianError

SNAP = 1e-12


def path_rng(seed, path_index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


class BrownianPath:
    """One realisation of an ``m``-dimensional standard Brownian motion."""

    def __init__(self, m, seed, path_index=0):
        if m < 1:
            raise BrownianError(f"dimension must be positive, got {m}")
        self.m = int(m)
        self.seed = int(seed)
        self.path_index = int(path_index)
        self._rng = path_rng(seed, path_index)
        self._times = [0.0]
        self._values = [np.zeros(self.m)]

    def __len__(self):
        return len(self._times)

    @property
    def t_max(self):
        return self._times[-1]

    @property
    def times(self):
        return np.array(self._times)

    def _find(self, t):
        """Index of a stored time within the snap tolerance, else ``None``."""
        i = bisect.bisect_left(self._times, t)
        tol = SNAP * max(1.0, t)
        for j in (i, i - 1):
            if 0 <= j < len(self._times) and abs(self._times[j] - t) <= tol:
                return j
        return None

    @staticmethod
    def _check(t):
        t = float(t)
        if not math.isfinite(t):
            raise BrownianError(f"query time must be finite, got {t}")
        if t < 0:
            raise BrownianError(f"query time must be non-negative, got {t}")
        return t

    def query(self, t):
        """Return ``B(t)``, sampling and memoising it if necessary."""
        t = self._check(t)
        j = self._find(t)
        if j is not None:
            return self._values[j]
        i = bisect.bisect_left(self._times, t)
        if i == len(self._times):
            dt = t - self._times[-1]
            w = self._values[-1] + math.sqrt(dt) * self._rng.standard_normal(self.m)
        else:
            t0, t1 = self._times[i - 1], self._times[i]
            w0, w1 = self._values[i - 1], self._values[i]
            lam = (t - t0) / (t1 - t0)
            sd = math.sqrt((t - t0) * (t1 - t) / (t1 - t0))
            w = w0 + lam * (w1 - w0) + sd * self._rng.standard_normal(self.m)
        self._times.insert(i, t)
        self._values.insert(i, w)
        return w

    def increment(self, t1, t2):
        """``B(t2) - B(t1)`` for ``0 <= t1 <= t2``."""
        t1, t2 = self._check(t1), self._check(t2)
        if t1 > t2:
            raise BrownianError(f"increment needs t1 <= t2, got {t1} > {t2}")
        if t1 == t2:
            return np.zeros(self.m)
        return self.query(t2) - self.query(t1)

    def presample(self, times):
        """Sample ``times`` (ascending) left to right.

        The stretch beyond the current last sample is drawn in one block of
        increments; earlier times fall back to bridge sampling.
        """
        times = np.asarray(times, dtype=float)
        if times.size == 0:
            return
        if times.ndim != 1 or np.any(np.diff(times) < 0):
            raise BrownianError("presample times must be a sorted 1-d sequence")
        if not np.all(np.isfinite(times)) or times[0] < 0:
            raise BrownianError("presample times must be finite and non-negative")
        tol = SNAP * max(1.0, float(times[-1]))
        tail = times[times > self.t_max + tol]
        for t in times[times <= self.t_max + tol]:
            self.query(t)
        if tail.size:
            tail, w = _extend(self._rng, self.t_max, self._values[-1], tail, tol)
            self._times.extend(tail.tolist())
            self._values.extend(list(w))

    def values_at(self, times):
        """Stacked ``B(t)`` for each of ``times``; samples missing ones in order."""
        return np.array([self.query(t) for t in times]).reshape(len(times), self.m)


def _extend(rng, t_last, w_last, tail, tol):
    """Fresh increments from ``(t_last, w_last)`` over the ascending ``tail``."""
    # near-duplicates inside the tail would give dt = 0
    keep = np.concatenate([[True], np.diff(tail) > tol])
    tail = tail[keep]
    dt = np.diff(np.concatenate([[t_last], tail]))
    z = rng.standard_normal((tail.size, w_last.shape[0]))
    return tail, w_last + np.cumsum(np.sqrt(dt)[:, None] * z, axis=0)


def sample_ensemble(seed, path_indices, m, times):
    """Values of paths ``path_indices`` at the sorted ``times``.

    Returns an array of shape ``(len(path_indices), len(times), m)``.  Row ``k``
    is bit-identical to ``BrownianPath(m, seed, path_indices[k])`` presampled on
    ``times``.
    """
    times = np.asarray(times, dtype=float)
    out = np.empty((len(path_indices), len(times), m))
    fast = (times.size > 1 and times[0] == 0.0 and np.all(np.diff(times) > 0)
            and np.all(np.isfinite(times)))
    tol = SNAP * max(1.0, float(times[-1])) if times.size else SNAP
    fast = fast and bool(np.all(np.diff(times) > tol))
    for k, i in enumerate(path_indices):
        if fast:
            # same draws as BrownianPath.presample on a fresh path
            out[k, 0] = 0.0
            out[k, 1:] = _extend(path_rng(seed, i), 0.0, np.zeros(m), times[1:], tol)[1]
        else:
            path = BrownianPath(m, seed, i)
            path.presample(times)
            out[k] = _stored(path, times)
    return out


def _stored(path, times):
    stored = np.asarray(path._times)
    vals = np.asarray(path._values)
    if len(stored) == len(times) and np.array_equal(stored, times):
        return vals
    idx = np.clip(np.searchsorted(stored, times), 0, len(stored) - 1)
    lo = np.clip(idx - 1, 0, None)
    pick = np.where(np.abs(stored[lo] - times) < np.abs(stored[idx] - times), lo, idx)
    return vals[pick]
