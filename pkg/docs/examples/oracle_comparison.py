# Two limits with known answers: no noise (power series) and no delay
# (Ornstein-Uhlenbeck second moment).

import math

from pantograph_sde.analysis import ms_curve, series_error
from pantograph_sde.model import drift_only, ou
from pantograph_sde.oracle import PantographSeries, ou_second_moment
from pantograph_sde.scheme import SchemeConfig

# %% deterministic equation x' = -x + 0.5 x(t/2)
s = PantographSeries(-1.0, 0.5, 0.5, 1.0)
print("first coefficients", s.coefficients[:4])
print("x(1) =", s(1.0))

fit = series_error(drift_only(-1.0, 0.5, 0.5), [2.0 ** -k for k in range(3, 9)])
print(f"explicit Euler order {fit.slope:.3f}")

# %% Ornstein-Uhlenbeck: dx = -x dt + dB
exact = ou_second_moment(-1.0, 1.0, 1.0, 1.0)
curve = ms_curve(ou(-1.0, 1.0), 1.0, 128, SchemeConfig(theta=0.5), M=4000, seed=5)
print(f"E x(1)^2: simulated {curve.ms[-1]:.4f} +- {curve.stderr[-1]:.4f}, exact {exact:.4f}")
print("closed form", math.exp(-2) + (1 - math.exp(-2)) / 2)
