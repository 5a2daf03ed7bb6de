# Mean-square decay of a linear equation with a proportional delay.
#
#   dx = (a x + b x(qt)) dt + (c x + d x(qt)) dB
#
# The closed-form exponent alpha bounds how fast E x(t)^2 can decay.  We
# compare it with a simulated ensemble on a modest horizon.

import numpy as np

from pantograph_sde.analysis import stability_fit, stability_report
from pantograph_sde.model import linear
from pantograph_sde.scheme import SchemeConfig

# %% closed-form verdicts
a, b, c, d, q = -2.0, 0.5, 0.5, 0.5, 0.5
rep = stability_report(a, b, c, d, q)
print("alpha       ", rep.alpha)
print("ms stable   ", rep.ms_stable)
print("as stable   ", rep.as_stable, "pathwise rate", rep.as_rate)

# q = 0.25 weakens the delayed term's decay: the almost-sure test fails
print("q = 0.25    ", stability_report(a, b, c, d, 0.25).as_stable)

# %% simulated tail slope (small run; the acceptance suite uses T = 200)
p = linear(a, b, c, d, q)
report, curve, fit = stability_fit(p, T=50.0, h=0.01, cfg=SchemeConfig(theta=0.5),
                                   M=300, seed=1, window=(5.0, 50.0))
print(f"fitted slope {fit.slope:.3f} vs alpha {report.alpha:.3f}")

# the fitted slope sits below alpha: the bound is one-sided
for t in (5, 10, 20, 40):
    k = np.searchsorted(curve.t, t)
    print(f"t = {t:3d}  E x^2 = {curve.ms[k]:.3e} +- {curve.stderr[k]:.1e}")
