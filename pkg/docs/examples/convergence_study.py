# Strong convergence of the theta-Euler scheme against a fine reference
# driven by the same Brownian paths.

from pantograph_sde.analysis import consistency_orders, strong_error
from pantograph_sde.model import linear

p = linear(-2.0, 0.5, 0.5, 0.5, 0.5)
hs = [2.0 ** -k for k in range(3, 8)]

# %% strong error, one fit per theta
for theta in (0.0, 0.5, 1.0):
    res = strong_error(p, theta, hs, M=400, seed=3, fine_factor=8)
    lo, hi = res.fit.ci95
    print(f"theta = {theta}: slope {res.fit.slope:.3f}  CI [{lo:.3f}, {hi:.3f}]")
    for h, e, se in res.fit.rows():
        print(f"    h = {h:.5f}  error {e:.4e} +- {se:.1e}")

# %% local truncation: the root-mean-square defect scales like h
res = consistency_orders(p, 0.0, hs, M=2000, seed=4, fine_factor=8, max_over_n=False)
print("mean-square defect slope", round(res.ms_fit.slope, 3))
print("mean defect", res.mean_defect, "flags", sorted(res.flags))
