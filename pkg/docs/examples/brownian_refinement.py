# A Brownian path can be refined after the fact.  Values already handed out
# never change; new points between them come from the bridge law.

import numpy as np

from pantograph_sde.brownian import BrownianPath, sample_ensemble

path = BrownianPath(m=1, seed=42, path_index=0)
path.presample([0.0, 0.5, 1.0])
coarse = path.values_at([0.5, 1.0]).copy()

for t in np.linspace(0, 1, 9):
    path.query(t)
print("coarse values unchanged:", np.array_equal(path.values_at([0.5, 1.0]), coarse))
print("stored times:", path.times)

# %% the same (seed, index) always gives the same path, in any batch
a = sample_ensemble(42, range(4), 1, np.linspace(0, 1, 5))
b = sample_ensemble(42, [2, 3], 1, np.linspace(0, 1, 5))
print("batch independent:", np.array_equal(a[2:], b))

# %% bridge midpoint variance over many paths
mids = []
for i in range(5000):
    p = BrownianPath(1, 7, i)
    p.presample([0.0, 1.0])
    mids.append(p.query(0.25)[0])
print("Var B(0.25) ~", np.var(mids), "(exact 0.25)")
