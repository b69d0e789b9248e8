"""
Soft ranks
==========

Hard ranks are piecewise constant, so they carry no gradient.  The soft
rank is a projection that pools nearby values; epsilon sets how near.
"""

# %%
import numpy as np
from scipy.stats import rankdata

from mcselect.softsort import soft_rank, soft_rank_vjp

v = np.array([0.30, -1.20, 0.32, 2.00, 0.05])
print("hard:", rankdata(v))
for eps in (1e-3, 0.1, 1.0, 100.0):
    print(f"eps={eps:<6g}", np.round(soft_rank(v, eps), 3))

# %%
# Ranks always sum to n(n+1)/2; large epsilon pools everything to the mean rank.
print(soft_rank(v, 0.1).sum(), len(v) * (len(v) + 1) / 2)

# %%
# Gradient of sum(u * soft_rank(v)) with respect to v: nonzero only inside
# pooled blocks, where it averages u.
u = np.array([1.0, 0.0, -1.0, 0.0, 0.0])
print(soft_rank_vjp(v, 0.1, u))
