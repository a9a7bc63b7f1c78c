"""
Group indices and metadata locality
===================================

How activation-order quantization scatters group membership across rows,
and how a stable sort of the group index puts it back together.
"""

# %%
import numpy as np

from tpaware import quant
from tpaware.perm import reorder

K, G = 64, 8
phi = quant.random_permutation(K, seed=0)
g_naive = quant.group_index_naive(K, G)
g_act = quant.group_index_actorder(K, G, phi)
print("naive    ", g_naive[:24])
print("act_order", g_act[:24])

# %%
# Each change of group while walking the rows means fetching a new set of
# scales and zeros. The contiguous layout needs one fetch per group.
print("loads, naive:    ", quant.metadata_loads(g_naive))
print("loads, act_order:", quant.metadata_loads(g_act))

# %%
# A stable argsort of g_idx gives P. Permuting the weight rows by P (and the
# activation columns to match) restores a contiguous index.
P, g_opt = reorder(g_act)
print("reordered", g_opt[:24])
print("loads after reorder:", quant.metadata_loads(g_opt))
assert np.array_equal(g_opt, g_naive)

# %%
# Load counts over a few group sizes, averaged over 20 permutations.
for G in (4, 8, 16, 32):
    counts = [quant.metadata_loads(quant.group_index_actorder(K, G, quant.random_permutation(K, s)))
              for s in range(20)]
    print(f"G={G:3d}  ordered={quant.n_groups(K, G):3d}  act_order mean={np.mean(counts):6.1f}")
