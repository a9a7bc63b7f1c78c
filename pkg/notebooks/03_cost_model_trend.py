"""
Projected speedup from an alpha-beta-gamma model
================================================

Fits per-call latency, per-byte cost and compute throughput to published
A100 Llama-70B MLP latencies, then projects the speedup from dropping the
AllGather.
"""

# %%
from tpaware import costmodel, reference_data

shape = reference_data.SHAPES["llama70b"]
for m in (1, 2, 4, 8, 16):
    p = costmodel.fit_cost_params("llama70b", "A100", m=m)
    s = [costmodel.speedup((m,) + shape, tp, p) for tp in (2, 4, 8)]
    print(f"M={m:2d}  alpha={p.alpha * 1e6:6.2f} us  beta={p.beta * 1e12:7.3f} ps/B  "
          + "  ".join(f"tp{tp}={v:.2f}x" for tp, v in zip((2, 4, 8), s)))

print("reported:", reference_data.REPORTED_AVG_SPEEDUP[("llama70b", "A100")])

# %%
# The same parameters applied to Granite-20B.
params = costmodel.default_params()
rows = costmodel.speedup_table({"granite20b": reference_data.SHAPES["granite20b"]}, (1, 2, 4, 8), (1, 16), params)
print(costmodel.format_table(rows))
