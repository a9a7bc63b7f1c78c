"""Tensor-parallel MLP execution over activation-order quantized weights."""
from .errors import InvalidArgument, ProtocolViolation
from .quant import (
    QuantizedMatrix,
    dequantize,
    group_index_actorder,
    group_index_naive,
    metadata_loads,
    quantize_grouped,
    random_permutation,
)
from .perm import invert, permute_cols, permute_rows, reorder
from .runtime import CommStats, all_gather, all_reduce_sum, chunk, shard_columns, shard_rows, spmd_run
from .pipeline import PreparedWeights, prepare_weights, run_dense_oracle, run_naive, run_tp_aware
from .costmodel import CostParams, project_latency, speedup_table

__version__ = "0.1.0"
