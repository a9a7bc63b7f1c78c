import numpy as np
import pytest

from tpaware import pipeline
from tpaware.errors import InvalidArgument
from tpaware.perm import permute_cols
from tpaware.quant import dequantize, is_ordered, metadata_loads
from tpaware.synthetic import lossless_problem, normal_problem


def py_matmul(A, B):
    """Pure-python triple loop in float64, summing k in index order."""
    A, B = A.tolist(), B.tolist()
    out = []
    for row in A:
        acc = [0.0] * len(B[0])
        for k, a in enumerate(row):
            for j, b in enumerate(B[k]):
                acc[j] += a * b
        out.append(acc)
    return np.array(out)


def rel_diff(a, b):
    return float(np.abs(np.asarray(a, np.float64) - b).max() / max(np.abs(b).max(), 1e-300))


def test_identity_phi_gives_identical_weights():
    _, W1, W2 = normal_problem(1, 16, 8, 8, seed=0)
    ident = dict(phi1=np.arange(16), phi2=np.arange(8))
    a = pipeline.prepare_weights(W1, W2, 4, 4, variant="naive", **ident)
    b = pipeline.prepare_weights(W1, W2, 4, 4, variant="tp_aware", **ident)
    assert a.w1_q.equals(b.w1_q) and a.w2_q.equals(b.w2_q)
    assert a.p1.tolist() == list(range(16))


@pytest.mark.parametrize("seed", range(3))
def test_tp_aware_w1_is_naive_w1_column_permuted(seed):
    _, W1, W2 = normal_problem(1, 32, 16, 8, seed=seed)
    a = pipeline.prepare_weights(W1, W2, 4, 4, seed=seed, variant="naive")
    b = pipeline.prepare_weights(W1, W2, 4, 4, seed=seed, variant="tp_aware")
    assert np.array_equal(a.p1, b.p1) and np.array_equal(a.p2, b.p2)
    assert np.array_equal(dequantize(b.w1_q)[0], permute_cols(dequantize(a.w1_q)[0], a.p2))
    assert a.w2_q.equals(b.w2_q)
    assert is_ordered(a.w1_q.g_idx) and is_ordered(a.w2_q.g_idx)
    for x, y in zip(a.dense(), b.dense()):
        assert np.array_equal(x, y)


def test_prepare_rejects():
    W1, W2 = np.zeros((8, 4)), np.zeros((4, 4))
    with pytest.raises(InvalidArgument):
        pipeline.prepare_weights(W1, W2, 2, 4, variant="fast")
    with pytest.raises(InvalidArgument):
        pipeline.prepare_weights(W1, np.zeros((5, 4)), 2, 4)


def test_tp1_records_no_bytes():
    X, W1, W2 = normal_problem(2, 16, 8, 8, seed=1)
    for variant in pipeline.VARIANTS:
        pw = pipeline.prepare_weights(W1, W2, 4, 4, variant=variant)
        _, stats = pipeline.run(X, pw, 1)
        assert stats.allgather_bytes_total == 0 and stats.allreduce_bytes_total == 0


def test_small_integer_case_is_exact():
    X, W1, W2 = lossless_problem(2, 8, 8, 8, group_size=2, bits=8, seed=0)
    ref = X @ W1 @ W2
    for variant in ("naive", "tp_aware"):
        pw = pipeline.prepare_weights(W1, W2, 2, 8, seed=0, variant=variant)
        w1, w2 = pw.dense()
        assert np.array_equal(w1, W1) and np.array_equal(w2, W2)
        for tp in (1, 2, 4, 8):
            y, _ = pipeline.run(X, pw, tp)
            assert np.array_equal(y, ref)


def test_allgather_bytes_single_token_two_ranks():
    X, W1, W2 = normal_problem(1, 16, 8, 8, seed=2)
    naive = pipeline.prepare_weights(W1, W2, 4, 4, variant="naive")
    aware = pipeline.prepare_weights(W1, W2, 4, 4, variant="tp_aware")
    _, s_n = pipeline.run_naive(X, naive, 2)
    _, s_a = pipeline.run_tp_aware(X, aware, 2)
    # 1 x 8 float32 gathered across 2 ranks: each 16-byte half goes to 1 peer
    assert s_n.allgather_bytes_total == 32
    assert s_a.allgather_bytes_total == 0 and s_a.allgather_calls == 0
    assert s_n.allreduce_bytes_total == s_a.allreduce_bytes_total == 1 * 8 * 4 * 2


@pytest.mark.parametrize("seed", range(3))
def test_oracle_matches_python_triple_loop(seed):
    rng = np.random.default_rng(seed)
    X, W1, W2 = rng.standard_normal((3, 12)), rng.standard_normal((12, 10)), rng.standard_normal((10, 4))
    want = py_matmul(py_matmul(X, W1), W2)
    assert rel_diff(pipeline.run_dense_oracle(X, W1, W2), want) <= 1e-15


@pytest.mark.parametrize("tp", [1, 2, 4])
def test_all_variants_match_oracle_float32(tp):
    X, W1, W2 = normal_problem(4, 32, 16, 8, seed=tp)
    outs = {}
    for variant in pipeline.VARIANTS:
        pw = pipeline.prepare_weights(W1, W2, 8, 4, seed=tp, variant=variant)
        outs[variant], _ = pipeline.run(X, pw, tp)
        assert outs[variant].dtype == np.float32
        assert rel_diff(outs[variant], pipeline.run_dense_oracle(X, *pw.dense())) <= 1e-6
    assert rel_diff(outs["naive"], outs["tp_aware"].astype(np.float64)) <= 1e-6


def test_actorder_loads_exceed_ordered():
    X, W1, W2 = normal_problem(1, 64, 64, 16, seed=5)
    ordered = pipeline.prepare_weights(W1, W2, 8, 4, seed=5, variant="tp_aware")
    unordered = pipeline.prepare_weights(W1, W2, 8, 4, seed=5, variant="actorder")
    _, s_o = pipeline.run(X, ordered, 2)
    _, s_u = pipeline.run(X, unordered, 2)
    assert s_o.metadata_loads_total == pipeline.expected_metadata_loads(ordered, 2)
    assert s_u.metadata_loads_total == pipeline.expected_metadata_loads(unordered, 2)
    assert s_u.metadata_loads_total > 2 * s_o.metadata_loads_total


@pytest.mark.parametrize("K1,N1,G,tp", [(64, 128, 8, 4), (48, 96, 16, 8), (16, 12, 5, 3), (10, 6, 4, 2)])
def test_ordered_metadata_loads_closed_form(K1, N1, G, tp):
    _, W1, W2 = normal_problem(1, K1, N1, 6, seed=0)
    pw = pipeline.prepare_weights(W1, W2, G, 4, variant="naive")
    brute = tp * metadata_loads(pw.w1_q.g_idx) + sum(
        metadata_loads(pw.w2_q.g_idx[r * N1 // tp:(r + 1) * N1 // tp]) for r in range(tp)
    )
    assert pipeline.ordered_metadata_loads(K1, N1, G, tp) == brute == pipeline.expected_metadata_loads(pw, tp)


def test_run_rejects_wrong_variant_and_divisibility():
    X, W1, W2 = normal_problem(1, 16, 8, 8, seed=0)
    naive = pipeline.prepare_weights(W1, W2, 4, 4, variant="naive")
    aware = pipeline.prepare_weights(W1, W2, 4, 4, variant="tp_aware")
    with pytest.raises(InvalidArgument):
        pipeline.run_tp_aware(X, naive, 2)
    with pytest.raises(InvalidArgument):
        pipeline.run_naive(X, aware, 2)
    with pytest.raises(InvalidArgument):
        pipeline.run(X, naive, 3)
    with pytest.raises(InvalidArgument):
        pipeline.run(X[:, :15], naive, 2)


def test_executors_bit_identical():
    X, W1, W2 = normal_problem(3, 32, 16, 8, seed=9)
    for variant in ("naive", "tp_aware"):
        pw = pipeline.prepare_weights(W1, W2, 8, 4, seed=9, variant=variant)
        a, sa = pipeline.run(X, pw, 4, executor="threads")
        b, sb = pipeline.run(X, pw, 4, executor="sequential")
        assert a.tobytes() == b.tobytes()
        assert sa.to_dict() == sb.to_dict()


def test_fixed_order_matmul_rejects_nonconformable():
    with pytest.raises(InvalidArgument):
        pipeline.fixed_order_matmul(np.zeros((2, 3)), np.zeros((2, 3)))
