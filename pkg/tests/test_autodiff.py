import numpy as np
import pytest

from dagcn import autodiff as ad


def numeric_grad(build_loss, arrays, name, eps=1e-6):
    """Central differences of a scalar loss w.r.t. one named input array."""
    base = {k: v.copy() for k, v in arrays.items()}
    g = np.zeros_like(base[name])
    flat = base[name].reshape(-1)
    gf = g.reshape(-1)
    for c in range(flat.size):
        orig = flat[c]
        flat[c] = orig + eps
        lp = build_loss(base)
        flat[c] = orig - eps
        lm = build_loss(base)
        flat[c] = orig
        gf[c] = (lp - lm) / (2 * eps)
    return g


def check_op(build, arrays, atol=1e-7):
    """build(tape, leaves) -> scalar tensor; compares tape grads to numerics."""

    def loss_value(vals):
        tape = ad.Tape()
        leaves = {k: tape.leaf(v, k) for k, v in vals.items()}
        return float(build(tape, leaves).value)

    tape = ad.Tape()
    leaves = {k: tape.leaf(v, k) for k, v in arrays.items()}
    loss = build(tape, leaves)
    grads = ad.backward(loss, list(leaves.values()))
    for name in arrays:
        num = numeric_grad(loss_value, arrays, name)
        np.testing.assert_allclose(grads[name], num, rtol=1e-5, atol=atol, err_msg=name)


def test_matmul_and_linear_t():
    rng = np.random.default_rng(0)
    arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4, 2)), "w": rng.normal(size=(5, 4))}
    check_op(lambda t, l: ad.sum_vec(ad.matmul(l["a"], l["b"])), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.linear_t(l["a"], l["w"])), arrays)


def test_elementwise_ops():
    rng = np.random.default_rng(1)
    arrays = {"a": rng.normal(size=(6,)) + 3.0, "b": rng.normal(size=(6,)) + 3.0}
    check_op(lambda t, l: ad.sum_vec(ad.mul(l["a"], l["b"])), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.add(l["a"], l["b"])), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.div(l["a"], l["b"])), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.exp(ad.scale_const(l["a"], 0.3))), arrays)


def test_gather_and_segment_ops():
    rng = np.random.default_rng(2)
    idx = np.array([0, 2, 2, 1, 0])
    seg = np.array([0, 0, 1, 2, 2])
    arrays = {"x": rng.normal(size=(3, 4))}
    check_op(lambda t, l: ad.sum_vec(ad.gather_rows(l["x"], idx)), arrays)
    arrays5 = {"x": rng.normal(size=(5, 4))}
    check_op(lambda t, l: ad.sum_vec(ad.segment_sum_rows(l["x"], seg, 3)), arrays5)
    check_op(lambda t, l: ad.sum_vec(ad.segment_mean_rows(l["x"], seg, 3)), arrays5)
    # Weighted reduction so every segment-max coordinate matters.
    w = rng.normal(size=(3, 4))
    check_op(
        lambda t, l: ad.sum_vec(ad.mul(ad.segment_max_rows(l["x"], seg, 3), t.const(w))),
        arrays5,
    )
    vec = {"v": rng.normal(size=(5,))}
    check_op(lambda t, l: ad.sum_vec(ad.gather_vec(ad.segment_sum_vec(l["v"], seg, 3), idx)), vec)


def test_segment_max_duplicate_rows_gradient():
    # Pooling two gathered copies of one row must not double its gradient.
    x = np.array([[2.0, -1.0]])
    tape = ad.Tape()
    leaf = tape.leaf(x, "x")
    gathered = ad.gather_rows(leaf, np.array([0, 0]))
    pooled = ad.segment_max_rows(gathered, np.array([0, 0]), 1)
    loss = ad.sum_vec(pooled)
    grads = ad.backward(loss, [leaf])
    np.testing.assert_array_equal(grads["x"], [[1.0, 1.0]])


def test_scale_rows_concat_leaky_cosine():
    rng = np.random.default_rng(3)
    arrays = {
        "x": rng.normal(size=(4, 3)),
        "y": rng.normal(size=(4, 3)),
        "s": rng.normal(size=(4,)),
    }
    check_op(lambda t, l: ad.sum_vec(ad.scale_rows(l["x"], l["s"])), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.concat_cols(l["x"], l["y"])), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.leaky_relu(l["x"], 0.2)), arrays)
    check_op(lambda t, l: ad.sum_vec(ad.cosine_rows(l["x"], l["y"])), arrays, atol=1e-6)


def test_cosine_zero_norm_rows():
    x = np.array([[0.0, 0.0], [1.0, 0.0]])
    y = np.array([[1.0, 1.0], [1.0, 0.0]])
    tape = ad.Tape()
    lx, ly = tape.leaf(x, "x"), tape.leaf(y, "y")
    c = ad.cosine_rows(lx, ly)
    np.testing.assert_array_equal(c.value, [0.0, 1.0])
    grads = ad.backward(ad.sum_vec(c), [lx, ly])
    assert not grads["x"][0].any() and not grads["y"][0].any()


def test_cross_entropy_matches_manual():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(3, 5))
    targets = np.array([1, 4, 0])
    arrays = {"z": logits}
    check_op(lambda t, l: ad.sum_vec(ad.cross_entropy_rows(l["z"], targets)), arrays)
    tape = ad.Tape()
    ce = ad.cross_entropy_rows(tape.leaf(logits, "z"), targets)
    manual = [-np.log(np.exp(z[t]) / np.exp(z).sum()) for z, t in zip(logits, targets)]
    np.testing.assert_allclose(ce.value, manual, rtol=1e-12)


def test_replay_reproduces_bitwise():
    rng = np.random.default_rng(5)
    tape = ad.Tape()
    x = tape.leaf(rng.normal(size=(10, 4)), "x")
    w = tape.leaf(rng.normal(size=(4, 4)), "w")
    out = ad.leaky_relu(ad.linear_t(ad.exp(ad.scale_const(x, 0.1)), w), 0.2)
    ad.sum_vec(out)
    assert tape.replay_check()


def test_unreachable_parameter_gets_zero_gradient():
    tape = ad.Tape()
    x = tape.leaf(np.ones((2, 2)), "x")
    unused = tape.leaf(np.ones((3, 3)), "unused")
    loss = ad.sum_vec(ad.mul(x, x))
    grads = ad.backward(loss, [x, unused])
    np.testing.assert_array_equal(grads["unused"], np.zeros((3, 3)))
    np.testing.assert_array_equal(grads["x"], 2 * np.ones((2, 2)))


def test_square_function_gradient():
    tape = ad.Tape()
    x = tape.leaf(np.array([3.0]), "x")
    loss = ad.sum_vec(ad.mul(x, x))
    grads = ad.backward(loss, [x])
    np.testing.assert_allclose(grads["x"], [6.0])


def test_mixed_tapes_rejected():
    t1, t2 = ad.Tape(), ad.Tape()
    a = t1.leaf(np.ones(2), "a")
    b = t2.leaf(np.ones(2), "b")
    with pytest.raises(ValueError):
        ad.add(a, b)
