import numpy as np
import pytest

from logipath import backend
from logipath import tensor as T


@pytest.fixture(params=backend.available())
def kernel(request):
    previous = backend.use(request.param)
    yield request.param
    backend.use(previous)


def rnd(rng, *shape):
    return rng.standard_normal(shape)


def numeric_grads(fn, params, eps=1e-6):
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = fn().item()
            flat[i] = keep - eps
            lo = fn().item()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2 * eps)
        out[name] = g
    return out


def check_op(fn, params, tol=1e-7):
    """fn builds a scalar from params; analytic must match numeric."""
    for p in params.values():
        p.zero_grad()
    T.backward(fn())
    numeric = numeric_grads(fn, params)
    for name, p in params.items():
        got = p.grad if p.grad is not None else np.zeros_like(p.data)
        assert np.allclose(got, numeric[name], rtol=tol, atol=tol), name


def test_tensor_dtype_and_repr():
    t = T.param(np.ones((2, 3), dtype=np.float32))
    assert t.data.dtype == np.float64
    assert "grad" in repr(t)
    assert T.const(5.0).item() == 5.0


def test_backward_requires_scalar():
    with pytest.raises(ValueError, match="scalar"):
        T.backward(T.param(np.ones(3)))


def test_gradients_accumulate_until_zeroed():
    p = T.param(np.array([2.0]))
    T.backward(T.sum_all(T.mul(p, p)))
    first = p.grad.copy()
    T.backward(T.sum_all(T.mul(p, p)))
    assert np.allclose(p.grad, 2 * first)
    p.zero_grad()
    assert p.grad is None


def test_add_broadcasts_and_unbroadcasts(kernel):
    rng = np.random.default_rng(0)
    a = T.param(rnd(rng, 3, 4))
    b = T.param(rnd(rng, 4))
    check_op(lambda: T.sum_all(T.add(a, b)), {"a": a, "b": b})
    assert T.add(a, b).shape == (3, 4)


def test_elementwise_ops(kernel):
    rng = np.random.default_rng(1)
    a = T.param(rnd(rng, 3, 3))
    b = T.param(rnd(rng, 3, 3))
    check_op(lambda: T.sum_all(T.mul(a, b)), {"a": a, "b": b})
    check_op(lambda: T.sum_all(T.scale(a, -2.5)), {"a": a})
    check_op(lambda: T.sum_all(T.neg(a)), {"a": a})
    check_op(lambda: T.sum_all(T.sub(a, b)), {"a": a, "b": b})
    check_op(lambda: T.sum_all(T.tanh(a)), {"a": a})


def test_add_n_matches_chained_adds(kernel):
    rng = np.random.default_rng(2)
    ts = [T.param(rnd(rng, 2, 2)) for _ in range(4)]
    got = T.add_n(ts).data
    want = ts[0].data + ts[1].data + ts[2].data + ts[3].data
    assert np.allclose(got, want)
    check_op(lambda: T.sum_all(T.add_n(ts)), {str(i): t for i, t in enumerate(ts)})


def test_matrix_ops(kernel):
    rng = np.random.default_rng(3)
    a = T.param(rnd(rng, 3, 4))
    b = T.param(rnd(rng, 4, 2))
    v = T.param(rnd(rng, 4))
    w = T.param(rnd(rng, 12))
    assert np.allclose(T.matmul(a, b).data, a.data @ b.data)
    check_op(lambda: T.sum_all(T.matmul(a, b)), {"a": a, "b": b})
    check_op(lambda: T.sum_all(T.matvec(a, v)), {"a": a, "v": v})
    check_op(lambda: T.dot(w, T.reshape(a, (12,))), {"a": a, "w": w})
    check_op(lambda: T.sum_all(T.transpose(a)), {"a": a})


def test_leaky_relu_forward_and_grad(kernel):
    x = T.param(np.array([[-1.0, 0.5, -0.25, 2.0]]))
    y = T.leaky_relu(x, 0.02)
    assert np.allclose(y.data, [[-0.02, 0.5, -0.005, 2.0]])
    check_op(lambda: T.sum_all(T.leaky_relu(x, 0.02)), {"x": x})


def test_softmax_rows_properties(kernel):
    rng = np.random.default_rng(4)
    x = T.param(rnd(rng, 5, 7) * 30)
    y = T.softmax_rows(x)
    assert np.allclose(y.data.sum(axis=1), 1.0, atol=1e-9)
    assert (y.data > 0).all()
    shifted = T.softmax_rows(T.add(x, T.const(np.full((5, 1), 123.0))))
    assert np.allclose(shifted.data, y.data, atol=1e-12)
    small = T.param(rnd(rng, 3, 4))
    check_op(lambda: T.sum_all(T.mul(T.softmax_rows(small), small)), {"x": small})


def test_softmax_vec_shape(kernel):
    v = T.param(np.array([1.0, 2.0, 3.0]))
    y = T.softmax_vec(v)
    assert y.shape == (3,)
    assert abs(y.data.sum() - 1.0) < 1e-12


def reference_attention(H, wq, wk, wv, wo, n_heads):
    """Slow per-head loop with explicit softmax, no shared code."""
    m, d = H.shape
    d_h = d // n_heads
    q, k, v = H @ wq, H @ wk, H @ wv
    mixed = np.zeros_like(H)
    for h in range(n_heads):
        s = slice(h * d_h, (h + 1) * d_h)
        scores = q[:, s] @ k[:, s].T / np.sqrt(d_h)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn = e / e.sum(axis=1, keepdims=True)
        mixed[:, s] = attn @ v[:, s]
    return mixed @ wo


def test_qkv_attention_matches_reference(kernel):
    rng = np.random.default_rng(5)
    H = T.param(rnd(rng, 3, 8))
    ws = {n: T.param(rnd(rng, 8, 8)) for n in ("wq", "wk", "wv", "wo")}
    out = T.qkv_attention(H, ws["wq"], ws["wk"], ws["wv"], ws["wo"], 2)
    want = reference_attention(
        H.data, ws["wq"].data, ws["wk"].data, ws["wv"].data, ws["wo"].data, 2
    )
    assert np.allclose(out.data, want, atol=1e-12)
    params = {"H": H, **ws}
    check_op(
        lambda: T.sum_all(
            T.qkv_attention(H, ws["wq"], ws["wk"], ws["wv"], ws["wo"], 2)
        ),
        params,
        tol=1e-6,
    )


def test_qkv_attention_single_position_is_value_projection(kernel):
    rng = np.random.default_rng(6)
    H = T.param(rnd(rng, 1, 8))
    ws = [T.param(rnd(rng, 8, 8)) for _ in range(4)]
    out = T.qkv_attention(H, *ws, 4)
    assert np.allclose(out.data, H.data @ ws[2].data @ ws[3].data, atol=1e-12)


def test_qkv_attention_head_divisibility():
    H = T.param(np.ones((2, 6)))
    w = T.param(np.eye(6))
    with pytest.raises(ValueError, match="divisible"):
        T.qkv_attention(H, w, w, w, w, 4)


def test_multihead_attention_reference_and_extra(kernel):
    rng = np.random.default_rng(7)
    H = T.param(rnd(rng, 4, 8))
    extra = T.param(rnd(rng, 4, 4))
    captured: list[np.ndarray] = []
    out = T.multihead_attention(H, extra, 2, capture=captured)
    assert len(captured) == 2
    d_h = 4
    for h, attn in enumerate(captured):
        s = slice(h * d_h, (h + 1) * d_h)
        H_h = H.data[:, s]
        scores = H_h @ H_h.T / np.sqrt(d_h) + extra.data
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        want = e / e.sum(axis=1, keepdims=True)
        assert np.allclose(attn, want, atol=1e-12)
        assert np.allclose(out.data[:, s], want @ H_h, atol=1e-12)
        assert np.allclose(attn.sum(axis=1), 1.0, atol=1e-9)
    check_op(
        lambda: T.sum_all(T.multihead_attention(H, extra, 2)),
        {"H": H, "extra": extra},
        tol=1e-6,
    )


def test_multihead_attention_without_extra(kernel):
    rng = np.random.default_rng(8)
    H = T.param(rnd(rng, 3, 4))
    check_op(
        lambda: T.sum_all(T.multihead_attention(H, None, 2)),
        {"H": H},
        tol=1e-6,
    )


def test_layer_norm_rows_standardized(kernel):
    rng = np.random.default_rng(9)
    x = T.param(rnd(rng, 4, 6) * 3 + 5)
    g = T.param(np.ones(6))
    b = T.param(np.zeros(6))
    y = T.layer_norm(x, g, b)
    assert np.allclose(y.data.mean(axis=1), 0.0, atol=1e-9)
    assert np.allclose(y.data.std(axis=1), 1.0, atol=1e-3)
    gg = T.param(rnd(rng, 6))
    bb = T.param(rnd(rng, 6))
    check_op(
        lambda: T.sum_all(T.mul(T.layer_norm(x, gg, bb), x)),
        {"x": x, "g": gg, "b": bb},
        tol=1e-5,
    )


def test_shape_ops(kernel):
    rng = np.random.default_rng(10)
    a = T.param(rnd(rng, 3, 4))
    b = T.param(rnd(rng, 2, 4))
    v = T.param(rnd(rng, 4))
    cat = T.concat([a, b], axis=0)
    assert cat.shape == (5, 4)
    check_op(lambda: T.sum_all(T.concat([a, b], axis=0)), {"a": a, "b": b})
    check_op(lambda: T.sum_all(T.slice_cols(a, 1, 3)), {"a": a})
    check_op(lambda: T.sum_all(T.mean_rows(a)), {"a": a})
    check_op(lambda: T.mean_all(a), {"a": a})
    check_op(lambda: T.sum_all(T.repeat_rows(v, 5)), {"v": v})
    check_op(lambda: T.sum_all(T.stack_rows([v, v])), {"v": v})


def test_gather_scatter_round_trip(kernel):
    rng = np.random.default_rng(11)
    table = T.param(rnd(rng, 6, 3))
    picked = T.gather_rows(table, [4, 0, 4])
    assert np.allclose(picked.data, table.data[[4, 0, 4]])
    check_op(lambda: T.sum_all(T.gather_rows(table, [4, 0, 4])), {"t": table})

    vals = T.param(rnd(rng, 2, 3))
    spread = T.scatter_rows(vals, [2, 0], 5)
    assert np.allclose(spread.data[2], vals.data[0])
    assert np.allclose(spread.data[1], 0)
    check_op(lambda: T.sum_all(T.scatter_rows(vals, [2, 0], 5)), {"v": vals})

    assert np.allclose(
        T.embedding_lookup(table, [1, 1]).data, table.data[[1, 1]]
    )


def test_scatter_cells_symmetric_writes(kernel):
    vals = T.param(np.array([2.0, -1.0]))
    cells = [[(0, 1), (1, 0)], [(2, 2)]]
    out = T.scatter_cells(vals, cells, 3)
    want = np.array([[0, 2, 0], [2, 0, 0], [0, 0, -1.0]])
    assert np.allclose(out.data, want)
    check_op(lambda: T.sum_all(T.scatter_cells(vals, cells, 3)), {"v": vals})


def test_matrix_power(kernel):
    rng = np.random.default_rng(12)
    m = T.param(rnd(rng, 3, 3))
    assert T.matrix_power(m, 1) is m
    assert np.allclose(T.matrix_power(m, 3).data, np.linalg.matrix_power(m.data, 3))
    with pytest.raises(ValueError):
        T.matrix_power(m, 0)
    check_op(lambda: T.sum_all(T.matrix_power(m, 2)), {"m": m}, tol=1e-6)


def test_cross_entropy_matches_log_softmax(kernel):
    z = T.param(np.array([1.0, -2.0, 0.5, 3.0]))
    loss = T.cross_entropy(z, 3)
    probs = np.exp(z.data) / np.exp(z.data).sum()
    assert abs(loss.item() + np.log(probs[3])) < 1e-12
    check_op(lambda: T.cross_entropy(z, 3), {"z": z})
    with pytest.raises(ValueError):
        T.cross_entropy(z, 4)
    with pytest.raises(ValueError):
        T.cross_entropy(T.param(np.ones((2, 2))), 0)


def test_no_nan_inf_after_extreme_softmax(kernel):
    x = T.const(np.array([[1e4, -1e4, 0.0]]))
    y = T.softmax_rows(x)
    assert np.isfinite(y.data).all()


def test_finite_diff_check_passes_on_smooth_function():
    rng = np.random.default_rng(13)
    params = {
        "w": T.param(rng.standard_normal((4, 4))),
        "b": T.param(rng.standard_normal(4)),
    }

    def fn():
        h = T.tanh(T.add(T.matmul(params["w"], params["w"]), params["b"]))
        return T.sum_all(h)

    report = T.finite_diff_check(fn, params, eps=1e-5, max_coords=40)
    assert report.ok
    assert report.max_rel_err < 1e-6
    assert "max rel err" in str(report)


def test_finite_diff_check_catches_wrong_gradient():
    p = T.param(np.array([1.5]))

    def broken():
        # forward of x^2 with a deliberately wrong backward closure
        def bwd(g):
            p.grad = np.array([1.0])

        return T.Tensor(p.data**2, parents=(p,), backward=bwd)

    report = T.finite_diff_check(broken, {"p": p}, eps=1e-5, max_coords=5)
    assert report.max_rel_err > 0.1


def test_backends_agree_on_kernels():
    if len(backend.available()) < 2:
        pytest.skip("only one backend built")
    rng = np.random.default_rng(14)
    x = rng.standard_normal((6, 8))
    g = rng.standard_normal((6, 8))
    gamma, beta = rng.standard_normal(8), rng.standard_normal(8)
    results = {}
    for name in backend.available():
        previous = backend.use(name)
        k = backend.active()
        y, mean, inv = k.layernorm_fwd(x, gamma, beta, 1e-5)
        results[name] = {
            "tanh": k.tanh_fwd(x),
            "leaky": k.leaky_fwd(x, 0.02),
            "softmax": k.softmax_rows_fwd(x),
            "softmax_bwd": k.softmax_rows_bwd(k.softmax_rows_fwd(x), g),
            "ln": y,
            "ln_bwd": np.concatenate(
                [p.ravel() for p in k.layernorm_bwd(x, gamma, mean, inv, g)]
            ),
        }
        backend.use(previous)
    a, b = (results[n] for n in backend.available()[:2])
    for key in a:
        assert np.allclose(a[key], b[key], atol=1e-12), key
