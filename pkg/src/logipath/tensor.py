"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every op builds a node holding the forward value and a closure that
accumulates gradients into its parents.  ``backward`` walks the graph
in reverse topological order; calling it twice without zeroing grads
adds the same gradients again, so optimizers should zero between steps.

Elementwise and row-reduction kernels are routed through the selected
backend (compiled or numpy); matrix products use BLAS either way.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from . import backend


class Tensor:
    """An array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple[Tensor, ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
    ) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(
            p.requires_grad for p in parents
        )
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


def const(data) -> Tensor:
    return Tensor(data)


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _acc(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        # copy: callers may pass views into buffers they go on to reuse
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into the graph's tensors."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar, got shape {loss.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# ops


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return Tensor(a.data + b.data, parents=(a, b), backward=bwd)


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    ts = tuple(tensors)
    if not ts:
        raise ValueError("add_n needs at least one tensor")
    total = ts[0].data.copy()
    for t in ts[1:]:
        total += t.data

    def bwd(g: np.ndarray) -> None:
        for t in ts:
            _acc(t, g)

    return Tensor(total, parents=ts, backward=bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(a.data * b.data, parents=(a, b), backward=bwd)


def scale(a: Tensor, c: float) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, g * c)

    return Tensor(a.data * c, parents=(a,), backward=bwd)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return Tensor(a.data @ b.data, parents=(a, b), backward=bwd)


def matvec(a: Tensor, v: Tensor) -> Tensor:
    """(n,d) @ (d,) -> (n,)."""

    def bwd(g: np.ndarray) -> None:
        _acc(a, np.outer(g, v.data))
        _acc(v, a.data.T @ g)

    return Tensor(a.data @ v.data, parents=(a, v), backward=bwd)


def dot(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return Tensor(a.data @ b.data, parents=(a, b), backward=bwd)


def transpose(a: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, g.T)

    return Tensor(a.data.T, parents=(a,), backward=bwd)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, g.reshape(a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=bwd)


def tanh(a: Tensor) -> Tensor:
    k = backend.active()
    y = k.tanh_fwd(a.data)

    def bwd(g: np.ndarray) -> None:
        _acc(a, backend.active().tanh_bwd(y, g))

    return Tensor(y, parents=(a,), backward=bwd)


_SIGN_TRACE: list[np.ndarray] | None = None


@contextmanager
def record_activation_signs() -> Iterator[list[np.ndarray]]:
    """Collect the sign pattern at every leaky_relu during the block.

    Finite-difference checks compare the patterns at the two probe
    points and skip coordinates that straddle a kink.
    """
    global _SIGN_TRACE
    prev = _SIGN_TRACE
    buf: list[np.ndarray] = []
    _SIGN_TRACE = buf
    try:
        yield buf
    finally:
        _SIGN_TRACE = prev


def signs_blob(trace: list[np.ndarray]) -> bytes:
    return b"".join(s.tobytes() for s in trace)


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    k = backend.active()
    if _SIGN_TRACE is not None:
        _SIGN_TRACE.append(a.data > 0.0)
    y = k.leaky_fwd(a.data, slope)

    def bwd(g: np.ndarray) -> None:
        _acc(a, backend.active().leaky_bwd(a.data, g, slope))

    return Tensor(y, parents=(a,), backward=bwd)


def softmax_rows(a: Tensor) -> Tensor:
    y = backend.active().softmax_rows_fwd(a.data)

    def bwd(g: np.ndarray) -> None:
        _acc(a, backend.active().softmax_rows_bwd(y, g))

    return Tensor(y, parents=(a,), backward=bwd)


def softmax_vec(a: Tensor) -> Tensor:
    return reshape(softmax_rows(reshape(a, (1, a.data.size))), a.data.shape)


def qkv_attention(
    H: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    n_heads: int,
    capture: list[np.ndarray] | None = None,
) -> Tensor:
    """Standard multi-head scaled dot-product self-attention, one node.

    Q/K/V are learned projections of H, attention runs per column head
    slice, and the concatenated result goes through the output
    projection.  ``capture`` receives each head's attention matrix.
    """
    m, d = H.data.shape
    if d % n_heads:
        raise ValueError(f"width {d} not divisible by {n_heads} heads")
    d_h = d // n_heads
    scale = d_h**-0.5
    kern = backend.active()
    q = H.data @ wq.data
    k = H.data @ wk.data
    v = H.data @ wv.data
    mixed = np.empty_like(H.data)
    attns: list[np.ndarray] = []
    for h in range(n_heads):
        cols = slice(h * d_h, (h + 1) * d_h)
        attn = kern.softmax_rows_fwd((q[:, cols] @ k[:, cols].T) * scale)
        attns.append(attn)
        mixed[:, cols] = attn @ v[:, cols]
    if capture is not None:
        capture.extend(attns)
    out = mixed @ wo.data

    def bwd(g: np.ndarray) -> None:
        kern_b = backend.active()
        _acc(wo, mixed.T @ g)
        g_mixed = g @ wo.data.T
        gq = np.empty_like(q)
        gk = np.empty_like(k)
        gv = np.empty_like(v)
        for h in range(n_heads):
            cols = slice(h * d_h, (h + 1) * d_h)
            attn = attns[h]
            g_m = g_mixed[:, cols]
            g_attn = g_m @ v[:, cols].T
            gv[:, cols] = attn.T @ g_m
            g_scores = kern_b.softmax_rows_bwd(attn, g_attn) * scale
            gq[:, cols] = g_scores @ k[:, cols]
            gk[:, cols] = g_scores.T @ q[:, cols]
        _acc(wq, H.data.T @ gq)
        _acc(wk, H.data.T @ gk)
        _acc(wv, H.data.T @ gv)
        _acc(H, gq @ wq.data.T + gk @ wk.data.T + gv @ wv.data.T)

    return Tensor(out, parents=(H, wq, wk, wv, wo), backward=bwd)


def multihead_attention(
    H: Tensor,
    extra: Tensor | None,
    n_heads: int,
    capture: list[np.ndarray] | None = None,
) -> Tensor:
    """Self-similarity attention over column head slices, as one node.

    Per head h over slice H_h: out_h = softmax(H_h H_h^T / sqrt(d_h) + extra)
    @ H_h, concatenated back along columns.  ``extra`` is one additive score
    matrix shared by all heads.  ``capture`` receives each head's attention
    matrix.  Fusing the per-head loop keeps the graph small, which dominates
    runtime at these matrix sizes.
    """
    m, d = H.data.shape
    if d % n_heads:
        raise ValueError(f"width {d} not divisible by {n_heads} heads")
    d_h = d // n_heads
    scale = d_h**-0.5
    kern = backend.active()
    e = None if extra is None else extra.data
    out = np.empty_like(H.data)
    attns: list[np.ndarray] = []
    for h in range(n_heads):
        H_h = H.data[:, h * d_h : (h + 1) * d_h]
        scores = (H_h @ H_h.T) * scale
        if e is not None:
            scores += e
        attn = kern.softmax_rows_fwd(scores)
        attns.append(attn)
        out[:, h * d_h : (h + 1) * d_h] = attn @ H_h
    if capture is not None:
        capture.extend(attns)

    def bwd(g: np.ndarray) -> None:
        kern_b = backend.active()
        gH = np.zeros_like(H.data)
        gE = None if extra is None else np.zeros_like(extra.data)
        for h in range(n_heads):
            cols = slice(h * d_h, (h + 1) * d_h)
            H_h = H.data[:, cols]
            attn = attns[h]
            g_h = g[:, cols]
            g_attn = g_h @ H_h.T
            g_scores = kern_b.softmax_rows_bwd(attn, g_attn)
            if gE is not None:
                gE += g_scores
            gH[:, cols] = attn.T @ g_h + scale * (
                (g_scores + g_scores.T) @ H_h
            )
        _acc(H, gH)
        if extra is not None and gE is not None:
            _acc(extra, gE)

    parents = (H,) if extra is None else (H, extra)
    return Tensor(out, parents=parents, backward=bwd)


def layer_norm(
    a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5
) -> Tensor:
    y, mean, inv_std = backend.active().layernorm_fwd(
        a.data, gamma.data, beta.data, eps
    )

    def bwd(g: np.ndarray) -> None:
        gx, ggamma, gbeta = backend.active().layernorm_bwd(
            a.data, gamma.data, mean, inv_std, g
        )
        _acc(a, gx)
        _acc(gamma, ggamma)
        _acc(beta, gbeta)

    return Tensor(y, parents=(a, gamma, beta), backward=bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = tuple(tensors)
    sizes = [t.data.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g: np.ndarray) -> None:
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _acc(t, piece)

    return Tensor(
        np.concatenate([t.data for t in ts], axis=axis),
        parents=ts,
        backward=bwd,
    )


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        _acc(a, full)

    return Tensor(a.data[:, lo:hi].copy(), parents=(a,), backward=bwd)


def mean_rows(a: Tensor) -> Tensor:
    """(n,d) -> (d,) column means."""
    n = a.data.shape[0]

    def bwd(g: np.ndarray) -> None:
        _acc(a, np.broadcast_to(g / n, a.data.shape))

    return Tensor(a.data.mean(axis=0), parents=(a,), backward=bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g: np.ndarray) -> None:
        _acc(a, np.broadcast_to(g / n, a.data.shape))

    return Tensor(a.data.mean(), parents=(a,), backward=bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(a, np.broadcast_to(g, a.data.shape))

    return Tensor(a.data.sum(), parents=(a,), backward=bwd)


def gather_rows(a: Tensor, rows: Sequence[int]) -> Tensor:
    idx = np.asarray(rows, dtype=np.intp)

    def bwd(g: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _acc(a, full)

    return Tensor(a.data[idx], parents=(a,), backward=bwd)


def scatter_rows(values: Tensor, rows: Sequence[int], n_rows: int) -> Tensor:
    idx = np.asarray(rows, dtype=np.intp)
    data = np.zeros((n_rows,) + values.data.shape[1:], dtype=np.float64)
    data[idx] = values.data

    def bwd(g: np.ndarray) -> None:
        _acc(values, g[idx])

    return Tensor(data, parents=(values,), backward=bwd)


def repeat_rows(v: Tensor, n: int) -> Tensor:
    def bwd(g: np.ndarray) -> None:
        _acc(v, g.sum(axis=0))

    return Tensor(np.tile(v.data, (n, 1)), parents=(v,), backward=bwd)


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    ts = tuple(vectors)

    def bwd(g: np.ndarray) -> None:
        for i, t in enumerate(ts):
            _acc(t, g[i])

    return Tensor(
        np.stack([t.data for t in ts]), parents=ts, backward=bwd
    )


def embedding_lookup(table: Tensor, ids: Sequence[int]) -> Tensor:
    return gather_rows(table, ids)


def scatter_cells(
    values: Tensor,
    cells: Sequence[Sequence[tuple[int, int]]],
    n: int,
) -> Tensor:
    """Place values[i] into each (row, col) of cells[i] in an n-by-n matrix."""
    data = np.zeros((n, n), dtype=np.float64)
    for value, group in zip(values.data, cells):
        for r, c in group:
            data[r, c] = value

    def bwd(g: np.ndarray) -> None:
        gv = np.zeros_like(values.data)
        for i, group in enumerate(cells):
            for r, c in group:
                gv[i] += g[r, c]
        _acc(values, gv)

    return Tensor(data, parents=(values,), backward=bwd)


def matrix_power(m: Tensor, p: int) -> Tensor:
    """m chained into itself p times; p == 1 returns m unchanged."""
    if not isinstance(p, int) or p < 1:
        raise ValueError(f"matrix power must be an integer >= 1, got {p!r}")
    out = m
    for _ in range(p - 1):
        out = matmul(out, m)
    return out


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of the true label."""
    z = logits.data
    if z.ndim != 1:
        raise ValueError(f"logits must be a vector, got shape {z.shape}")
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} outside 0..{z.size - 1}")
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    probs = np.exp(shifted - log_norm)

    def bwd(g: np.ndarray) -> None:
        gl = probs.copy()
        gl[label] -= 1.0
        _acc(logits, gl * g)

    return Tensor(log_norm - shifted[label], parents=(logits,), backward=bwd)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    n_skipped: int
    worst: tuple[str, int] | None

    @property
    def ok(self) -> bool:
        return self.n_checked > 0

    def __str__(self) -> str:
        where = f" at {self.worst[0]}[{self.worst[1]}]" if self.worst else ""
        return (
            f"max rel err {self.max_rel_err:.3e}{where} "
            f"({self.n_checked} coords checked, {self.n_skipped} near kinks skipped)"
        )


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-3,
    max_coords: int = 200,
    seed: int = 0,
    skip_kinks: bool = True,
) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` must recompute the scalar loss from the current parameter
    values.  Relative error uses max(|analytic|, |numeric|, 1e-8) as
    the denominator.  Coordinates whose leaky-relu sign pattern differs
    between the two probe points sit on a kink where the comparison is
    meaningless; they are skipped and counted.
    """
    names = sorted(params)
    for p in params.values():
        p.zero_grad()
    loss = fn()
    backward(loss)
    analytic = {
        name: (
            params[name].grad.copy()
            if params[name].grad is not None
            else np.zeros_like(params[name].data)
        )
        for name in names
    }

    sizes = [params[name].data.size for name in names]
    total = int(np.sum(sizes))
    rng = np.random.Generator(np.random.PCG64(seed))
    count = min(max_coords, total)
    coords = rng.choice(total, size=count, replace=False)

    starts = np.cumsum([0] + sizes)
    max_rel = 0.0
    worst: tuple[str, int] | None = None
    checked = 0
    skipped = 0
    for coord in sorted(int(c) for c in coords):
        which = int(np.searchsorted(starts, coord, side="right") - 1)
        name = names[which]
        offset = coord - starts[which]
        flat = params[name].data.reshape(-1)
        keep = flat[offset]

        flat[offset] = keep + eps
        with record_activation_signs() as hi_trace:
            f_hi = fn().item()
        flat[offset] = keep - eps
        with record_activation_signs() as lo_trace:
            f_lo = fn().item()
        flat[offset] = keep

        if skip_kinks and signs_blob(hi_trace) != signs_blob(lo_trace):
            skipped += 1
            continue
        numeric = (f_hi - f_lo) / (2.0 * eps)
        exact = analytic[name].reshape(-1)[offset]
        rel = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        checked += 1
        if rel > max_rel:
            max_rel = rel
            worst = (name, int(offset))
    return GradCheckReport(max_rel, checked, skipped, worst)
