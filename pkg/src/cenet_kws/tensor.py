"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array together with an optional gradient and a
record of the operation that produced it.  Calling ``backward`` on a
scalar result walks the recorded graph in reverse topological order,
visiting each op exactly once and accumulating gradients additively on
every tensor that requires them.

float32 is the working precision for training and inference; float64
inputs stay float64 so the same ops can be checked against central
finite differences at high precision.  Every op output is screened for
NaN/Inf, which raises NonFiniteError.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or +/-Inf."""


_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _as_float_array(data, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in _FLOAT_DTYPES:
        arr = arr.astype(np.float32)
    return arr


def _check_finite(arr, what):
    # max/min both propagate NaN and catch +Inf/-Inf in one pass each.
    if arr.size and not (np.isfinite(arr.max()) and np.isfinite(arr.min())):
        raise NonFiniteError(f"non-finite values produced by {what}")


class Tensor:
    """n-dimensional float array, optionally tracked by the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_float_array(data, dtype)
        _check_finite(self.data, "tensor constructor")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate ``grad`` on every requires_grad tensor reachable from here.

        The loss must be a scalar.  Repeated calls without zeroing
        accumulate: each call adds one full gradient pass.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        topo = _toposort(self)
        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _toposort(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def _from_op(data, parents, what):
    out = Tensor.__new__(Tensor)
    out.data = data
    _check_finite(data, what)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = tuple(parents) if out.requires_grad else ()
    out._vjp = None
    return out


def _reduce_to(grad, shape):
    """Sum ``grad`` down to ``shape`` (supports the scalar-broadcast case)."""
    if grad.shape == tuple(shape):
        return grad
    return grad.sum().reshape(shape) if np.prod(shape, dtype=int) == 1 else grad.reshape(shape)


# -- elementwise and shape ops ------------------------------------------


def add(a, b):
    """Elementwise sum; shapes must match or one operand must be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = _from_op(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        out._vjp = lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape))
    return out


def mul(a, b):
    """Elementwise product; shapes must match or one operand must be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = _from_op(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        out._vjp = lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape))
    return out


def reshape(x, shape):
    x = as_tensor(x)
    out = _from_op(x.data.reshape(shape), (x,), "reshape")
    if out.requires_grad:
        out._vjp = lambda g: (g.reshape(x.shape),)
    return out


def transpose(x, axes=None):
    x = as_tensor(x)
    out = _from_op(np.ascontiguousarray(x.data.transpose(axes)), (x,), "transpose")
    if out.requires_grad:
        inv = None if axes is None else tuple(np.argsort(axes))
        out._vjp = lambda g: (g.transpose(inv),)
    return out


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = _from_op(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), "sum")
    if out.requires_grad:
        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, x.shape).astype(x.dtype, copy=True),)
        out._vjp = vjp
    return out


def relu(x):
    x = as_tensor(x)
    data = np.maximum(x.data, 0)
    out = _from_op(data, (x,), "relu")
    if out.requires_grad:
        mask = data > 0
        out._vjp = lambda g: (g * mask,)
    return out


def softmax(x, axis=-1):
    """Row-stochastic softmax along ``axis`` with max-shift stabilization."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax axis {axis} out of range for shape {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _from_op(s, (x,), "softmax")
    if out.requires_grad:
        out._vjp = lambda g: ((g - (g * s).sum(axis=axis, keepdims=True)) * s,)
    return out


# -- linear algebra ------------------------------------------------------


def matmul(a, b):
    """Matrix product for 2-d operands or batched 3-d/2-d combinations."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul requires operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = _from_op(np.matmul(a.data, b.data), (a, b), "matmul")
    if out.requires_grad:
        def vjp(g):
            da = np.matmul(g, np.swapaxes(b.data, -1, -2))
            db = np.matmul(np.swapaxes(a.data, -1, -2), g)
            while da.ndim > a.ndim:
                da = da.sum(axis=0)
            while db.ndim > b.ndim:
                db = db.sum(axis=0)
            return da, db
        out._vjp = vjp
    return out


def linear(x, w, b=None):
    """Affine map: x (B,in) times w (out,in) transposed, plus bias."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ValueError(f"linear shape mismatch: x {x.shape}, w {w.shape}")
    data = x.data @ w.data.T
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ValueError(f"linear bias shape {b.shape} != ({w.shape[0]},)")
        data = data + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _from_op(data, parents, "linear")
    if out.requires_grad:
        def vjp(g):
            grads = [g @ w.data, g.T @ x.data]
            if b is not None:
                grads.append(g.sum(axis=0))
            return tuple(grads)
        out._vjp = vjp
    return out


# -- convolution and pooling ---------------------------------------------


def _conv_out_size(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def conv2d(x, w, stride=1, pad=0):
    """Bias-free 2-d cross-correlation.

    x: (B, Cin, H, W); w: (Cout, Cin, k, k).  Implemented as im2col plus
    one GEMM; the backward pass recomputes the patch matrix instead of
    keeping it alive, trading a little compute for memory.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects 4-d input and weight")
    if w.shape[2] != w.shape[3]:
        raise ValueError("conv2d kernels must be square")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d channel mismatch: input {x.shape[1]}, weight {w.shape[1]}")
    bsz, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho, wo = _conv_out_size(h, k, stride, pad), _conv_out_size(wd, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be empty for input {x.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * ho * wo, cin * k * k)
    wmat = w.data.reshape(cout, -1)
    data = (cols @ wmat.T).reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2)
    out = _from_op(np.ascontiguousarray(data), (x, w), "conv2d")
    if out.requires_grad:
        def vjp(g):
            gmat = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, cout)
            dw = (gmat.T @ cols).reshape(w.shape) if w.requires_grad else None
            dx = None
            if x.requires_grad:
                dcols = (gmat @ wmat).reshape(bsz, ho, wo, cin, k, k)
                dxp = np.zeros((bsz, cin, h + 2 * pad, wd + 2 * pad), dtype=x.dtype)
                for i in range(k):
                    for j in range(k):
                        dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                            dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
            return dx, dw
        out._vjp = vjp
    return out


def avgpool2d(x, k, stride=None):
    """Mean over k-by-k windows; non-overlapping when stride == k."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError("avgpool2d expects a 4-d input")
    stride = k if stride is None else stride
    bsz, c, h, w = x.shape
    if k > h or k > w:
        raise ValueError(f"pool window {k} larger than input {h}x{w}")
    ho, wo = (h - k) // stride + 1, (w - k) // stride + 1
    win = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = _from_op(np.ascontiguousarray(win.mean(axis=(4, 5))), (x,), "avgpool2d")
    if out.requires_grad:
        def vjp(g):
            gk = g / (k * k)
            dx = np.zeros_like(x.data)
            for i in range(k):
                for j in range(k):
                    dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gk
            return (dx,)
        out._vjp = vjp
    return out


def global_avg_pool(x):
    """(B, C, H, W) -> (B, C) spatial mean."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError("global_avg_pool expects a 4-d input")
    hw = x.shape[2] * x.shape[3]
    out = _from_op(x.data.mean(axis=(2, 3)), (x,), "global_avg_pool")
    if out.requires_grad:
        out._vjp = lambda g: (np.broadcast_to(g[:, :, None, None] / hw, x.shape).astype(x.dtype, copy=True),)
    return out


# -- batch normalization --------------------------------------------------


class BNStats:
    """Running mean/var buffers for one BatchNorm channel axis."""

    __slots__ = ("mean", "var")

    def __init__(self, channels, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batchnorm2d(x, gamma, beta, stats, train, momentum=0.1, eps=1e-5):
    """Per-channel normalization over (B, H, W).

    Train mode normalizes with batch statistics and updates ``stats`` in
    place (exponential moving average); infer mode normalizes with the
    stored running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 4:
        raise ValueError("batchnorm2d expects a 4-d input")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError("batchnorm2d affine parameter shape mismatch")

    if train:
        mu = x.data.mean(axis=(0, 2, 3))
        var = np.maximum((x.data * x.data).mean(axis=(0, 2, 3)) - mu * mu, 0.0)
        stats.mean = ((1 - momentum) * stats.mean + momentum * mu).astype(stats.mean.dtype)
        stats.var = ((1 - momentum) * stats.var + momentum * var).astype(stats.var.dtype)
    else:
        mu, var = stats.mean.astype(x.dtype), stats.var.astype(x.dtype)

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    data = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    out = _from_op(data, (x, gamma, beta), "batchnorm2d")
    if out.requires_grad:
        def vjp(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dxhat = g * gamma.data[None, :, None, None]
            if train:
                m1 = dxhat.mean(axis=(0, 2, 3), keepdims=True)
                m2 = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
                dx = inv[None, :, None, None] * (dxhat - m1 - xhat * m2)
            else:
                dx = dxhat * inv[None, :, None, None]
            return dx, dgamma, dbeta
        out._vjp = vjp
    return out


# -- loss ------------------------------------------------------------------


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy with log-sum-exp stabilization.

    logits: (B, C) Tensor; labels: length-B integer array of class ids.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"cross_entropy shape mismatch: {logits.shape} vs labels {labels.shape}")
    bsz, nclass = logits.shape
    if labels.min() < 0 or labels.max() >= nclass:
        raise ValueError(f"label outside [0, {nclass})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(bsz), labels].mean()
    out = _from_op(np.asarray(loss, dtype=logits.dtype), (logits,), "cross_entropy")
    if out.requires_grad:
        def vjp(g):
            p = np.exp(logp)
            p[np.arange(bsz), labels] -= 1.0
            return (g * p / bsz,)
        out._vjp = vjp
    return out
