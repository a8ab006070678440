"""Non-local contextual feature augmentation over a stage's feature map.

The h*w spatial positions of a (c, h, w) feature map are treated as the
nodes of a fully-connected graph.  Each node feature is updated by an
affinity-weighted sum of messages from every node (one message-passing
iteration), and the result is fused back into the input through a
learned scalar gate:

    A[i, j] = exp(theta(x_i) . phi(x_j)) / sum_j exp(theta(x_i) . phi(x_j))
    xt_i    = relu(sum_j A[i, j] * W^T x_j)      (matrix form: relu(A X W))
    xa      = gamma * xt + X

gamma starts at 0, so a freshly inserted module is exactly the identity.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class NonLocalGCN:
    """Parameters of one insertion site: bias-free maps plus the gate."""

    kind = "gcn"

    def __init__(self, channels, reduction=4, rng=None):
        if channels % reduction != 0:
            raise ValueError(f"channels {channels} not divisible by reduction {reduction}")
        self.channels = channels
        self.reduction = reduction
        rng = rng or np.random.default_rng(0)
        emb = channels // reduction
        std = np.sqrt(2.0 / channels)
        self.w_theta = Tensor(rng.normal(0.0, std, size=(emb, channels)).astype(np.float32),
                              requires_grad=True)
        self.w_phi = Tensor(rng.normal(0.0, std, size=(emb, channels)).astype(np.float32),
                            requires_grad=True)
        self.w = Tensor(rng.normal(0.0, std, size=(channels, channels)).astype(np.float32),
                        requires_grad=True)
        self.gamma = Tensor(np.zeros((), dtype=np.float32), requires_grad=True)

    def __call__(self, x):
        """Augment a (B, c, h, w) feature map; shape-preserving."""
        bsz, c, h, w = x.shape
        if c != self.channels:
            raise ValueError(f"feature map has {c} channels, module expects {self.channels}")
        nodes = T.transpose(T.reshape(x, (bsz, c, h * w)), (0, 2, 1))  # (B, N, c)
        xa = augment(nodes, self)
        return T.reshape(T.transpose(xa, (0, 2, 1)), (bsz, c, h, w))

    def named_parameters(self, prefix):
        yield f"{prefix}.theta", self.w_theta, True
        yield f"{prefix}.phi", self.w_phi, True
        yield f"{prefix}.w", self.w, True
        yield f"{prefix}.gamma", self.gamma, False

    def named_buffers(self, prefix):
        return ()


def flatten_map(x):
    """(c, h, w) feature map -> (N, c) node features, N = h*w."""
    c, h, w = x.shape
    return T.transpose(T.reshape(x, (c, h * w)), (1, 0))


def unflatten_map(nodes, h, w):
    """(N, c) node features -> (c, h, w); inverse of flatten_map."""
    n, c = nodes.shape
    if n != h * w:
        raise ValueError(f"{n} nodes cannot reshape to {h}x{w}")
    return T.reshape(T.transpose(nodes, (1, 0)), (c, h, w))


def affinity(x, module):
    """Embedded-Gaussian affinity matrix, row-softmax normalized.

    x: (N, c) or (B, N, c) node features.  Returns (.., N, N) with every
    row summing to 1.
    """
    x = T.as_tensor(x)
    theta = T.matmul(x, T.transpose(module.w_theta, None))   # (.., N, c/r)
    phi = T.matmul(x, T.transpose(module.w_phi, None))
    logits = T.matmul(theta, _swap_last(phi))
    return T.softmax(logits, axis=-1)


def gaussian_affinity(x):
    """Dot-product (non-embedded) affinity: softmax of X X^T rows.

    The softmax's max-shift keeps large dot products from overflowing.
    """
    x = T.as_tensor(x)
    return T.softmax(T.matmul(x, _swap_last(x)), axis=-1)


def message_pass(x, module, aff=None):
    """One aggregation step: per node, relu of the affinity-weighted sum
    of messages W^T x_j, i.e. relu(A @ X @ W) on row-major features."""
    x = T.as_tensor(x)
    if aff is None:
        aff = affinity(x, module)
    return T.relu(T.matmul(T.matmul(aff, x), module.w))


def augment(x, module):
    """Gated fusion of context and input: gamma * message_pass(x) + x."""
    x = T.as_tensor(x)
    return T.add(T.mul(module.gamma, message_pass(x, module)), x)


def _swap_last(t):
    axes = tuple(range(t.ndim - 2)) + (t.ndim - 1, t.ndim - 2)
    return T.transpose(t, axes)


def insert_gcn(model, stages, reduction=4, rng=None):
    """Attach one NonLocalGCN after each chosen stage's connection block.

    ``stages`` is a subset of {1, 2, 3}.  gamma starts at 0, so inserting
    modules does not change infer-mode outputs until training moves it.
    Returns the model.
    """
    rng = rng or np.random.default_rng(0)
    for s in sorted(set(stages)):
        if s not in (1, 2, 3):
            raise ValueError(f"invalid stage index {s}")
        stage = model.stages[s - 1]
        stage.gcn = NonLocalGCN(stage.out_channels, reduction=reduction, rng=rng)
    model.config.gcn_stages = tuple(sorted(set(model.config.gcn_stages) | set(stages)))
    return model
