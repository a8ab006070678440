"""CENet model family: initial block, three bottleneck stages, classifier.

The architecture is a narrow residual network for 101x40 time-frequency
inputs.  Every stage runs a fixed number of identity bottleneck blocks
(1x1 reduce, 3x3, 1x1 restore) followed by one connection block that
doubles as the downsampling step: its 3x3 conv has stride 2, its final
1x1 expands the channel count, and a 1x1 stride-2 projection brings the
shortcut to the new shape.  Channels grow 16 -> 32 -> 48 -> 64 across
stages and the head is a global average pool into a 12-way linear layer.

Blocks use post-activation ordering (conv -> BN -> ReLU, final ReLU
after the residual add).  3x3 convs pad by 1, 1x1 convs by 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .gcn import insert_gcn
from .nn import BatchNorm2d, Conv2d, Linear

VARIANTS = ("cenet6", "cenet24", "cenet40")

# Per stage: (in_channels, mid_channels, stage_out_via_connection).
# Bottleneck blocks keep in == out at the stage's working width.
STAGE_PLANS = ((16, 8, 32), (32, 8, 48), (48, 12, 64))

VARIANT_REPEATS = {
    "cenet6": (1, 1, 1),
    "cenet24": (7, 7, 7),
    "cenet40": (15, 15, 7),
}

N_KEYWORD_CLASSES = 12


@dataclass
class BlockSpec:
    """Declarative description of one block: conv (in, out) pairs and stride."""

    kind: str                      # initial | bottleneck | connection
    channels: tuple                # ((in, out), ...) one pair per conv
    stride: int = 1

    KERNELS = {"initial": (3,), "bottleneck": (1, 3, 1), "connection": (1, 3, 1)}

    def __post_init__(self):
        if self.kind not in self.KERNELS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        if len(self.channels) != len(self.KERNELS[self.kind]):
            raise ValueError(f"{self.kind} block needs {len(self.KERNELS[self.kind])} convs")
        if self.kind == "bottleneck":
            if self.channels[0][0] != self.channels[-1][1]:
                raise ValueError("bottleneck requires in == out for the identity shortcut")
            if self.stride != 1:
                raise ValueError("bottleneck blocks are stride 1")
        if self.kind == "connection":
            if self.channels[-1][1] <= self.channels[0][0]:
                raise ValueError("connection block must expand channels")
            if self.stride != 2:
                raise ValueError("connection blocks are stride 2")

    @property
    def kernels(self):
        return self.KERNELS[self.kind]


def table_specs(variant):
    """Expand a variant name into the ordered list of BlockSpecs."""
    if variant not in VARIANT_REPEATS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    specs = [BlockSpec("initial", ((1, 16),))]
    for (cin, mid, cout), rep in zip(STAGE_PLANS, VARIANT_REPEATS[variant]):
        for _ in range(rep):
            specs.append(BlockSpec("bottleneck", ((cin, mid), (mid, mid), (mid, cin))))
        specs.append(BlockSpec("connection", ((cin, mid), (mid, mid), (mid, cout)), stride=2))
    return specs


@dataclass
class ModelConfig:
    variant: str = "cenet6"
    n_classes: int = N_KEYWORD_CLASSES
    gcn_stages: tuple = ()
    gcn_reduction: int = 4

    def __post_init__(self):
        if self.variant not in VARIANT_REPEATS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        self.gcn_stages = tuple(sorted(set(int(s) for s in self.gcn_stages)))
        if any(s not in (1, 2, 3) for s in self.gcn_stages):
            raise ValueError(f"gcn_stages must be a subset of {{1,2,3}}, got {self.gcn_stages}")

    @property
    def stage_repeats(self):
        return VARIANT_REPEATS[self.variant]


class InitialBlock:
    """3x3 conv (1 -> 16), BN, ReLU, then 2x2 average pooling."""

    def __init__(self, rng):
        self.conv = Conv2d(1, 16, 3, stride=1, pad=1, rng=rng)
        self.bn = BatchNorm2d(16)

    def forward(self, x, train=False):
        return T.avgpool2d(T.relu(self.bn(self.conv(x), train)), 2, 2)

    def modules(self):
        yield "conv", self.conv
        yield "bn", self.bn


class BottleneckBlock:
    """Residual unit: relu(conv1x1-bn-relu-conv3x3-bn-relu-conv1x1-bn + x)."""

    def __init__(self, cin, mid, rng):
        self.conv1 = Conv2d(cin, mid, 1, rng=rng)
        self.bn1 = BatchNorm2d(mid)
        self.conv2 = Conv2d(mid, mid, 3, pad=1, rng=rng)
        self.bn2 = BatchNorm2d(mid)
        self.conv3 = Conv2d(mid, cin, 1, rng=rng)
        self.bn3 = BatchNorm2d(cin)

    def forward(self, x, train=False):
        if x.shape[1] != self.conv1.in_channels:
            raise ValueError(f"expected {self.conv1.in_channels} channels, got {x.shape[1]}")
        y = T.relu(self.bn1(self.conv1(x), train))
        y = T.relu(self.bn2(self.conv2(y), train))
        y = self.bn3(self.conv3(y), train)
        return T.relu(T.add(y, x))

    def modules(self):
        yield "conv1", self.conv1
        yield "bn1", self.bn1
        yield "conv2", self.conv2
        yield "bn2", self.bn2
        yield "conv3", self.conv3
        yield "bn3", self.bn3


class ConnectionBlock:
    """Downsampling bottleneck: stride-2 3x3, expanded 1x1, projected shortcut."""

    def __init__(self, cin, mid, cout, rng):
        self.conv1 = Conv2d(cin, mid, 1, rng=rng)
        self.bn1 = BatchNorm2d(mid)
        self.conv2 = Conv2d(mid, mid, 3, stride=2, pad=1, rng=rng)
        self.bn2 = BatchNorm2d(mid)
        self.conv3 = Conv2d(mid, cout, 1, rng=rng)
        self.bn3 = BatchNorm2d(cout)
        self.short = Conv2d(cin, cout, 1, stride=2, rng=rng)
        self.short_bn = BatchNorm2d(cout)

    def forward(self, x, train=False):
        if x.shape[1] != self.conv1.in_channels:
            raise ValueError(f"expected {self.conv1.in_channels} channels, got {x.shape[1]}")
        y = T.relu(self.bn1(self.conv1(x), train))
        y = T.relu(self.bn2(self.conv2(y), train))
        y = self.bn3(self.conv3(y), train)
        s = self.short_bn(self.short(x), train)
        return T.relu(T.add(y, s))

    def modules(self):
        yield "conv1", self.conv1
        yield "bn1", self.bn1
        yield "conv2", self.conv2
        yield "bn2", self.bn2
        yield "conv3", self.conv3
        yield "bn3", self.bn3
        yield "short", self.short
        yield "short_bn", self.short_bn


class Stage:
    def __init__(self, bottlenecks, connection, out_channels):
        self.blocks = list(bottlenecks) + [connection]
        self.out_channels = out_channels
        self.gcn = None

    def forward(self, x, train=False):
        for block in self.blocks:
            x = block.forward(x, train)
        pre = x
        if self.gcn is not None:
            x = self.gcn(x)
        return x, pre


class CENetModel:
    """Built network: initial block, three stages, 12-way classifier head."""

    def __init__(self, config, rng_seed=0):
        self.config = config
        rng = np.random.default_rng(rng_seed)
        self.initial = InitialBlock(rng)
        self.stages = []
        for (cin, mid, cout), rep in zip(STAGE_PLANS, config.stage_repeats):
            bottlenecks = [BottleneckBlock(cin, mid, rng) for _ in range(rep)]
            self.stages.append(Stage(bottlenecks, ConnectionBlock(cin, mid, cout, rng), cout))
        # small head init keeps fresh-model logits near zero (loss ~ ln(n_classes))
        self.head = Linear(STAGE_PLANS[-1][2], config.n_classes, rng=rng, weight_std=0.01)
        if config.gcn_stages:
            insert_gcn(self, config.gcn_stages, reduction=config.gcn_reduction, rng=rng)

    def forward(self, x, train=False, collect_stage_maps=False):
        """Features (B, 1, 101, 40) -> logits (B, n_classes).

        With collect_stage_maps, also returns {"stageK.pre": Tensor,
        "stageK.post": Tensor} holding each stage's output before and
        after its GCN (identical objects when the stage has none).
        """
        x = T.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected input (B, 1, H, W), got {x.shape}")
        maps = {}
        y = self.initial.forward(x, train)
        for i, stage in enumerate(self.stages, start=1):
            y, pre = stage.forward(y, train)
            if collect_stage_maps:
                maps[f"stage{i}.pre"] = pre
                maps[f"stage{i}.post"] = y
        logits = self.head(T.global_avg_pool(y))
        return (logits, maps) if collect_stage_maps else logits

    def named_modules(self):
        yield from ((f"initial.{n}", m) for n, m in self.initial.modules())
        for i, stage in enumerate(self.stages, start=1):
            for j, block in enumerate(stage.blocks):
                tag = f"stage{i}.conn" if j == len(stage.blocks) - 1 else f"stage{i}.b{j}"
                yield from ((f"{tag}.{n}", m) for n, m in block.modules())
            if stage.gcn is not None:
                yield f"stage{i}.gcn", stage.gcn
        yield "head", self.head

    def named_parameters(self):
        """Deterministic (name, tensor, wants_weight_decay) iteration."""
        for prefix, module in self.named_modules():
            yield from module.named_parameters(prefix)

    def named_buffers(self):
        for prefix, module in self.named_modules():
            yield from module.named_buffers(prefix)

    def parameters(self):
        return [t for _, t, _ in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def conv_layers(self):
        """(kernel, in, out) triples of every conv, in architecture order."""
        for name, module in self.named_modules():
            if isinstance(module, Conv2d):
                yield name, (module.kernel, module.in_channels, module.out_channels)


def build(config=None, rng_seed=0, **kwargs):
    """Construct a CENetModel with deterministic initialization.

    Accepts either a ModelConfig or keyword fields (variant, gcn_stages, ...).
    """
    if config is None:
        config = ModelConfig(**kwargs)
    elif kwargs:
        raise ValueError("pass either a config object or keyword fields, not both")
    return CENetModel(config, rng_seed=rng_seed)
