"""Parameter and multiply-accumulate accounting for built models.

Two totals are reported for parameters:

  * weight_params: conv + linear + GCN map weights only.
  * params: everything learnable, including BN affine pairs, the
    classifier bias, and the GCN gate.  This is the headline figure
    quoted for the family (CENet-6 16.3K, CENet-24 44.3K, CENet-40 60.9K).

MAC counts carry a convention tag because compact-model accounting
usually charges only the main computational path:

  * "weights-only": the headline convention.  Each residual-branch and
    classifier conv is counted as h'*w'*k^2*cin*cout at its output
    size; the initial conv is charged at its block's post-pool output;
    stride-2 shortcut projections are omitted; a GCN module contributes
    its weight-activation products only, N*(2*c*(c/r) + c^2).
  * "full": every conv (projections included) at its own output size,
    and GCN modules additionally pay the N^2*(c/r) affinity and N^2*c
    aggregation products, which dominate at large N.

Per-layer records always satisfy totals == sum(rows) for the report's
convention.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .model import CENetModel
from .nn import BatchNorm2d, Conv2d

CONVENTIONS = ("weights-only", "full")
DEFAULT_INPUT_SHAPE = (1, 1, 101, 40)


@dataclass
class LayerRecord:
    name: str
    kind: str
    param_count: int
    weight_param_count: int
    mac_count: int
    output_shape: tuple


@dataclass
class FootprintReport:
    rows: list = field(default_factory=list)
    convention: str = "weights-only"

    @property
    def total_params(self):
        return sum(r.param_count for r in self.rows)

    @property
    def total_weight_params(self):
        return sum(r.weight_param_count for r in self.rows)

    @property
    def total_macs(self):
        return sum(r.mac_count for r in self.rows)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["name", "kind", "params", "weight_params", "macs", "output_shape"])
        for r in self.rows:
            writer.writerow([r.name, r.kind, r.param_count, r.weight_param_count,
                             r.mac_count, "x".join(str(d) for d in r.output_shape)])
        writer.writerow(["total", self.convention, self.total_params,
                         self.total_weight_params, self.total_macs, ""])
        return buf.getvalue()

    def to_table(self):
        lines = [f"{'layer':<24}{'kind':<8}{'params':>10}{'macs':>12}  output"]
        for r in self.rows:
            shape = "x".join(str(d) for d in r.output_shape)
            lines.append(f"{r.name:<24}{r.kind:<8}{r.param_count:>10}{r.mac_count:>12}  {shape}")
        lines.append(f"{'total (' + self.convention + ')':<24}{'':<8}"
                     f"{self.total_params:>10}{self.total_macs:>12}")
        return "\n".join(lines)


def _walk(model, input_shape, convention):
    """Yield LayerRecords for every parameterized layer plus the pool rows."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    _, c, h, w = input_shape

    def conv_record(name, layer, h_in, w_in, skip_macs=False, mac_hw=None):
        c_out, h_out, w_out = layer.out_shape(h_in, w_in)
        params = layer.weight.size
        if skip_macs:
            macs = 0
        else:
            mh, mw = (h_out, w_out) if mac_hw is None else mac_hw
            macs = mh * mw * layer.kernel ** 2 * layer.in_channels * layer.out_channels
        return LayerRecord(name, "conv", params, params, macs, (c_out, h_out, w_out)), h_out, w_out

    records = []

    # initial block: conv at 101x40, BN, 2x2 pool
    conv = model.initial.conv
    pool_h, pool_w = (h + 2 - 3) + 1, (w + 2 - 3) + 1   # stride-1 pad-1 keeps size
    pool_h, pool_w = pool_h // 2, pool_w // 2
    rec, h1, w1 = conv_record("initial.conv", conv, h, w,
                              mac_hw=(pool_h, pool_w) if convention == "weights-only" else None)
    records.append(rec)
    bn_ch = model.initial.bn.channels
    records.append(LayerRecord("initial.bn", "bn", 2 * bn_ch, 0, 0, (bn_ch, h1, w1)))
    records.append(LayerRecord("initial.pool", "pool", 0, 0, 0, (bn_ch, pool_h, pool_w)))
    h, w = pool_h, pool_w

    for i, stage in enumerate(model.stages, start=1):
        for j, block in enumerate(stage.blocks):
            is_conn = j == len(stage.blocks) - 1
            tag = f"stage{i}.conn" if is_conn else f"stage{i}.b{j}"
            bh, bw = h, w
            for mod_name, layer in block.modules():
                name = f"{tag}.{mod_name}"
                if isinstance(layer, Conv2d):
                    if mod_name == "short":
                        rec, _, _ = conv_record(name, layer, h, w,
                                                skip_macs=(convention == "weights-only"))
                        records.append(rec)
                    else:
                        rec, bh2, bw2 = conv_record(name, layer, bh, bw)
                        records.append(rec)
                        bh, bw = bh2, bw2
                elif isinstance(layer, BatchNorm2d):
                    records.append(LayerRecord(name, "bn", 2 * layer.channels, 0, 0,
                                               (layer.channels, bh, bw)))
            h, w = bh, bw
        if stage.gcn is not None:
            records.append(_gcn_record(f"stage{i}.gcn", stage.gcn, h * w, convention,
                                       (stage.out_channels, h, w)))

    head = model.head
    records.append(LayerRecord("head", "linear",
                               head.weight.size + head.bias.size, head.weight.size,
                               head.in_features * head.out_features,
                               (head.out_features,)))
    return records


def _gcn_record(name, module, n_nodes, convention, out_shape):
    c, r = module.channels, module.reduction
    weight_params = 2 * c * (c // r) + c * c
    params = weight_params + 1  # the gamma gate
    macs = n_nodes * weight_params
    if convention == "full":
        macs += n_nodes * n_nodes * (c // r) + n_nodes * n_nodes * c
    return LayerRecord(name, "gcn", params, weight_params, macs, out_shape)


def count_params(model, input_shape=DEFAULT_INPUT_SHAPE):
    """Per-layer parameter report for a built model."""
    if not isinstance(model, CENetModel):
        raise TypeError("count_params expects a built CENetModel")
    return FootprintReport(_walk(model, input_shape, "weights-only"), convention="weights-only")


def count_macs(model, input_shape=DEFAULT_INPUT_SHAPE, convention="weights-only"):
    """Per-layer multiply-accumulate report under the given convention."""
    if not isinstance(model, CENetModel):
        raise TypeError("count_macs expects a built CENetModel")
    return FootprintReport(_walk(model, input_shape, convention), convention=convention)
