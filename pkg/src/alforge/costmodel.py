"""Analytical parameter/MAC accounting for conv, ghost, attention and composites.

Conventions pinned for comparability: FLOPs = 2 * MACs; bias and normalization
are excluded from MACs; convolutions assume "same" padding, so the output grid
is ceil(H / stride) x ceil(W / stride).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import ChannelMismatch, ConfigInvalid


@dataclass(frozen=True)
class ConvSpec:
    c_in: int
    c_out: int
    k: int = 1
    stride: int = 1
    resolution: tuple[int, int] = (1, 1)  # (H, W) of the input
    groups: int = 1
    bias: bool = False

    def __post_init__(self) -> None:
        if min(self.c_in, self.c_out, self.k, self.stride, self.groups,
               *self.resolution) < 1:
            raise ConfigInvalid("all conv dimensions must be positive")
        if self.c_in % self.groups or self.c_out % self.groups:
            raise ConfigInvalid("c_in and c_out must be divisible by groups")


@dataclass(frozen=True)
class GhostSpec:
    c_in: int
    c_out: int
    ratio: int = 2
    cheap_kernel: int = 3
    resolution: tuple[int, int] = (1, 1)
    primary_kernel: int = 1

    def __post_init__(self) -> None:
        if self.ratio < 2:
            raise ConfigInvalid("ghost ratio must be >= 2")
        if min(self.c_in, self.c_out, self.cheap_kernel, self.primary_kernel,
               *self.resolution) < 1:
            raise ConfigInvalid("all ghost dimensions must be positive")

    @property
    def primary_channels(self) -> int:
        return math.ceil(self.c_out / self.ratio)

    @property
    def cheap_channels(self) -> int:
        return self.c_out - self.primary_channels


@dataclass(frozen=True)
class AttentionSpec:
    d_model: int
    heads: int = 1
    tokens: int = 1
    ffn_expansion: int = 2

    def __post_init__(self) -> None:
        if self.d_model < 1 or self.heads < 1 or self.tokens < 1 or self.ffn_expansion < 1:
            raise ConfigInvalid("all attention dimensions must be positive")
        if self.d_model % self.heads:
            raise ConfigInvalid("d_model must be divisible by heads")


@dataclass(frozen=True)
class CostReport:
    name: str
    params: int
    macs: int
    children: tuple["CostReport", ...] = ()
    notes: Mapping[str, float] = field(default_factory=dict)

    @property
    def flops(self) -> int:
        return 2 * self.macs

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


def conv_out_hw(resolution: tuple[int, int], stride: int) -> tuple[int, int]:
    h, w = resolution
    return math.ceil(h / stride), math.ceil(w / stride)


def conv_cost(spec: ConvSpec, name: str = "conv") -> CostReport:
    weight_params = (spec.c_in // spec.groups) * spec.k * spec.k * spec.c_out
    params = weight_params + (spec.c_out if spec.bias else 0)
    h_out, w_out = conv_out_hw(spec.resolution, spec.stride)
    macs = weight_params * h_out * w_out
    return CostReport(name, params, macs)


def ghost_cost(spec: GhostSpec, name: str = "ghost") -> CostReport:
    primary = conv_cost(
        ConvSpec(spec.c_in, spec.primary_channels, spec.primary_kernel,
                 resolution=spec.resolution),
        name="primary_pointwise",
    )
    children = [primary]
    if spec.cheap_channels > 0:
        cheap = conv_cost(
            ConvSpec(spec.cheap_channels, spec.cheap_channels, spec.cheap_kernel,
                     groups=spec.cheap_channels, resolution=spec.resolution),
            name="cheap_depthwise",
        )
        children.append(cheap)
    params = sum(c.params for c in children)
    macs = sum(c.macs for c in children)
    equivalent = conv_cost(
        ConvSpec(spec.c_in, spec.c_out, spec.primary_kernel, resolution=spec.resolution))
    notes = {"compression_ratio": params / equivalent.params if equivalent.params else 0.0}
    return CostReport(name, params, macs, tuple(children), notes)


def attention_cost(spec: AttentionSpec, name: str = "attention") -> CostReport:
    d, n = spec.d_model, spec.tokens
    proj_params = 4 * d * d  # Q, K, V and output projections
    ffn_params = 2 * spec.ffn_expansion * d * d
    proj_macs = n * proj_params
    score_macs = 2 * n * n * d  # QK^T plus attention-weighted V
    ffn_macs = n * ffn_params
    return CostReport(
        name,
        proj_params + ffn_params,
        proj_macs + score_macs + ffn_macs,
        notes={"score_macs": float(score_macs)},
    )


def _require(node: Mapping[str, Any], *keys: str) -> list[Any]:
    missing = [k for k in keys if k not in node]
    if missing:
        raise ConfigInvalid(f"{node.get('type', '?')} node missing keys {missing}")
    return [node[k] for k in keys]


def _resolution(node: Mapping[str, Any]) -> tuple[int, int]:
    res = node.get("resolution", (1, 1))
    return (int(res[0]), int(res[1]))


def composite_cost(node: Mapping[str, Any]) -> CostReport:
    """Cost of a structured block tree (nested dicts with a "type" key)."""
    report, _, _ = _composite(node)
    return report


def _sum_children(name, reports, c_in, c_out, notes=None):
    return CostReport(
        name,
        sum(r.params for r in reports),
        sum(r.macs for r in reports),
        tuple(reports),
        notes or {},
    ), c_in, c_out


def _composite(node: Mapping[str, Any]) -> tuple[CostReport, int | None, int | None]:
    node_type = node.get("type")
    if node_type == "conv":
        c_in, c_out = _require(node, "c_in", "c_out")
        spec = ConvSpec(c_in, c_out, node.get("k", 1), node.get("stride", 1),
                        _resolution(node), node.get("groups", 1), node.get("bias", False))
        return conv_cost(spec, node.get("name", "conv")), c_in, c_out
    if node_type == "ghost":
        c_in, c_out = _require(node, "c_in", "c_out")
        spec = GhostSpec(c_in, c_out, node.get("ratio", 2), node.get("cheap_kernel", 3),
                         _resolution(node), node.get("primary_kernel", 1))
        return ghost_cost(spec, node.get("name", "ghost")), c_in, c_out
    if node_type == "attention":
        (d_model,) = _require(node, "d_model")
        spec = AttentionSpec(d_model, node.get("heads", 1), node.get("tokens", 1),
                             node.get("ffn_expansion", 2))
        return attention_cost(spec, node.get("name", "attention")), d_model, d_model
    if node_type == "ghost_bottleneck":
        c_in, c_out = _require(node, "c_in", "c_out")
        hidden = node.get("hidden", c_out)
        res = _resolution(node)
        g1, _, _ = _composite({"type": "ghost", "c_in": c_in, "c_out": hidden,
                               "resolution": res, "name": "expand",
                               "ratio": node.get("ratio", 2)})
        g2, _, _ = _composite({"type": "ghost", "c_in": hidden, "c_out": c_out,
                               "resolution": res, "name": "project",
                               "ratio": node.get("ratio", 2)})
        return _sum_children(node.get("name", "ghost_bottleneck"), [g1, g2], c_in, c_out)
    if node_type == "c3ghost":
        # Split into a passthrough conv and a conv + stacked ghost bottlenecks,
        # concatenated and fused by a final 1x1 conv.
        c_in, c_out = _require(node, "c_in", "c_out")
        hidden = node.get("hidden", c_out // 2)
        depth = node.get("depth", 3)
        res = _resolution(node)
        parts = [
            conv_cost(ConvSpec(c_in, hidden, 1, resolution=res), "split_passthrough"),
            conv_cost(ConvSpec(c_in, hidden, 1, resolution=res), "split_main"),
        ]
        for i in range(depth):
            gb, _, _ = _composite({"type": "ghost_bottleneck", "c_in": hidden,
                                   "c_out": hidden, "resolution": res,
                                   "name": f"bottleneck_{i}"})
            parts.append(gb)
        parts.append(conv_cost(ConvSpec(2 * hidden, c_out, 1, resolution=res), "fuse"))
        return _sum_children(node.get("name", "c3ghost"), parts, c_in, c_out)
    if node_type == "psa":
        # Channel split: attention runs on a fraction of the channels, the rest
        # pass through; a 1x1 conv fuses the concatenation.
        (channels,) = _require(node, "channels")
        split_ratio = node.get("split_ratio", 0.5)
        d_model = max(1, int(round(channels * split_ratio)))
        res = _resolution(node)
        tokens = node.get("tokens", res[0] * res[1])
        attn, _, _ = _composite({"type": "attention", "d_model": d_model,
                                 "heads": node.get("heads", 1), "tokens": tokens,
                                 "ffn_expansion": node.get("ffn_expansion", 2)})
        fuse = conv_cost(ConvSpec(channels, channels, 1, resolution=res), "fuse")
        return _sum_children(node.get("name", "psa"), [attn, fuse], channels, channels)
    if node_type == "sequence":
        reports = []
        c_in = c_prev = None
        for child in node.get("children", ()):
            report, child_in, child_out = _composite(child)
            if c_prev is not None and child_in is not None and child_in != c_prev:
                raise ChannelMismatch(
                    f"{report.name}: expects {child_in} channels, got {c_prev}")
            if c_in is None:
                c_in = child_in
            if child_out is not None:
                c_prev = child_out
            reports.append(report)
        return _sum_children(node.get("name", "sequence"), reports, c_in, c_prev)
    if node_type in ("concat", "residual"):
        reports = []
        outs = []
        c_in = None
        for child in node.get("children", ()):
            report, child_in, child_out = _composite(child)
            reports.append(report)
            outs.append(child_out)
            if c_in is None:
                c_in = child_in
        if node_type == "concat":
            c_out = sum(o for o in outs if o is not None) or None
        else:
            distinct = {o for o in outs if o is not None}
            if len(distinct) > 1:
                raise ChannelMismatch(f"residual branches disagree on channels: {sorted(distinct)}")
            c_out = next(iter(distinct), None)
        return _sum_children(node.get("name", node_type), reports, c_in, c_out)
    raise ConfigInvalid(f"unknown block type {node_type!r}")


def format_report(report: CostReport, indent: int = 0) -> str:
    """Human table: name, params, FLOPs, recursively indented."""
    lines = [
        f"{'  ' * indent}{report.name:<24} {report.params:>12,d} params "
        f"{report.flops:>16,d} FLOPs"
    ]
    for child in report.children:
        lines.append(format_report(child, indent + 1))
    return "\n".join(lines)
