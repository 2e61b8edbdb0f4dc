"""Temporal flattening of spatio-temporal CNN workloads.

Consecutive input frames of an ST-CNN overlap; flattening rewrites the
workload so it runs once over the shared row stream instead of once per
frame. Temporal strides become 1 and dilations grow by the product of
upstream strides, with per-layer interleave factors tracking how many
original frames are woven into each flattened feature map. Three execution
geometries are supported: the untransformed per-frame baseline, a one-row
real-time update, and a batched pass over the whole flattened sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .workload import (
    LayerKind,
    LayerSpec,
    TensorShape,
    WorkloadGraph,
    infer_shapes,
    validate_graph,
)


class TransformError(ValueError):
    """Raised when a workload cannot be flattened consistently."""


class ExecutionMode(str, Enum):
    BASELINE = "baseline"
    REALTIME = "realtime"
    BATCH = "batch"


def stride_to_dilation(s0: int, s_k: int, d_k: int, i_in: int) -> tuple[int, int, int]:
    """Rewrite one layer's temporal stride against input rate ``s0``.

    Returns (new_stride, new_dilation, interleave_out). The division of the
    input interleave by the new stride must be exact; with s0 == 1 it always
    is, for general s0 a non-integral result is reported as an error rather
    than silently rounded.
    """
    if s0 < 1 or s_k < 1 or d_k < 1 or i_in < 1:
        raise TransformError("strides, dilations and interleaves must be >= 1")
    s_new = math.gcd(s0, s_k)
    if i_in % s_new:
        raise TransformError(
            f"interleave {i_in} not divisible by new stride {s_new} "
            f"(s0={s0}, s_k={s_k}); no consistent flattening exists"
        )
    ratio = i_in // s_new
    return s_new, ratio * d_k, ratio * s_k


@dataclass(frozen=True)
class FlattenedLayer:
    base: LayerSpec
    new_stride_y: int
    new_dilation_y: int
    new_pad_y: tuple[int, int]
    interleave_in: int
    interleave_out: int

    @property
    def spec(self) -> LayerSpec:
        """The layer as it executes on the flattened map."""
        pl, pr, _, _ = self.base.padding
        return LayerSpec(
            id=self.base.id,
            kind=self.base.kind,
            kernel=self.base.kernel,
            stride=(self.base.stride[0], self.new_stride_y),
            dilation=(self.base.dilation[0], self.new_dilation_y),
            padding=(pl, pr, self.new_pad_y[0], self.new_pad_y[1]),
            k=self.base.k,
            predecessors=self.base.predecessors,
        )


@dataclass(frozen=True)
class FlattenedWorkload:
    source: WorkloadGraph
    layers: tuple[FlattenedLayer, ...]
    mode: ExecutionMode
    flattened_input_shape: TensorShape
    temporal_stride_s0: int
    frames: int

    def as_graph(self) -> WorkloadGraph:
        """The flattened workload as an ordinary graph over the flattened input."""
        return WorkloadGraph(
            self.flattened_input_shape,
            tuple(fl.spec for fl in self.layers),
            self.source.weight_bits,
            self.source.activation_bits,
        )

    @property
    def stride_product(self) -> int:
        return prod_temporal_strides(self.source)


def prod_temporal_strides(graph: WorkloadGraph) -> int:
    return math.prod(l.stride_y for l in graph.layers)


def predecessor_stride_product(graph: WorkloadGraph, layer_id: int) -> int:
    """Product of original temporal strides over all transitive predecessors."""
    ancestors: set[int] = set()
    stack = list(graph.layer(layer_id).predecessors)
    while stack:
        p = stack.pop()
        if p not in ancestors:
            ancestors.add(p)
            stack.extend(graph.layer(p).predecessors)
    return math.prod(graph.layer(a).stride_y for a in ancestors)


def flatten(graph: WorkloadGraph, mode: ExecutionMode,
            frames: int | None = None) -> FlattenedWorkload:
    """Temporally flatten ``graph`` for the requested execution mode.

    ``frames`` is the number of original frames the flattened input spans.
    It defaults to the stride product for batch mode (one batch frame covers
    that many originals) and to the minimal history covering the receptive
    field for real-time mode. Baseline mode keeps the workload untouched.
    """
    diags = validate_graph(graph)
    if diags:
        raise TransformError("; ".join(diags))

    if mode is ExecutionMode.BASELINE:
        layers = tuple(
            FlattenedLayer(l, l.stride_y, l.dilation_y,
                           (l.padding[2], l.padding[3]), 1, 1)
            for l in graph.layers
        )
        return FlattenedWorkload(graph, layers, mode, graph.input_shape, 1, 1)

    s0 = 1
    interleave: dict[int, int] = {}
    layers = []
    for layer in graph.layers:
        if layer.predecessors:
            ins = {interleave[p] for p in layer.predecessors}
            if len(ins) != 1:
                raise TransformError(
                    f"layer {layer.id}: predecessor interleaves differ "
                    f"({sorted(interleave[p] for p in layer.predecessors)})"
                )
            i_in = ins.pop()
        else:
            i_in = 1
        s_new, d_new, i_out = stride_to_dilation(s0, layer.stride_y,
                                                 layer.dilation_y, i_in)
        assert s_new == 1
        pt, pb = layer.padding[2], layer.padding[3]
        layers.append(FlattenedLayer(layer, s_new, d_new,
                                     (pt * i_in, pb * i_in), i_in, i_out))
        interleave[layer.id] = i_out

    if frames is None:
        if mode is ExecutionMode.BATCH:
            frames = prod_temporal_strides(graph)
        else:
            frames = _min_realtime_frames(graph, layers)
    if frames < 1:
        raise TransformError("frames must be >= 1")

    in_shape = graph.input_shape
    flat_shape = TensorShape(in_shape.x, in_shape.y + (frames - 1) * s0, in_shape.c)
    flat = FlattenedWorkload(graph, tuple(layers), mode, flat_shape, s0, frames)
    infer_shapes(flat.as_graph())  # raises if the history is too short
    return flat


def _min_realtime_frames(graph: WorkloadGraph, layers: list[FlattenedLayer]) -> int:
    """Smallest frame history whose flattened maps cover one sink output row."""
    need = _backward_row_need(graph, layers, 1)
    return max(1, need - graph.input_shape.y + 1)


def _backward_row_need(graph: WorkloadGraph, layers: list[FlattenedLayer],
                       new_rows: int) -> int:
    """Flattened input rows required for ``new_rows`` sink rows (pads included)."""
    need: dict[int | None, int] = {graph.sink.id: new_rows}
    for fl in reversed(layers):
        r = need.get(fl.base.id, 0)
        if r <= 0:
            continue
        span = (r - 1) * fl.new_stride_y + (fl.base.kernel[1] - 1) * fl.new_dilation_y + 1
        span = max(0, span - fl.new_pad_y[0] - fl.new_pad_y[1])
        for p in fl.base.predecessors or (None,):
            need[p] = max(need.get(p, 0), span)
    return need.get(None, 0)


def flattened_input_window(flat: FlattenedWorkload, new_rows: int) -> int:
    """Temporal receptive-field extent of ``new_rows`` sink rows at the flattened input.

    Pure dependency span through the flattened strides/dilations; padding is
    not subtracted (it asks how many rows the window covers, not how many
    exist).
    """
    if new_rows <= 0:
        return 0
    need: dict[int | None, int] = {flat.source.sink.id: new_rows}
    for fl in reversed(flat.layers):
        r = need.get(fl.base.id, 0)
        if r <= 0:
            continue
        span = (r - 1) * fl.new_stride_y + (fl.base.kernel[1] - 1) * fl.new_dilation_y + 1
        targets = fl.base.predecessors or (None,)
        for p in targets:
            need[p] = max(need.get(p, 0), span)
    return need.get(None, 0)


@dataclass(frozen=True)
class ModeGeometry:
    spatial_out: int
    temporal_out: int
    frames_per_invocation: int


def mode_geometry(graph: WorkloadGraph, mode: ExecutionMode) -> ModeGeometry:
    """Sink output geometry per execution mode.

    Baseline runs one original frame (a stride-product of them makes up one
    batch equivalent); real-time emits one flattened row; batch emits the
    whole flattened sequence in one invocation.
    """
    shapes = infer_shapes(graph)
    out = shapes[graph.sink.id][1]
    s_prod = prod_temporal_strides(graph)
    if mode is ExecutionMode.BASELINE:
        return ModeGeometry(out.x, out.y, s_prod)
    if mode is ExecutionMode.REALTIME:
        return ModeGeometry(out.x, 1, 1)
    return ModeGeometry(out.x, out.y * s_prod, 1)
