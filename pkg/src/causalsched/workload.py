"""CNN workload intermediate representation.

A workload is a DAG of sliding-window layers (conv / max-pool / elementwise
add) over feature maps with one spatial axis (x), one temporal axis (y) and a
channel axis (c). Everything downstream (transformation, cost modelling,
the reference executor) consumes this representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping


class WorkloadError(ValueError):
    """Raised for malformed workload documents or graphs."""


class LayerKind(str, Enum):
    CONV = "conv"
    POOL = "pool"
    ADD = "add"


@dataclass(frozen=True)
class TensorShape:
    """Feature-map extents: x spatial, y temporal, c channels."""

    x: int
    y: int
    c: int

    @property
    def cells(self) -> int:
        return self.x * self.y * self.c

    def bytes(self, bits_per_word: int) -> int:
        return self.cells * word_bytes(bits_per_word)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "c": self.c}


def word_bytes(bits: int) -> int:
    return (bits + 7) // 8


@dataclass(frozen=True)
class LayerSpec:
    """One sliding-window layer.

    kernel/stride/dilation are (x, y) pairs; padding is (left, right, top,
    bottom) where top/bottom pad the temporal axis. ``k`` is the output
    channel count and only meaningful for conv layers (pool and add preserve
    channels). ``predecessors`` lists producing layer ids; an empty list
    means the layer reads the graph input.
    """

    id: int
    kind: LayerKind
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)
    k: int | None = None
    predecessors: tuple[int, ...] = ()

    @property
    def stride_y(self) -> int:
        return self.stride[1]

    @property
    def dilation_y(self) -> int:
        return self.dilation[1]

    def out_channels(self, in_channels: int) -> int:
        if self.kind is LayerKind.CONV:
            assert self.k is not None
            return self.k
        return in_channels

    def weight_words(self, in_channels: int) -> int:
        if self.kind is LayerKind.CONV:
            assert self.k is not None
            return self.kernel[0] * self.kernel[1] * in_channels * self.k
        return 0


@dataclass(frozen=True)
class WorkloadGraph:
    input_shape: TensorShape
    layers: tuple[LayerSpec, ...]
    weight_bits: int = 8
    activation_bits: int = 8
    _index: Mapping[int, int] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {layer.id: i for i, layer in enumerate(self.layers)}
        )

    def layer(self, layer_id: int) -> LayerSpec:
        return self.layers[self._index[layer_id]]

    def position(self, layer_id: int) -> int:
        return self._index[layer_id]

    def consumers(self, layer_id: int) -> list[int]:
        return [l.id for l in self.layers if layer_id in l.predecessors]

    @property
    def sink(self) -> LayerSpec:
        consumed = {p for l in self.layers for p in l.predecessors}
        sinks = [l for l in self.layers if l.id not in consumed]
        if len(sinks) != 1:
            raise WorkloadError(f"graph must have exactly one sink, found {len(sinks)}")
        return sinks[0]


def out_extent(in_extent: int, kernel: int, stride: int, dilation: int,
               pad_lo: int, pad_hi: int) -> int:
    """Sliding-window output extent along one axis."""
    span = dilation * (kernel - 1) + 1
    return (in_extent + pad_lo + pad_hi - span) // stride + 1


def infer_shapes(graph: WorkloadGraph) -> dict[int, tuple[TensorShape, TensorShape]]:
    """Per-layer (input shape, output shape), raising on non-positive extents."""
    shapes: dict[int, tuple[TensorShape, TensorShape]] = {}
    produced: dict[int, TensorShape] = {}
    for layer in graph.layers:
        ins = _input_shapes(graph, layer, produced)
        in_shape = ins[0]
        if layer.kind is LayerKind.ADD:
            if len(ins) != 2 or ins[0] != ins[1]:
                raise WorkloadError(
                    f"layer {layer.id}: add inputs differ ({ins})"
                )
            out = in_shape
        else:
            pl, pr, pt, pb = layer.padding
            ox = out_extent(in_shape.x, layer.kernel[0], layer.stride[0],
                            layer.dilation[0], pl, pr)
            oy = out_extent(in_shape.y, layer.kernel[1], layer.stride[1],
                            layer.dilation[1], pt, pb)
            if ox < 1 or oy < 1:
                raise WorkloadError(
                    f"layer {layer.id}: non-positive output extent ({ox}x{oy})"
                )
            out = TensorShape(ox, oy, layer.out_channels(in_shape.c))
        shapes[layer.id] = (in_shape, out)
        produced[layer.id] = out
    return shapes


def _input_shapes(graph: WorkloadGraph, layer: LayerSpec,
                  produced: Mapping[int, TensorShape]) -> list[TensorShape]:
    if not layer.predecessors:
        return [graph.input_shape]
    return [produced[p] for p in layer.predecessors]


def mac_count(graph: WorkloadGraph,
              output_region: Mapping[int, TensorShape] | None = None) -> int:
    """Total conv MACs for the given per-layer output regions (default: full maps).

    Pool and add layers contribute zero MACs; their element operations are
    tracked separately by the cost model.
    """
    shapes = infer_shapes(graph)
    total = 0
    for layer in graph.layers:
        if layer.kind is not LayerKind.CONV:
            continue
        in_shape, out_shape = shapes[layer.id]
        region = output_region[layer.id] if output_region else out_shape
        total += (region.x * region.y * layer.k * in_shape.c
                  * layer.kernel[0] * layer.kernel[1])
    return total


def op_count(graph: WorkloadGraph,
             output_region: Mapping[int, TensorShape] | None = None) -> int:
    """Non-MAC element operations: pool window compares plus add sums."""
    shapes = infer_shapes(graph)
    total = 0
    for layer in graph.layers:
        if layer.kind is LayerKind.CONV:
            continue
        region = output_region[layer.id] if output_region else shapes[layer.id][1]
        per_cell = layer.kernel[0] * layer.kernel[1] if layer.kind is LayerKind.POOL else 1
        total += region.cells * per_cell
    return total


def validate_graph(graph: WorkloadGraph) -> list[str]:
    """Diagnostics for every violated invariant; empty list iff the graph is valid."""
    diags: list[str] = []
    if not graph.layers:
        return ["graph has no layers"]
    if graph.input_shape.x < 1 or graph.input_shape.y < 1 or graph.input_shape.c < 1:
        diags.append("input_shape: all extents must be >= 1")

    seen: set[int] = set()
    for layer in graph.layers:
        where = f"layer {layer.id}"
        if layer.id in seen:
            diags.append(f"{where}: duplicate id")
        for p in layer.predecessors:
            if p not in seen:
                diags.append(f"{where}: predecessor {p} does not precede it")
        seen.add(layer.id)

        if min(layer.kernel) < 1:
            diags.append(f"{where}: kernel extents must be >= 1")
        if min(layer.stride) < 1:
            diags.append(f"{where}: strides must be >= 1")
        if min(layer.dilation) < 1:
            diags.append(f"{where}: dilations must be >= 1")
        if min(layer.padding) < 0:
            diags.append(f"{where}: padding must be >= 0")

        if layer.kind is LayerKind.CONV:
            if layer.k is None or layer.k < 1:
                diags.append(f"{where}: conv needs out_channels k >= 1")
            if len(layer.predecessors) > 1:
                diags.append(f"{where}: conv takes one predecessor")
        elif layer.kind is LayerKind.POOL:
            if layer.k is not None:
                diags.append(f"{where}: pool must not set k")
            if len(layer.predecessors) > 1:
                diags.append(f"{where}: pool takes one predecessor")
        elif layer.kind is LayerKind.ADD:
            if len(layer.predecessors) != 2:
                diags.append(f"{where}: add takes exactly two predecessors")
            if layer.kernel != (1, 1) or layer.stride != (1, 1) or \
                    layer.dilation != (1, 1) or layer.padding != (0, 0, 0, 0):
                diags.append(f"{where}: add must use 1x1 kernel, unit stride/dilation, no padding")

    if diags:
        return diags

    consumed = {p for l in graph.layers for p in l.predecessors}
    sinks = [l.id for l in graph.layers if l.id not in consumed]
    if len(sinks) != 1:
        diags.append(f"graph must have exactly one sink, found {len(sinks)}")

    try:
        shapes = infer_shapes(graph)
    except WorkloadError as e:
        diags.append(str(e))
        return diags

    for layer in graph.layers:
        if layer.kind is LayerKind.ADD:
            a, b = layer.predecessors
            if shapes[a][1] != shapes[b][1]:
                diags.append(f"layer {layer.id}: add predecessor shapes differ")
    return diags


_TOP_KEYS = {"input_shape", "bit_width", "layers"}
_LAYER_KEYS = {"id", "kind", "k", "kernel", "stride", "dilation", "padding", "predecessors"}
_UNSUPPORTED_KINDS = {"dense", "fc", "fully_connected", "linear", "matmul"}


def parse_workload(text: str | bytes | dict) -> WorkloadGraph:
    """Parse and validate a workload document (JSON text or an already-loaded dict)."""
    doc = json.loads(text) if not isinstance(text, dict) else text
    if not isinstance(doc, dict):
        raise WorkloadError("workload document must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise WorkloadError(f"unknown workload keys: {sorted(unknown)}")
    try:
        ish = doc["input_shape"]
        input_shape = TensorShape(int(ish["x"]), int(ish["y"]), int(ish["c"]))
    except (KeyError, TypeError) as e:
        raise WorkloadError(f"bad input_shape: {e}") from None

    bits = doc.get("bit_width", {})
    if set(bits) - {"weight", "activation"}:
        raise WorkloadError("bit_width accepts only 'weight' and 'activation'")
    weight_bits = int(bits.get("weight", 8))
    activation_bits = int(bits.get("activation", 8))

    raw_layers = doc.get("layers")
    if not raw_layers:
        raise WorkloadError("graph has no layers")

    layers: list[LayerSpec] = []
    prev_id: int | None = None
    for pos, raw in enumerate(raw_layers):
        unknown = set(raw) - _LAYER_KEYS
        if unknown:
            raise WorkloadError(f"layer #{pos}: unknown keys {sorted(unknown)}")
        kind_name = str(raw.get("kind", "")).lower()
        if kind_name in _UNSUPPORTED_KINDS:
            raise WorkloadError(f"layer #{pos}: unsupported kernel kind '{kind_name}'")
        try:
            kind = LayerKind(kind_name)
        except ValueError:
            raise WorkloadError(f"layer #{pos}: unknown layer kind '{kind_name}'") from None

        if "predecessors" in raw:
            preds = tuple(int(p) for p in raw["predecessors"])
        else:
            # Default: chain onto the previous layer (graph input for the first).
            preds = (prev_id,) if prev_id is not None else ()

        layer = LayerSpec(
            id=int(raw["id"]),
            kind=kind,
            kernel=_pair(raw.get("kernel", [1, 1]), "kernel", pos),
            stride=_pair(raw.get("stride", [1, 1]), "stride", pos),
            dilation=_pair(raw.get("dilation", [1, 1]), "dilation", pos),
            padding=_quad(raw.get("padding", [0, 0, 0, 0]), pos),
            k=int(raw["k"]) if raw.get("k") is not None else None,
            predecessors=preds,
        )
        layers.append(layer)
        prev_id = layer.id

    graph = WorkloadGraph(input_shape, tuple(layers), weight_bits, activation_bits)
    diags = validate_graph(graph)
    if diags:
        raise WorkloadError("; ".join(diags))
    return graph


def _pair(v, name: str, pos: int) -> tuple[int, int]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise WorkloadError(f"layer #{pos}: {name} must be [x, y]")
    return int(v[0]), int(v[1])


def _quad(v, pos: int) -> tuple[int, int, int, int]:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise WorkloadError(f"layer #{pos}: padding must be [l, r, t, b]")
    return int(v[0]), int(v[1]), int(v[2]), int(v[3])


def workload_to_dict(graph: WorkloadGraph,
                     annotations: Mapping[int, dict] | None = None) -> dict:
    """Serialize to the document schema; optional per-layer extra annotation keys."""
    layers = []
    for layer in graph.layers:
        entry: dict = {
            "id": layer.id,
            "kind": layer.kind.value,
            "kernel": list(layer.kernel),
            "stride": list(layer.stride),
            "dilation": list(layer.dilation),
            "padding": list(layer.padding),
            "predecessors": list(layer.predecessors),
        }
        if layer.k is not None:
            entry["k"] = layer.k
        if annotations and layer.id in annotations:
            entry.update(annotations[layer.id])
        layers.append(entry)
    return {
        "input_shape": graph.input_shape.to_dict(),
        "bit_width": {"weight": graph.weight_bits, "activation": graph.activation_bits},
        "layers": layers,
    }


def chain(input_shape: TensorShape, specs: Iterable[dict], **graph_kw) -> WorkloadGraph:
    """Convenience builder for linear chains; specs are LayerSpec kwargs minus id/predecessors."""
    layers = []
    for i, spec in enumerate(specs):
        preds = () if i == 0 else (i - 1,)
        layers.append(LayerSpec(id=i, predecessors=preds, **spec))
    return WorkloadGraph(input_shape, tuple(layers), **graph_kw)
