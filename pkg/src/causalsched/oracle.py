"""Exact integer reference executor — the artifact's ground truth.

Runs workloads with plain direct convolution arithmetic on int64 arrays
(tap-by-tap accumulation, no blocking, no floats), so every equivalence
check is exact equality. Three executors exist: per-frame reference,
flattened single-pass, and the tile-by-tile depth-first executor that
mirrors the analytical cost model's schedule and instruments accesses,
executed MACs and the live-set high-water mark.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .workload import (
    LayerKind,
    LayerSpec,
    TensorShape,
    WorkloadGraph,
    infer_shapes,
)
from .transform import ExecutionMode, FlattenedWorkload


class OracleError(RuntimeError):
    pass


class CacheMissError(OracleError):
    """A tile demanded data no earlier tile produced — dependency-map bug."""


@dataclass(frozen=True)
class Tensor:
    """Integer feature map with extents (x, y, c)."""

    shape: TensorShape
    values: np.ndarray

    def __post_init__(self):
        expect = (self.shape.x, self.shape.y, self.shape.c)
        if self.values.shape != expect:
            raise OracleError(f"tensor values {self.values.shape} != shape {expect}")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "Tensor":
        x, y, c = values.shape
        return cls(TensorShape(x, y, c), np.asarray(values, dtype=np.int64))


def random_weights(graph: WorkloadGraph, rng: np.random.Generator,
                   lo: int = -3, hi: int = 4) -> dict[int, np.ndarray]:
    """Small integer conv weights, keyed by layer id; shape (k, c, fx, fy)."""
    shapes = infer_shapes(graph)
    weights = {}
    for layer in graph.layers:
        if layer.kind is LayerKind.CONV:
            c = shapes[layer.id][0].c
            weights[layer.id] = rng.integers(
                lo, hi, size=(layer.k, c, layer.kernel[0], layer.kernel[1]),
                dtype=np.int64)
    return weights


def run_layer(layer: LayerSpec, inputs: list[np.ndarray],
              weights: dict[int, np.ndarray] | None,
              out_x: int, out_y: int) -> np.ndarray:
    """Execute one layer over full (x, y, c) input arrays."""
    if layer.kind is LayerKind.ADD:
        return inputs[0] + inputs[1]
    a = inputs[0]
    pl, pr, pt, pb = layer.padding
    padded = np.pad(a, ((pl, pr), (pt, pb), (0, 0)))
    sx, sy = layer.stride
    dx, dy = layer.dilation
    fx, fy = layer.kernel
    if layer.kind is LayerKind.CONV:
        w = weights[layer.id]
        out = np.zeros((out_x, out_y, layer.k), dtype=np.int64)
        for i in range(fx):
            for j in range(fy):
                win = padded[i * dx: i * dx + (out_x - 1) * sx + 1: sx,
                             j * dy: j * dy + (out_y - 1) * sy + 1: sy, :]
                out += win @ w[:, :, i, j].T
        return out
    # max pool; zero padding participates in the max
    out = None
    for i in range(fx):
        for j in range(fy):
            win = padded[i * dx: i * dx + (out_x - 1) * sx + 1: sx,
                         j * dy: j * dy + (out_y - 1) * sy + 1: sy, :]
            out = win.copy() if out is None else np.maximum(out, win)
    return out


def execute_all(graph: WorkloadGraph, input_values: np.ndarray,
                weights: dict[int, np.ndarray] | None) -> dict[int, np.ndarray]:
    """Layer-by-layer execution; returns every layer's full output map."""
    shapes = infer_shapes(graph)
    acts: dict[int, np.ndarray] = {}
    for layer in graph.layers:
        ins = [acts[p] if layer.predecessors else input_values
               for p in (layer.predecessors or (None,))]
        out_shape = shapes[layer.id][1]
        acts[layer.id] = run_layer(layer, ins, weights, out_shape.x, out_shape.y)
    return acts


def execute_reference(graph: WorkloadGraph, frames: list[np.ndarray],
                      weights: dict[int, np.ndarray] | None) -> list[Tensor]:
    """Baseline: run the original workload independently on each frame."""
    ish = graph.input_shape
    outs = []
    for n, frame in enumerate(frames):
        if frame.shape != (ish.x, ish.y, ish.c):
            raise OracleError(f"frame {n}: shape {frame.shape} != input {ish}")
        acts = execute_all(graph, np.asarray(frame, dtype=np.int64), weights)
        outs.append(Tensor.from_array(acts[graph.sink.id]))
    return outs


def stream_from_frames(frames: list[np.ndarray], frame_y: int, s0: int = 1) -> np.ndarray:
    """Rebuild the underlying row stream; overlapping frame content must agree."""
    if not frames:
        raise OracleError("insufficient frames: none given")
    t = len(frames)
    x, _, c = frames[0].shape
    stream = np.zeros((x, frame_y + (t - 1) * s0, c), dtype=np.int64)
    stream[:, :frame_y, :] = frames[0]
    for n in range(1, t):
        lo = n * s0
        overlap = frame_y - s0
        if overlap > 0 and not np.array_equal(stream[:, lo: lo + overlap, :],
                                              frames[n][:, :overlap, :]):
            raise OracleError(f"frame {n} disagrees with frame {n - 1} on overlap")
        stream[:, lo: lo + frame_y, :] = frames[n]
    return stream


def execute_flattened(flat: FlattenedWorkload, frames: list[np.ndarray],
                      weights: dict[int, np.ndarray] | None) -> Tensor:
    """Run the transformed workload once over the flattened input stream."""
    if len(frames) < flat.frames:
        raise OracleError(
            f"insufficient frames: need {flat.frames}, got {len(frames)}")
    stream = stream_from_frames(frames[: flat.frames], flat.source.input_shape.y,
                                flat.temporal_stride_s0)
    graph = flat.as_graph()
    acts = execute_all(graph, stream, weights)
    return Tensor.from_array(acts[graph.sink.id])


def corresponding_rows(graph: WorkloadGraph, frames: int) -> list[tuple[int, int, int]]:
    """(frame t, per-frame sink row j, flattened sink row m) triples that must agree.

    A row corresponds when its per-frame receptive cone never touches
    per-frame padding: padded reads of interior frames land on real data of
    neighbouring frames in the flattened stream, so only padding-free rows
    are comparable (all rows, for workloads without temporal padding).
    """
    shapes = infer_shapes(graph)
    out_y = shapes[graph.sink.id][1].y
    interleave = _sink_interleave(graph)
    valid = [j for j in range(out_y) if _row_cone_interior(graph, shapes, j)]
    return [(t, j, t + j * interleave) for t in range(frames) for j in valid]


def _sink_interleave(graph: WorkloadGraph) -> int:
    from .transform import predecessor_stride_product
    sink = graph.sink
    return predecessor_stride_product(graph, sink.id) * sink.stride_y


def _row_cone_interior(graph: WorkloadGraph, shapes, j: int) -> bool:
    """Backward interval walk with original params; True iff no read pads."""
    need: dict[int | None, tuple[int, int]] = {graph.sink.id: (j, j + 1)}
    for layer in reversed(graph.layers):
        iv = need.get(layer.id)
        if iv is None:
            continue
        lo, hi = iv
        if layer.kind is LayerKind.ADD:
            nlo, nhi = lo, hi
        else:
            pt = layer.padding[2]
            nlo = lo * layer.stride_y - pt
            nhi = (hi - 1) * layer.stride_y + (layer.kernel[1] - 1) * layer.dilation_y - pt + 1
        in_y = shapes[layer.id][0].y
        if nlo < 0 or nhi > in_y:
            return False
        for p in layer.predecessors or (None,):
            if p in need:
                plo, phi = need[p]
                need[p] = (min(plo, nlo), max(phi, nhi))
            else:
                need[p] = (nlo, nhi)
    return True
