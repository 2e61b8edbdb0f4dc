"""Analytical cost model for depth-first execution of fused layer sub-stacks.

A sub-stack is a contiguous span of (flattened) layers executed tile by tile
in row-major order over the exit feature map. For every tile the model
propagates the output rectangle backward through the stack (per-axis stride /
dilation / padding arithmetic), splits each layer's demand into fresh work
and rows cached by earlier tiles, and derives per-memory-level word traffic,
compute cycles, the live-set high-water mark (peak I+O+Cache) and energy.

Conventions (mirrored exactly by the instrumented oracle executor):

* Required regions are per-axis tap hulls; the final tile along an axis also
  claims any trailing producer cells, so a full pass over the exit map
  computes every layer's full map and tiled totals equal layer-by-layer
  totals.
* Every consumed word is read once per consuming layer step, at the level
  where it resides: LB_O if produced earlier in the same tile, LB_I for
  entry data staged this tile, GB for rows cached by earlier tiles (or
  pre-filled history in real-time mode).
* Produced words are written to LB_O once, plus once to GB when a later tile
  still needs them. Entry words are staged source->LB_I when first demanded,
  plus GB when retained. Exit words leave through the configured sink.
* A cell is live from its first demand (production, fetch, or pre-filled
  history at invocation start) until the last layer step that demands it;
  exit cells live only during their producing step. Peak I+O+Cache is the
  byte high-water mark of that live set over all (tile, layer step) points.
* Per layer step, latency is max(compute cycles, bottleneck-level movement
  cycles); steps sum within a tile and tiles sum across the schedule, which
  makes the full-output single tile degenerate exactly to the dedicated
  layer-by-layer evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .hardware import AcceleratorSpec, MemoryLevel, PEArray, utilization
from .transform import ExecutionMode, FlattenedWorkload
from .workload import LayerKind, LayerSpec, TensorShape, infer_shapes, word_bytes


class CostModelError(ValueError):
    pass


class OnChipOverflow(CostModelError):
    """A tile's live set exceeds all on-chip capacity — the DSE early-stop signal."""


@dataclass(frozen=True)
class TileConfig:
    tx: int
    ty: int


class TilePhase(str, Enum):
    WARM_UP = "warmup"
    STABLE = "stable"


@dataclass(frozen=True)
class Rect:
    """Half-open cell rectangle [x0,x1) x [y0,y1)."""

    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def width(self) -> int:
        return max(0, self.x1 - self.x0)

    @property
    def height(self) -> int:
        return max(0, self.y1 - self.y0)

    @property
    def plane(self) -> int:
        return self.width * self.height

    @property
    def empty(self) -> bool:
        return self.plane == 0


@dataclass(frozen=True)
class TilePlacement:
    index: int
    gy: int
    gx: int
    region: Rect
    phase: TilePhase


@dataclass
class DependencyEntry:
    tensor: int  # 0 = entry, i = output of stack layer i
    required: Rect
    fresh: Rect
    cached_plane: int  # required cells already produced by earlier tiles


DependencyMap = dict[int, DependencyEntry]


class SubStack:
    """Contiguous span of flattened layers scheduled depth-first as a unit.

    Stack-local tensors are numbered 0 (entry) .. L (exit); tensor i is the
    output of stack layer i (1-based step index).
    """

    def __init__(self, flat: FlattenedWorkload, first: int, last: int):
        n = len(flat.layers)
        if not (0 <= first <= last < n):
            raise CostModelError(f"invalid layer span [{first}, {last}]")
        self.flat = flat
        self.first = first
        self.last = last
        graph = flat.as_graph()
        shapes = infer_shapes(graph)
        self.layers: list[LayerSpec] = [
            flat.layers[p].spec for p in range(first, last + 1)
        ]
        self.depth = len(self.layers)

        # Entry tensor: output of the layer just before the span (graph input
        # for the first span). Predecessors outside that are invalid cuts.
        entry_id = None if first == 0 else flat.layers[first - 1].base.id
        if first == 0:
            self.entry_shape = flat.flattened_input_shape
        else:
            self.entry_shape = shapes[entry_id][1]
        self.shapes: list[TensorShape] = [self.entry_shape] + [
            shapes[l.id][1] for l in self.layers
        ]
        self.exit_shape = self.shapes[-1]

        id_to_tensor = {entry_id: 0}
        for i, l in enumerate(self.layers, start=1):
            id_to_tensor[l.id] = i
        self.preds: list[tuple[int, ...]] = []
        for i, l in enumerate(self.layers, start=1):
            sources = l.predecessors or (entry_id,)
            mapped = []
            for p in sources:
                if p not in id_to_tensor or id_to_tensor[p] >= i:
                    raise CostModelError(
                        f"layer {l.id}: predecessor {p} crosses the sub-stack cut")
                mapped.append(id_to_tensor[p])
            self.preds.append(tuple(mapped))

        self.consumers: list[list[int]] = [[] for _ in range(self.depth + 1)]
        for i, sources in enumerate(self.preds, start=1):
            for t in sources:
                self.consumers[t].append(i)

        self.weight_words = sum(
            l.weight_words(self.shapes[self.preds[i - 1][0]].c)
            for i, l in enumerate(self.layers, start=1)
        )

    def exit_region(self, mode: ExecutionMode) -> Rect:
        ex = self.exit_shape
        if mode is ExecutionMode.REALTIME:
            return Rect(0, ex.x, ex.y - 1, ex.y)
        return Rect(0, ex.x, 0, ex.y)


def _axis_params(layer: LayerSpec, axis: int) -> tuple[int, int, int, int]:
    """(kernel, stride, dilation, pad_lo) along the axis (0 = x, 1 = y)."""
    pad_lo = layer.padding[0] if axis == 0 else layer.padding[2]
    return layer.kernel[axis], layer.stride[axis], layer.dilation[axis], pad_lo


def _window(lo, hi, k: int, s: int, d: int, pad_lo: int,
            in_ext: int, out_ext: int, extend_end: bool):
    """Input interval demanded by output interval [lo, hi); vectorized."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    nonempty = hi > lo
    wlo = np.clip(lo * s - pad_lo, 0, in_ext)
    whi = np.clip((hi - 1) * s + (k - 1) * d - pad_lo + 1, 0, in_ext)
    if extend_end:
        whi = np.where(nonempty & (hi >= out_ext), in_ext, whi)
    wlo = np.where(nonempty, wlo, 0)
    whi = np.where(nonempty, np.maximum(whi, wlo), 0)
    return wlo, whi


@dataclass
class _AxisTable:
    """Per-tensor, per-axis demand geometry over the tile grid."""

    req_lo: np.ndarray  # (n_grid,)
    req_hi: np.ndarray
    fresh_lo: np.ndarray
    fresh_hi: np.ndarray
    first_g: np.ndarray  # per cell; -1 when never demanded
    last_g: np.ndarray
    prefilled: np.ndarray  # bool per cell (real-time history)

    @property
    def fresh_len(self) -> np.ndarray:
        return self.fresh_hi - self.fresh_lo

    @property
    def n_cells(self) -> int:
        return int(np.count_nonzero(self.first_g >= 0))


def _build_axis_table(req_lo: np.ndarray, req_hi: np.ndarray, extent: int,
                      horizon: int | None) -> _AxisTable:
    n = len(req_lo)
    first = np.full(extent, -1, dtype=np.int64)
    last = np.full(extent, -1, dtype=np.int64)
    for g in range(n - 1, -1, -1):
        first[req_lo[g]:req_hi[g]] = g
    for g in range(n):
        last[req_lo[g]:req_hi[g]] = g
    prefilled = np.zeros(extent, dtype=bool)
    if horizon is not None:
        prefilled[:horizon] = first[:horizon] >= 0
    fresh_lo = np.empty(n, dtype=np.int64)
    fresh_hi = np.empty(n, dtype=np.int64)
    prev_hi = horizon if horizon is not None else 0
    running = prev_hi
    for g in range(n):
        lo = max(int(req_lo[g]), running)
        hi = max(int(req_hi[g]), lo)
        fresh_lo[g] = lo
        fresh_hi[g] = hi
        running = max(running, hi)
    return _AxisTable(req_lo, req_hi, fresh_lo, fresh_hi, first, last, prefilled)


class TilePlan:
    """Complete tiling geometry of one sub-stack under one tile configuration."""

    def __init__(self, stack: SubStack, tile: TileConfig, mode: ExecutionMode):
        region = stack.exit_region(mode)
        if not (1 <= tile.tx <= region.width and 1 <= tile.ty <= region.height):
            raise CostModelError(
                f"tile {tile.tx}x{tile.ty} outside exit region "
                f"{region.width}x{region.height}")
        self.stack = stack
        self.tile = tile
        self.mode = mode
        self.region = region
        self.nx = -(-region.width // tile.tx)
        self.ny = -(-region.height // tile.ty)

        exit_x_lo = np.array([region.x0 + g * tile.tx for g in range(self.nx)],
                             dtype=np.int64)
        exit_x_hi = np.minimum(exit_x_lo + tile.tx, region.x1)
        exit_y_lo = np.array([region.y0 + g * tile.ty for g in range(self.ny)],
                             dtype=np.int64)
        exit_y_hi = np.minimum(exit_y_lo + tile.ty, region.y1)

        realtime = mode is ExecutionMode.REALTIME
        depth = stack.depth
        # Backward demand propagation: (lo, hi) per grid position, per tensor.
        req = [[None, None] for _ in range(depth + 1)]
        req[depth] = [
            [exit_x_lo.copy(), exit_x_hi.copy()],
            [exit_y_lo.copy(), exit_y_hi.copy()],
        ]
        for i in range(depth, 0, -1):
            out_t = i
            for axis in (0, 1):
                k, s, d, pad_lo = _axis_params(stack.layers[i - 1], axis)
                out_ext = _axis_extent(stack.shapes[out_t], axis)
                lo, hi = req[out_t][axis]
                for p in stack.preds[i - 1]:
                    in_ext = _axis_extent(stack.shapes[p], axis)
                    wlo, whi = _window(lo, hi, k, s, d, pad_lo,
                                       in_ext, out_ext, extend_end=True)
                    if req[p][axis] is None:
                        req[p][axis] = [wlo.copy(), whi.copy()]
                    else:
                        plo, phi = req[p][axis]
                        np.minimum(plo, wlo, out=plo)
                        np.maximum(phi, whi, out=phi)

        self.tables: list[list[_AxisTable]] = []
        for t in range(depth + 1):
            per_axis = []
            for axis in (0, 1):
                extent = _axis_extent(stack.shapes[t], axis)
                lo, hi = req[t][axis]
                horizon = None
                if realtime and axis == 1:
                    horizon = extent - 1
                per_axis.append(_build_axis_table(lo, hi, extent, horizon))
            self.tables.append(per_axis)

        # Liveness step anchors: tensor birth/death steps inside a tile.
        self.birth_step = [0] * (depth + 1)
        self.death_step = [0] * (depth + 1)
        for t in range(depth + 1):
            cons = stack.consumers[t]
            self.birth_step[t] = min(cons) if t == 0 else t
            self.death_step[t] = max(cons) if cons else t

    def placements(self) -> list[TilePlacement]:
        out = []
        idx = 0
        for gy in range(self.ny):
            for gx in range(self.nx):
                phase = (TilePhase.STABLE
                         if self.mode is ExecutionMode.REALTIME or gy > 0
                         else TilePhase.WARM_UP)
                out.append(TilePlacement(idx, gy, gx, self.tile_rect(gy, gx), phase))
                idx += 1
        return out

    def tile_rect(self, gy: int, gx: int) -> Rect:
        ex = self.tables[self.stack.depth]
        return Rect(int(ex[0].req_lo[gx]), int(ex[0].req_hi[gx]),
                    int(ex[1].req_lo[gy]), int(ex[1].req_hi[gy]))

    def required_rect(self, tensor: int, gy: int, gx: int) -> Rect:
        tx, ty = self.tables[tensor]
        return Rect(int(tx.req_lo[gx]), int(tx.req_hi[gx]),
                    int(ty.req_lo[gy]), int(ty.req_hi[gy]))

    def fresh_rect(self, tensor: int, gy: int, gx: int) -> Rect:
        tx, ty = self.tables[tensor]
        return Rect(int(tx.fresh_lo[gx]), int(tx.fresh_hi[gx]),
                    int(ty.fresh_lo[gy]), int(ty.fresh_hi[gy]))

    def read_windows(self, step: int, gy: int, gx: int) -> list[tuple[int, Rect]]:
        """(pred tensor, input rect) pairs layer ``step`` reads for its fresh cells."""
        fresh = self.fresh_rect(step, gy, gx)
        if fresh.empty:
            return []
        out = []
        layer = self.stack.layers[step - 1]
        out_shape = self.stack.shapes[step]
        for p in self.stack.preds[step - 1]:
            in_shape = self.stack.shapes[p]
            kx, sx, dx, plx = _axis_params(layer, 0)
            ky, sy, dy, ply = _axis_params(layer, 1)
            x0, x1 = _window(fresh.x0, fresh.x1, kx, sx, dx, plx,
                             in_shape.x, out_shape.x, extend_end=False)
            y0, y1 = _window(fresh.y0, fresh.y1, ky, sy, dy, ply,
                             in_shape.y, out_shape.y, extend_end=False)
            out.append((p, Rect(int(x0), int(x1), int(y0), int(y1))))
        return out


def _axis_extent(shape: TensorShape, axis: int) -> int:
    return shape.x if axis == 0 else shape.y


def schedule_tiles(stack: SubStack, tile: TileConfig,
                   mode: ExecutionMode) -> list[TilePlacement]:
    """Row-major tile order with warm-up/stable phase labels."""
    return TilePlan(stack, tile, mode).placements()


def backprop_dependency(stack: SubStack, tile: Rect,
                        mode: ExecutionMode = ExecutionMode.BATCH,
                        history: list[Rect] | None = None) -> DependencyMap:
    """Per-tensor demand of one output tile, split into fresh vs cached parts.

    ``history`` lists output tiles already executed, in row-major-consistent
    order; their demand counts as cached. Cached cells never recompute.
    """
    regions = (history or []) + [tile]
    exit_x_lo = np.array([r.x0 for r in regions], dtype=np.int64)
    exit_x_hi = np.array([r.x1 for r in regions], dtype=np.int64)
    exit_y_lo = np.array([r.y0 for r in regions], dtype=np.int64)
    exit_y_hi = np.array([r.y1 for r in regions], dtype=np.int64)

    depth = stack.depth
    out: DependencyMap = {}
    lo_x, hi_x, lo_y, hi_y = exit_x_lo, exit_x_hi, exit_y_lo, exit_y_hi
    demand = {depth: (lo_x, hi_x, lo_y, hi_y)}
    for i in range(depth, 0, -1):
        if i not in demand:
            continue
        lo_x, hi_x, lo_y, hi_y = demand[i]
        layer = stack.layers[i - 1]
        out_shape = stack.shapes[i]
        for p in stack.preds[i - 1]:
            in_shape = stack.shapes[p]
            kx, sx, dx, plx = _axis_params(layer, 0)
            ky, sy, dy, ply = _axis_params(layer, 1)
            wx = _window(lo_x, hi_x, kx, sx, dx, plx, in_shape.x, out_shape.x, True)
            wy = _window(lo_y, hi_y, ky, sy, dy, ply, in_shape.y, out_shape.y, True)
            if p in demand:
                px, qx, py, qy = demand[p]
                demand[p] = (np.minimum(px, wx[0]), np.maximum(qx, wx[1]),
                             np.minimum(py, wy[0]), np.maximum(qy, wy[1]))
            else:
                demand[p] = (wx[0].copy(), wx[1].copy(), wy[0].copy(), wy[1].copy())

    for t in range(depth + 1):
        lo_x, hi_x, lo_y, hi_y = demand.get(t, (None,) * 4)
        if lo_x is None:
            continue
        required = Rect(int(lo_x[-1]), int(hi_x[-1]), int(lo_y[-1]), int(hi_y[-1]))
        # Row-major staircase: earlier row bands fully cover their y-hull at
        # every x; earlier tiles of the same band cover the x-prefix.
        cur_band = (int(lo_y[-1]), int(hi_y[-1]))
        prev_band_hi_y = required.y0
        same_band_hi_x = required.x0
        for k in range(len(hi_y) - 1):
            if (int(lo_y[k]), int(hi_y[k])) == cur_band:
                same_band_hi_x = max(same_band_hi_x, int(hi_x[k]))
            else:
                prev_band_hi_y = max(prev_band_hi_y, int(hi_y[k]))
        fresh = Rect(max(required.x0, same_band_hi_x), required.x1,
                     max(required.y0, prev_band_hi_y), required.y1)
        out[t] = DependencyEntry(t, required, fresh,
                                 required.plane - fresh.plane)
    return out
