"""Accelerator descriptions: PE array with fixed spatial unrolling plus an
ordered memory hierarchy with capacities, per-word access costs and
bandwidths. Parsed from JSON documents; three representative presets ship
with the package."""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass
from typing import Mapping


class HardwareError(ValueError):
    pass


UNROLL_DIMS = ("K", "C", "OX", "OY", "FX", "FY")
OPERANDS = ("W", "I", "O")


@dataclass(frozen=True)
class MemoryLevel:
    name: str
    capacity: int | None  # bytes; None = unbounded (DRAM)
    read_cost: float  # energy units per word
    write_cost: float
    bandwidth: float  # words per cycle
    serves: frozenset[str]
    is_global_buffer: bool = False

    @property
    def rw_cost(self) -> float:
        return self.read_cost + self.write_cost


def fits(level: MemoryLevel, nbytes: int) -> bool:
    """Whether ``nbytes`` fits the level (unbounded levels always fit)."""
    return level.capacity is None or nbytes <= level.capacity


@dataclass(frozen=True)
class PEArray:
    total_macs: int
    unrolling: tuple[tuple[str, int], ...]
    mac_cost: float


def utilization(tile_dims: Mapping[str, int], pe: PEArray) -> float:
    """Fraction of the array a tile keeps busy.

    Each unrolled dimension contributes min(tile, factor)/factor; dimensions
    the tile does not constrain count as fully used.
    """
    u = 1.0
    for dim, factor in pe.unrolling:
        size = tile_dims.get(dim)
        if size is None:
            continue
        if size < 1:
            raise HardwareError(f"tile dimension {dim} must be >= 1, got {size}")
        u *= min(size, factor) / factor
    return u


@dataclass(frozen=True)
class AcceleratorSpec:
    name: str
    pe: PEArray
    levels: tuple[MemoryLevel, ...]  # innermost (LB) to outermost (DRAM)

    @property
    def gb(self) -> MemoryLevel:
        return next(l for l in self.levels if l.is_global_buffer)

    @property
    def dram(self) -> MemoryLevel:
        return self.levels[-1]

    def lb(self, operand: str) -> MemoryLevel:
        """Innermost level serving the operand (below the global buffer)."""
        for level in self.levels:
            if level.is_global_buffer or level.capacity is None:
                break
            if operand in level.serves:
                return level
        raise HardwareError(f"no local buffer serves operand {operand}")

    def level(self, name: str) -> MemoryLevel:
        for l in self.levels:
            if l.name == name:
                return l
        raise HardwareError(f"no memory level named {name}")


def _validate(spec: AcceleratorSpec) -> AcceleratorSpec:
    prod = math.prod(f for _, f in spec.pe.unrolling)
    if prod != spec.pe.total_macs:
        raise HardwareError(
            f"unrolling product {prod} != total_macs {spec.pe.total_macs}")
    for dim, factor in spec.pe.unrolling:
        if dim not in UNROLL_DIMS:
            raise HardwareError(f"unknown unrolling dimension {dim}")
        if factor < 1:
            raise HardwareError(f"unrolling factor for {dim} must be >= 1")
    if not spec.levels:
        raise HardwareError("memory hierarchy is empty")
    if spec.levels[-1].capacity is not None:
        raise HardwareError("outermost level must be unbounded (DRAM)")
    gbs = [l for l in spec.levels if l.is_global_buffer]
    if len(gbs) != 1:
        raise HardwareError(f"exactly one level must be the global buffer, found {len(gbs)}")
    on_chip = [l for l in spec.levels if l.capacity is not None]
    if not on_chip:
        raise HardwareError("need at least one on-chip level below DRAM")
    for l in spec.levels:
        if l.capacity is not None and l.capacity <= 0:
            raise HardwareError(f"level {l.name}: on-chip capacity must be > 0")
        if l.bandwidth <= 0:
            raise HardwareError(f"level {l.name}: bandwidth must be > 0")
        bad = set(l.serves) - set(OPERANDS)
        if bad:
            raise HardwareError(f"level {l.name}: unknown operands {sorted(bad)}")
    for op in OPERANDS:
        spec.lb(op)  # raises when missing
    return spec


_PE_KEYS = {"total_macs", "mac_cost", "unrolling"}
_LEVEL_KEYS = {"name", "capacity_bytes", "read_cost", "write_cost",
               "bandwidth_words_per_cycle", "serves", "is_global_buffer"}


def parse_accelerator(text: str | bytes | dict) -> AcceleratorSpec:
    doc = json.loads(text) if not isinstance(text, dict) else text
    unknown = set(doc) - {"name", "pe", "levels"}
    if unknown:
        raise HardwareError(f"unknown hardware keys: {sorted(unknown)}")
    try:
        pe_doc = doc["pe"]
        if set(pe_doc) - _PE_KEYS:
            raise HardwareError(f"unknown pe keys: {sorted(set(pe_doc) - _PE_KEYS)}")
        pe = PEArray(
            total_macs=int(pe_doc["total_macs"]),
            unrolling=tuple((str(u["dim"]), int(u["factor"]))
                            for u in pe_doc["unrolling"]),
            mac_cost=float(pe_doc["mac_cost"]),
        )
        levels = []
        for raw in doc["levels"]:
            if set(raw) - _LEVEL_KEYS:
                raise HardwareError(f"unknown level keys: {sorted(set(raw) - _LEVEL_KEYS)}")
            cap = raw["capacity_bytes"]
            levels.append(MemoryLevel(
                name=str(raw["name"]),
                capacity=None if cap == "unbounded" else int(cap),
                read_cost=float(raw["read_cost"]),
                write_cost=float(raw["write_cost"]),
                bandwidth=float(raw["bandwidth_words_per_cycle"]),
                serves=frozenset(str(s) for s in raw["serves"]),
                is_global_buffer=bool(raw.get("is_global_buffer", False)),
            ))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, HardwareError):
            raise
        raise HardwareError(f"malformed hardware document: {e}") from None
    return _validate(AcceleratorSpec(str(doc.get("name", "unnamed")), pe, tuple(levels)))


def accelerator_to_dict(spec: AcceleratorSpec) -> dict:
    return {
        "name": spec.name,
        "pe": {
            "total_macs": spec.pe.total_macs,
            "mac_cost": spec.pe.mac_cost,
            "unrolling": [{"dim": d, "factor": f} for d, f in spec.pe.unrolling],
        },
        "levels": [
            {
                "name": l.name,
                "capacity_bytes": "unbounded" if l.capacity is None else l.capacity,
                "read_cost": l.read_cost,
                "write_cost": l.write_cost,
                "bandwidth_words_per_cycle": l.bandwidth,
                "serves": sorted(l.serves),
                "is_global_buffer": l.is_global_buffer,
            }
            for l in spec.levels
        ],
    }


def load_preset(name: str) -> AcceleratorSpec:
    """Load a shipped hardware preset ('meta-edge-like', 'tpu-edge-like', 'tesla-npu-like')."""
    path = importlib.resources.files("causalsched").joinpath(f"configs/hw/{name}.json")
    try:
        return parse_accelerator(path.read_text())
    except FileNotFoundError:
        raise HardwareError(f"no hardware preset named {name}") from None


def preset_names() -> list[str]:
    root = importlib.resources.files("causalsched").joinpath("configs/hw")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
