"""Shared domain types: floorplan geometry, layer stacks, grids, and sampled traces.

Units: block coordinates are millimeters, layer/material constants are SI,
temperatures are degrees Celsius. Solver math converts to SI internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class BlockKind(str, Enum):
    FUNCTIONAL = "functional"
    NOISE_GENERATOR = "noise_generator"
    SENSOR_REGION = "sensor_region"


class TraceUnit(str, Enum):
    INSTRUCTIONS = "instructions"
    WATTS = "watts"
    CELSIUS = "celsius"


# Units whose samples are per-interval quantities and therefore sum under
# rebinning; CELSIUS is a state quantity and averages instead.
_SUMMED_UNITS = {TraceUnit.INSTRUCTIONS, TraceUnit.WATTS}


@dataclass(frozen=True)
class Block:
    """An opaque rectangular power source/region on one layer of the die."""

    id: str
    rect_mm: tuple[float, float, float, float]  # (x0, y0, x1, y1)
    layer: int
    kind: BlockKind = BlockKind.FUNCTIONAL

    @property
    def width_mm(self) -> float:
        return self.rect_mm[2] - self.rect_mm[0]

    @property
    def height_mm(self) -> float:
        return self.rect_mm[3] - self.rect_mm[1]

    def moved_to_layer(self, layer: int) -> "Block":
        return Block(self.id, self.rect_mm, layer, self.kind)


@dataclass(frozen=True)
class Layer:
    """One die layer: thickness in meters, conductivity in W/(m K),
    volumetric heat capacity in J/(m^3 K)."""

    thickness_m: float
    conductivity_w_mk: float
    volumetric_heat_capacity: float


@dataclass(frozen=True)
class LayerStack:
    """Die stack description plus the boundary coupling to ambient.

    Boundary resistances are per-area, (K m^2)/W; ``math.inf`` means an
    adiabatic surface. Layer 0 is the exposed top surface, the last layer
    faces the bottom boundary.
    """

    layers: tuple[Layer, ...]
    die_width_mm: float
    die_height_mm: float
    ambient_c: float = 45.0
    boundary_resistance_top: float = 1e-5
    boundary_resistance_bottom: float = 1e-5

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("layer stack needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.thickness_m <= 0 or layer.conductivity_w_mk <= 0 \
                    or layer.volumetric_heat_capacity <= 0:
                raise ValueError(f"layer {i}: physical constants must be > 0")
        if self.die_width_mm <= 0 or self.die_height_mm <= 0:
            raise ValueError("die dimensions must be > 0")
        for name in ("boundary_resistance_top", "boundary_resistance_bottom"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0 (use inf for adiabatic)")

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class GridSpec:
    """Per-layer lateral discretization."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid rows/cols must be >= 1")


@dataclass(frozen=True)
class Floorplan:
    """Named blocks on a multi-layer die. Carries the die extents so it can
    be validated standalone; build_network cross-checks them against the
    stack."""

    blocks: tuple[Block, ...]
    die_width_mm: float
    die_height_mm: float
    num_layers: int

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(f"unknown block id: {block_id!r}")

    def blocks_of_kind(self, kind: BlockKind) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.kind == kind)

    def with_block_on_layer(self, block_id: str, layer: int) -> "Floorplan":
        moved = tuple(
            b.moved_to_layer(layer) if b.id == block_id else b for b in self.blocks
        )
        if not any(b.id == block_id for b in self.blocks):
            raise KeyError(f"unknown block id: {block_id!r}")
        return Floorplan(moved, self.die_width_mm, self.die_height_mm, self.num_layers)


@dataclass(frozen=True)
class Violation:
    """One floorplan invariant violation; data, not an exception."""

    block_id: str | None
    field: str
    message: str

    def __str__(self) -> str:
        where = f"block {self.block_id!r}" if self.block_id else "floorplan"
        return f"{where}: {self.field}: {self.message}"


def validate_floorplan(floorplan: Floorplan) -> list[Violation]:
    """Check all floorplan invariants; returns an empty list iff clean.

    Pure: same floorplan, same violation list.
    """
    violations: list[Violation] = []
    seen: set[str] = set()
    for b in floorplan.blocks:
        if b.id in seen:
            violations.append(Violation(b.id, "id", "duplicate block id"))
        seen.add(b.id)
        x0, y0, x1, y1 = b.rect_mm
        if not (x0 < x1):
            violations.append(Violation(b.id, "rect", f"degenerate rect: x0={x0} >= x1={x1}"))
        if not (y0 < y1):
            violations.append(Violation(b.id, "rect", f"degenerate rect: y0={y0} >= y1={y1}"))
        if x0 < 0 or y0 < 0 or x1 > floorplan.die_width_mm or y1 > floorplan.die_height_mm:
            violations.append(Violation(
                b.id, "rect",
                f"rect {b.rect_mm} outside die bounds "
                f"({floorplan.die_width_mm} x {floorplan.die_height_mm} mm)"))
        if not (0 <= b.layer < floorplan.num_layers):
            violations.append(Violation(
                b.id, "layer",
                f"layer {b.layer} outside stack of {floorplan.num_layers} layers"))
    return violations


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled multi-channel time series.

    values is [num_samples x num_channels]; immutable after construction.
    """

    sample_interval_s: float
    channels: tuple[str, ...]
    values: np.ndarray = field(repr=False)
    unit: TraceUnit = TraceUnit.WATTS

    def __post_init__(self):
        if self.sample_interval_s <= 0:
            raise ValueError("sample_interval_s must be > 0")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("trace values must be 2-D [samples x channels]")
        if vals.shape[1] != len(self.channels):
            raise ValueError(
                f"value width {vals.shape[1]} != {len(self.channels)} channels")
        if not np.all(np.isfinite(vals)):
            raise ValueError("trace contains NaN or Inf entries")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "unit", TraceUnit(self.unit))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    def channel(self, channel_id: str) -> np.ndarray:
        try:
            idx = self.channels.index(channel_id)
        except ValueError:
            raise KeyError(f"unknown channel: {channel_id!r}") from None
        return self.values[:, idx]

    def select(self, channel_ids) -> "Trace":
        ids = tuple(channel_ids)
        cols = [self.channels.index(c) for c in ids]
        return Trace(self.sample_interval_s, ids, self.values[:, cols], self.unit)

    def times_s(self) -> np.ndarray:
        return np.arange(self.num_samples) * self.sample_interval_s


def resample(trace: Trace, new_interval_s: float) -> Trace:
    """Rebin a trace to a coarser interval (integer multiple of the old one).

    Per-interval quantities (instructions, watts) are summed within each new
    bin; temperatures are averaged. A trailing partial bin is dropped.
    """
    ratio = new_interval_s / trace.sample_interval_s
    factor = round(ratio)
    if factor < 1 or abs(ratio - factor) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(
            f"new interval must be an integer multiple of the old one "
            f"(ratio {ratio})")
    if factor == 1:
        return trace
    n_bins = trace.num_samples // factor
    clipped = trace.values[: n_bins * factor]
    binned = clipped.reshape(n_bins, factor, trace.num_channels)
    if trace.unit in _SUMMED_UNITS:
        out = binned.sum(axis=1)
    else:
        out = binned.mean(axis=1)
    return Trace(new_interval_s, trace.channels, out, trace.unit)


def is_adiabatic(resistance: float) -> bool:
    return math.isinf(resistance)
