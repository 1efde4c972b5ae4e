"""Attacker observation models: how simulated cell temperatures become the
traces an adversary collects.

Three modes: a built-in sensor reading a composite over a cell region (so
readings cannot be attributed to single blocks), an external contact sensor
on one surface cell, and infrared imaging of the whole top layer with a box
blur. All modes add seeded Gaussian noise and quantize.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .metrics import SvfReport, best_delay
from .model import Floorplan, GridSpec, LayerStack, Trace, TraceUnit
from .thermal import ThermalNetwork, build_network, cell_name, transient


class SensorMode(str, Enum):
    BUILTIN = "builtin"
    EXTERNAL = "external"
    IR_IMAGE = "ir_image"


@dataclass(frozen=True)
class SensorConfig:
    mode: SensorMode
    grid: GridSpec
    num_layers: int
    # point modes: (layer, row, col); external must sit on a surface layer
    location: tuple[int, int, int] | None = None
    # builtin: cells plus optional weights (uniform when omitted)
    region: tuple[tuple[int, int, int], ...] = ()
    region_weights: tuple[float, ...] | None = None
    noise_std_c: float = 0.0
    quantization_c: float = 0.0
    ir_blur_radius: int = 0
    sensor_id: str = "sensor"

    def __post_init__(self):
        object.__setattr__(self, "mode", SensorMode(self.mode))
        if self.noise_std_c < 0 or self.quantization_c < 0:
            raise ValueError("noise_std and quantization must be >= 0")
        if self.ir_blur_radius < 0:
            raise ValueError("ir_blur_radius must be >= 0")
        if self.mode == SensorMode.EXTERNAL:
            if self.location is None:
                raise ValueError("external sensor needs a location")
            l, r, c = self.location
            self._check_cell(l, r, c)
            if l not in (0, self.num_layers - 1):
                raise ValueError(
                    "external sensors attach to the top or bottom surface layer only")
        elif self.mode == SensorMode.BUILTIN:
            if not self.region:
                raise ValueError("builtin sensor needs a nonempty cell region")
            for l, r, c in self.region:
                self._check_cell(l, r, c)
            if self.region_weights is not None and len(self.region_weights) != len(self.region):
                raise ValueError("region weights length mismatch")

    def _check_cell(self, l, r, c):
        if not (0 <= l < self.num_layers and 0 <= r < self.grid.rows and 0 <= c < self.grid.cols):
            raise ValueError(f"cell ({l},{r},{c}) is off-grid")


def _quantize(values: np.ndarray, step: float) -> np.ndarray:
    if step <= 0:
        return values
    return np.round(values / step) * step  # numpy rounds half to even


def observe(cell_temp_trace: Trace, config: SensorConfig, seed: int = 0) -> Trace:
    """Produce the adversary's trace from a cell-level temperature trace."""
    if cell_temp_trace.unit != TraceUnit.CELSIUS:
        raise ValueError("expected a temperature trace")
    names = cell_temp_trace.channels

    def col(l, r, c):
        return names.index(cell_name(l, r, c))

    if config.mode == SensorMode.BUILTIN:
        cols = [col(*cell) for cell in config.region]
        if config.region_weights is None:
            weights = np.full(len(cols), 1.0 / len(cols))
        else:
            weights = np.asarray(config.region_weights, dtype=float)
            weights = weights / weights.sum()
        vals = cell_temp_trace.values[:, cols] @ weights
        vals = vals[:, None]
        channels = (config.sensor_id,)
    elif config.mode == SensorMode.EXTERNAL:
        vals = cell_temp_trace.values[:, [col(*config.location)]]
        channels = (config.sensor_id,)
    else:  # IR: every top-layer cell is a channel, box-blurred
        rows, cols_n = config.grid.rows, config.grid.cols
        idx = [col(0, r, c) for r in range(rows) for c in range(cols_n)]
        frames = cell_temp_trace.values[:, idx].reshape(-1, rows, cols_n)
        rad = config.ir_blur_radius
        if rad > 0:
            blurred = np.empty_like(frames)
            for r in range(rows):
                r0, r1 = max(0, r - rad), min(rows, r + rad + 1)
                for c in range(cols_n):
                    c0, c1 = max(0, c - rad), min(cols_n, c + rad + 1)
                    blurred[:, r, c] = frames[:, r0:r1, c0:c1].mean(axis=(1, 2))
            frames = blurred
        vals = frames.reshape(frames.shape[0], rows * cols_n)
        channels = tuple(
            f"{config.sensor_id}_{cell_name(0, r, c)}" for r in range(rows) for c in range(cols_n))

    if config.noise_std_c > 0:
        rng = np.random.default_rng(seed)
        vals = vals + rng.normal(0.0, config.noise_std_c, vals.shape)
    vals = _quantize(vals, config.quantization_c)
    return Trace(cell_temp_trace.sample_interval_s, channels, vals, TraceUnit.CELSIUS)


@dataclass(frozen=True)
class LayerAttenuationResult:
    per_layer: dict[int, SvfReport] = field(default_factory=dict)


def layer_attenuation_experiment(
    floorplan: Floorplan,
    stack: LayerStack,
    grid: GridSpec,
    block_id: str,
    layer_choices,
    power_trace: Trace,
    sensor: SensorConfig,
    k_max: int = 10,
    window: tuple[int, int] | None = None,
    seed: int = 0,
) -> LayerAttenuationResult:
    """Replay the same block power trace with the block on each candidate
    layer and report the leakage a fixed top-surface sensor achieves.

    Deeper placements see the vertical RC path as a low-pass filter; the
    result quantifies that stacking attenuation.
    """
    results: dict[int, SvfReport] = {}
    for layer in layer_choices:
        fp = floorplan.with_block_on_layer(block_id, layer)
        network = build_network(fp, stack, grid)
        cell_trace = transient(network, power_trace)
        obs = observe(cell_trace, sensor, seed=seed)
        if window is None:
            stop = power_trace.num_samples - k_max
            win = (0, stop)
        else:
            win = window
        _, report = best_delay(power_trace, obs, k_max, win)
        results[int(layer)] = report
    return LayerAttenuationResult(per_layer=results)
