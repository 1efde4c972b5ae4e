"""Compact RC thermal network on a layered grid, with steady-state and
transient (backward Euler) solvers.

The die is discretized into rows x cols cells per layer. Conductances:
lateral between in-layer neighbors (k * t * w_perp / d), vertical between
stacked cells (half-thickness resistances in series), and ambient couplings
on the top/bottom surface cells (cell area / boundary resistance), folded
into the diagonal. Solves work on temperature offsets above ambient, so the
ambient node never appears explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import Floorplan, GridSpec, LayerStack, Trace, TraceUnit, is_adiabatic, validate_floorplan

CELL_BUDGET = 65536

MM = 1e-3  # millimeters to meters


def cell_name(layer: int, row: int, col: int) -> str:
    return f"L{layer}R{row}C{col}"


class ThermalModelError(ValueError):
    """Raised for unbuildable or unsolvable networks."""


@dataclass(frozen=True)
class ThermalNetwork:
    """Assembled conductance matrix and capacitances over grid cells."""

    grid: GridSpec
    num_layers: int
    conductance: sp.csr_matrix = field(repr=False)  # W/K, symmetric
    capacitance: np.ndarray = field(repr=False)  # J/K, per cell
    ambient_conductance: np.ndarray = field(repr=False)  # W/K, per cell
    ambient_c: float = 45.0
    # block id -> (cell ids, area weights summing to 1)
    block_cells: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    @property
    def num_cells(self) -> int:
        return self.capacitance.shape[0]

    def cell_index(self, layer: int, row: int, col: int) -> int:
        g = self.grid
        if not (0 <= layer < self.num_layers and 0 <= row < g.rows and 0 <= col < g.cols):
            raise IndexError(f"cell ({layer},{row},{col}) outside grid")
        return (layer * g.rows + row) * g.cols + col

    def cell_names(self) -> tuple[str, ...]:
        g = self.grid
        return tuple(
            cell_name(l, r, c)
            for l in range(self.num_layers)
            for r in range(g.rows)
            for c in range(g.cols)
        )

    def block_weight_matrix(self, block_ids) -> np.ndarray:
        """Rows = blocks, cols = cells; row b distributes 1 W of block b."""
        w = np.zeros((len(block_ids), self.num_cells))
        for i, bid in enumerate(block_ids):
            cells, weights = self._block(bid)
            w[i, cells] = weights
        return w

    def _block(self, block_id: str) -> tuple[np.ndarray, np.ndarray]:
        if block_id not in self.block_cells:
            raise KeyError(f"block {block_id!r} not mapped onto this network")
        return self.block_cells[block_id]


@dataclass(frozen=True)
class ThermalState:
    temperatures_c: np.ndarray
    time_s: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.temperatures_c, dtype=float)
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite temperatures")
        object.__setattr__(self, "temperatures_c", t)


def build_network(floorplan: Floorplan, stack: LayerStack, grid: GridSpec) -> ThermalNetwork:
    violations = validate_floorplan(floorplan)
    if violations:
        raise ThermalModelError(
            "floorplan invalid: " + "; ".join(str(v) for v in violations))
    if floorplan.num_layers != stack.num_layers:
        raise ThermalModelError(
            f"floorplan has {floorplan.num_layers} layers, stack has {stack.num_layers}")
    if (floorplan.die_width_mm, floorplan.die_height_mm) != (stack.die_width_mm, stack.die_height_mm):
        raise ThermalModelError("floorplan and stack die dimensions differ")
    layers = stack.num_layers
    rows, cols = grid.rows, grid.cols
    n = layers * rows * cols
    if n > CELL_BUDGET:
        raise ThermalModelError(f"{n} cells exceeds cell budget {CELL_BUDGET}")

    w = stack.die_width_mm * MM / cols   # cell x-extent
    h = stack.die_height_mm * MM / rows  # cell y-extent
    area = w * h

    def idx(l, r, c):
        return (l * rows + r) * cols + c

    ii: list[int] = []
    jj: list[int] = []
    gg: list[float] = []

    def couple(a, b, g):
        ii.extend((a, b, a, b))
        jj.extend((b, a, a, b))
        gg.extend((-g, -g, g, g))

    cap = np.zeros(n)
    g_amb = np.zeros(n)
    for l, layer in enumerate(stack.layers):
        k = layer.conductivity_w_mk
        t = layer.thickness_m
        cap[idx(l, 0, 0):idx(l, rows - 1, cols - 1) + 1] = layer.volumetric_heat_capacity * area * t
        gx = k * t * h / w
        gy = k * t * w / h
        for r in range(rows):
            for c in range(cols):
                a = idx(l, r, c)
                if c + 1 < cols:
                    couple(a, idx(l, r, c + 1), gx)
                if r + 1 < rows:
                    couple(a, idx(l, r + 1, c), gy)
        if l + 1 < layers:
            below = stack.layers[l + 1]
            r_vert = t / (2.0 * k * area) + below.thickness_m / (2.0 * below.conductivity_w_mk * area)
            gv = 1.0 / r_vert
            for r in range(rows):
                for c in range(cols):
                    couple(idx(l, r, c), idx(l + 1, r, c), gv)

    if not is_adiabatic(stack.boundary_resistance_top):
        g = area / stack.boundary_resistance_top
        for r in range(rows):
            for c in range(cols):
                g_amb[idx(0, r, c)] += g
    if not is_adiabatic(stack.boundary_resistance_bottom):
        g = area / stack.boundary_resistance_bottom
        for r in range(rows):
            for c in range(cols):
                g_amb[idx(layers - 1, r, c)] += g

    G = sp.coo_matrix((gg, (ii, jj)), shape=(n, n)).tocsr()
    G = G + sp.diags(g_amb)

    block_cells: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    xs = np.arange(cols + 1) * stack.die_width_mm / cols
    ys = np.arange(rows + 1) * stack.die_height_mm / rows
    for b in floorplan.blocks:
        x0, y0, x1, y1 = b.rect_mm
        cells = []
        overlaps = []
        for r in range(rows):
            oy = min(y1, ys[r + 1]) - max(y0, ys[r])
            if oy <= 0:
                continue
            for c in range(cols):
                ox = min(x1, xs[c + 1]) - max(x0, xs[c])
                if ox <= 0:
                    continue
                cells.append(idx(b.layer, r, c))
                overlaps.append(ox * oy)
        if not cells:
            raise ThermalModelError(
                f"block {b.id!r} covers no grid cells at {rows}x{cols} resolution")
        weights = np.asarray(overlaps, dtype=float)
        weights /= weights.sum()
        block_cells[b.id] = (np.asarray(cells, dtype=int), weights)

    return ThermalNetwork(
        grid=grid,
        num_layers=layers,
        conductance=G.tocsr(),
        capacitance=cap,
        ambient_conductance=g_amb,
        ambient_c=stack.ambient_c,
        block_cells=block_cells,
    )


def map_power(block_powers_w: dict[str, float], network: ThermalNetwork) -> np.ndarray:
    """Distribute per-block power over covered cells by area weight.

    Overlapping blocks add onto shared cells; the vector sum equals the
    input sum exactly (to rounding).
    """
    p = np.zeros(network.num_cells)
    for bid, watts in block_powers_w.items():
        cells, weights = network._block(bid)
        p[cells] += watts * weights
    return p


def steady_state(network: ThermalNetwork, power_w: np.ndarray) -> ThermalState:
    """Solve G * (T - T_amb) = P directly.

    Requires at least one ambient path; verifies the residual against
    1e-9 * max(1, ||P||_inf).
    """
    p = np.asarray(power_w, dtype=float)
    if p.shape != (network.num_cells,):
        raise ValueError(f"power vector must have length {network.num_cells}")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite power input")
    if not np.any(network.ambient_conductance > 0):
        raise ThermalModelError("network has no ambient path anywhere; singular")
    lu = spla.splu(network.conductance.tocsc())
    dt = lu.solve(p)
    residual = np.linalg.norm(network.conductance @ dt - p, ord=np.inf)
    if residual > 1e-9 * max(1.0, np.linalg.norm(p, ord=np.inf)):
        raise ThermalModelError(f"steady-state residual too large: {residual:g}")
    return ThermalState(network.ambient_c + dt)


class TransientStepper:
    """Backward-Euler integrator over one network with a fixed dt.

    Factorizes (C/dt + G) once and reuses it; each step advances by dt with
    the power held constant (zero-order hold). State is the offset above
    ambient.
    """

    def __init__(self, network: ThermalNetwork, dt_s: float):
        if dt_s <= 0:
            raise ValueError("dt must be > 0")
        if not np.any(network.ambient_conductance > 0):
            raise ThermalModelError("network has no ambient path anywhere; singular")
        self.network = network
        self.dt_s = dt_s
        self._c_over_dt = network.capacitance / dt_s
        A = sp.diags(self._c_over_dt) + network.conductance
        self._solve = spla.splu(A.tocsc()).solve

    def step(self, offset_k: np.ndarray, power_w: np.ndarray) -> np.ndarray:
        return self._solve(self._c_over_dt * offset_k + power_w)

    def advance(self, offset_k: np.ndarray, power_w: np.ndarray, steps: int) -> np.ndarray:
        x = offset_k
        for _ in range(steps):
            x = self._solve(self._c_over_dt * x + power_w)
        return x


def transient(
    network: ThermalNetwork,
    power_trace: Trace,
    initial: ThermalState | None = None,
    dt_s: float | None = None,
) -> Trace:
    """Integrate the network under a block-level power trace.

    dt must divide the trace sample interval (default interval/10). The
    output holds every cell's temperature at each sample boundary, at the
    trace's own interval.
    """
    if power_trace.unit != TraceUnit.WATTS:
        raise ValueError("power trace must be in watts")
    interval = power_trace.sample_interval_s
    if dt_s is None:
        dt_s = interval / 10.0
        substeps = 10
    else:
        if dt_s <= 0:
            raise ValueError("dt must be > 0")
        ratio = interval / dt_s
        substeps = round(ratio)
        if substeps < 1 or abs(ratio - substeps) > 1e-9 * ratio:
            raise ValueError(f"dt {dt_s} does not divide sample interval {interval}")

    weight = network.block_weight_matrix(power_trace.channels)
    cell_power = power_trace.values @ weight  # [samples x cells]

    if initial is None:
        offset = np.zeros(network.num_cells)
    else:
        if initial.temperatures_c.shape != (network.num_cells,):
            raise ValueError("initial state size mismatch")
        offset = initial.temperatures_c - network.ambient_c

    stepper = TransientStepper(network, dt_s)
    out = np.empty((power_trace.num_samples, network.num_cells))
    for i in range(power_trace.num_samples):
        offset = stepper.advance(offset, cell_power[i], substeps)
        out[i] = offset
    return Trace(interval, network.cell_names(), out + network.ambient_c, TraceUnit.CELSIUS)


def block_temperature(state: ThermalState, block_id: str, network: ThermalNetwork) -> float:
    """Area-weighted mean temperature over the block's cells."""
    cells, weights = network._block(block_id)
    return float(state.temperatures_c[cells] @ weights)


def block_temperature_trace(cell_trace: Trace, block_ids, network: ThermalNetwork) -> Trace:
    """Per-sample area-weighted block temperatures from a cell-level trace."""
    if cell_trace.channels != network.cell_names():
        raise ValueError("cell trace channels do not match this network")
    ids = tuple(block_ids)
    weight = network.block_weight_matrix(ids)  # [blocks x cells]
    vals = cell_trace.values @ weight.T
    return Trace(cell_trace.sample_interval_s, ids, vals, TraceUnit.CELSIUS)
