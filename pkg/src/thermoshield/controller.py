"""Closed-loop thermal shielding: threshold selection by security level,
generator power commands, lookup-table calibration, the maximal-injection
baseline, and the shielded simulation loop.

The per-block loop each sample: read the block sensor, back out the
injected temperature rise to estimate the unshielded block temperature,
track its [T_min, T_max] range, pick a threshold from the security level
(walking down levels that would bust the power budget or thermal limit),
and command generator power to fill the gap up to the table-given cap. The
proportional gain defaults to the calibrated table slope, so the command is
effectively the inverse-plant power for the demanded temperature rise.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Trace, TraceUnit
from .thermal import ThermalNetwork, TransientStepper, map_power, steady_state


@dataclass(frozen=True)
class TTable:
    """Security level -> demanded temperature increment (deg C)."""

    entries: dict[int, float]
    calibrated: bool = True

    def __post_init__(self):
        if not self.entries:
            raise ValueError("T table must not be empty")
        if 0 not in self.entries:
            raise ValueError("T table must define level 0")

    @classmethod
    def default(cls, calibrated: bool = True) -> "TTable":
        return cls({s: 3.5 + 0.5 * s for s in range(8)}, calibrated=calibrated)

    @property
    def max_level(self) -> int:
        return max(self.entries)

    def delta_t(self, level: int) -> float:
        return self.entries[level]

    def levels_at_most(self, level: int) -> list[int]:
        return sorted((s for s in self.entries if s <= level), reverse=True)


@dataclass(frozen=True)
class PTable:
    """Monotone piecewise-linear map between a block's temperature increment
    and the generator power that produces it. Queries clamp to the calibrated
    domain; use in_domain to detect clamping."""

    delta_t_c: np.ndarray
    power_w: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta_t_c, dtype=float)
        p = np.asarray(self.power_w, dtype=float)
        if d.shape != p.shape or d.ndim != 1 or d.size < 1:
            raise ValueError("table arrays must be 1-D and equally sized")
        if d[0] != 0.0 or p[0] != 0.0:
            raise ValueError("table must start at (0, 0)")
        if np.any(np.diff(d) <= 0) or np.any(np.diff(p) < 0):
            raise ValueError("table must be monotone in delta T and power")
        object.__setattr__(self, "delta_t_c", d)
        object.__setattr__(self, "power_w", p)

    @property
    def max_delta_t(self) -> float:
        return float(self.delta_t_c[-1])

    @property
    def max_power(self) -> float:
        return float(self.power_w[-1])

    def in_domain(self, delta_t: float) -> bool:
        return 0.0 <= delta_t <= self.max_delta_t

    def power_for_delta_t(self, delta_t: float) -> float:
        return float(np.interp(delta_t, self.delta_t_c, self.power_w))

    def delta_t_for_power(self, power: float) -> float:
        return float(np.interp(power, self.power_w, self.delta_t_c))

    def slope_w_per_c(self) -> float:
        """Overall W/degC secant; the natural proportional gain."""
        if self.max_delta_t == 0.0:
            return 0.0
        return self.max_power / self.max_delta_t


@dataclass(frozen=True)
class ControllerConfig:
    security_level: int = 7
    adjustment_interval: int = 50
    range_window: int = 500
    mode: str = "proportional"  # or "pid"
    kp: float | None = None  # None: derive from the table slope
    ki: float = 0.0
    kd: float = 0.0
    power_budget_w: float = 1e9  # per protected block's generator group
    thermal_limit_c: float = math.inf
    threshold_scope: str = "per_block"  # or "global_max"
    fixed_delta_t: float | None = None  # calibration-sweep mode, bypasses the T table
    sensor_noise_std_c: float = 0.0
    sensor_quantization_c: float = 0.0
    substeps: int = 10

    def __post_init__(self):
        if self.security_level < 0:
            raise ValueError("security_level must be >= 0")
        if self.adjustment_interval < 1 or self.range_window < 1:
            raise ValueError("intervals must be >= 1 sample")
        if self.mode not in ("proportional", "pid"):
            raise ValueError(f"unknown controller mode {self.mode!r}")
        for g in (self.kp, self.ki, self.kd):
            if g is not None and g < 0:
                raise ValueError("gains must be >= 0")
        if self.power_budget_w < 0:
            raise ValueError("power budget must be >= 0")
        if self.threshold_scope not in ("per_block", "global_max"):
            raise ValueError(f"unknown threshold scope {self.threshold_scope!r}")
        if self.fixed_delta_t is not None and self.fixed_delta_t < 0:
            raise ValueError("fixed_delta_t must be >= 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass
class BlockShieldState:
    """Per-protected-block running state of the shielding loop."""

    t_min: float = math.nan
    t_max: float = math.nan
    t_th: float = math.nan
    last_command_w: float = 0.0
    history: deque = field(default_factory=lambda: deque(maxlen=500))
    samples_seen: int = 0
    integral: float = 0.0
    prev_error: float = 0.0

    @classmethod
    def fresh(cls, range_window: int) -> "BlockShieldState":
        return cls(history=deque(maxlen=range_window))


@dataclass(frozen=True)
class ShieldTables:
    """Calibrated lookup tables plus the generator assignment."""

    t_table: TTable
    p_tables: dict[str, PTable]
    groups: dict[str, tuple[str, ...]]  # protected block -> its generators

    def __post_init__(self):
        missing = set(self.groups) - set(self.p_tables)
        if missing:
            raise ValueError(f"no power table for protected blocks: {sorted(missing)}")


@dataclass(frozen=True)
class ThresholdSelection:
    t_th: float
    p_cap: float
    achieved_level: int
    delta_t: float
    infeasible: bool = False


def estimate_block_temp(
    t_sensor_c: float, last_command_w: float, p_table: PTable
) -> tuple[float, bool]:
    """Recover the unshielded block temperature by subtracting the rise the
    last generator command produces per the calibrated coupling. Returns
    (estimate, clamped): clamped is set when the command lies outside the
    calibrated range and the inversion saturated."""
    if last_command_w < 0:
        raise ValueError("command must be >= 0")
    if last_command_w == 0.0:
        return t_sensor_c, False
    clamped = last_command_w > p_table.max_power
    injected = p_table.delta_t_for_power(last_command_w)
    return t_sensor_c - injected, clamped


def update_range(state: BlockShieldState, t_block_c: float, adjustment_interval: int) -> None:
    """Track the block temperature and refresh [T_min, T_max] at every
    adjustment boundary from the sliding window, so long-term cooling lowers
    the range."""
    state.history.append(t_block_c)
    state.samples_seen += 1
    if state.samples_seen == 1 or state.samples_seen % adjustment_interval == 0:
        state.t_min = min(state.history)
        state.t_max = max(state.history)


def select_threshold(
    state: BlockShieldState,
    config: ControllerConfig,
    t_table: TTable,
    p_table: PTable,
    demand_level: int | None = None,
) -> ThresholdSelection:
    """Walk security levels downward until the power budget and thermal
    limit hold; if every level violates, return level 0's threshold with the
    cap clamped to budget and the infeasible flag set."""
    if not (state.t_min <= state.t_max):
        raise ValueError("range not initialized: T_min > T_max or NaN")

    def threshold_for(delta_t: float) -> float:
        if state.t_max - state.t_min < delta_t:
            return state.t_max
        return state.t_min + delta_t

    if config.fixed_delta_t is not None:
        delta_t = config.fixed_delta_t
        t_th = threshold_for(delta_t)
        p_cap = p_table.power_for_delta_t(t_th - state.t_min)
        if p_cap > config.power_budget_w or t_th > config.thermal_limit_c:
            return ThresholdSelection(t_th, min(p_cap, config.power_budget_w), -1,
                                      delta_t, infeasible=True)
        return ThresholdSelection(t_th, p_cap, -1, delta_t)

    level = config.security_level if demand_level is None else demand_level
    candidates = t_table.levels_at_most(level)
    fallback: ThresholdSelection | None = None
    for s in candidates:
        delta_t = t_table.delta_t(s)
        t_th = threshold_for(delta_t)
        p_cap = p_table.power_for_delta_t(t_th - state.t_min)
        selection = ThresholdSelection(t_th, p_cap, s, delta_t)
        if s == 0:
            fallback = selection
        if p_cap > config.power_budget_w or t_th > config.thermal_limit_c:
            continue
        return selection
    assert fallback is not None  # level 0 always exists
    return replace(fallback, p_cap=min(fallback.p_cap, config.power_budget_w),
                   infeasible=True)


def generator_command(
    t_th_c: float,
    t_block_c: float,
    p_cap_w: float,
    config: ControllerConfig,
    state: BlockShieldState,
    kp: float,
) -> float:
    """Power command filling the gap below the threshold, capped at p_cap.
    Zero whenever the block already sits at or above the threshold."""
    if p_cap_w < 0:
        raise ValueError("p_cap must be >= 0")
    error = t_th_c - t_block_c
    if error <= 0.0:
        state.integral = 0.0
        state.prev_error = 0.0
        return 0.0
    if config.mode == "proportional":
        return min(p_cap_w, kp * error)
    # pid: integral anti-windup keeps the integral contribution within the cap
    state.integral += error
    if config.ki > 0:
        state.integral = min(state.integral, p_cap_w / config.ki)
    derivative = error - state.prev_error
    state.prev_error = error
    p = kp * error + config.ki * state.integral + config.kd * derivative
    return float(np.clip(p, 0.0, p_cap_w))


def calibrate_p_table(
    network: ThermalNetwork,
    generator_groups: dict[str, tuple[str, ...]],
    power_levels,
) -> dict[str, PTable]:
    """Steady-state calibration: drive each protected block's generator
    group at every power level (members split the level equally, everything
    else idle) and record the block's temperature rise over the idle state.

    The returned tables invert that response: increment -> group power.
    """
    levels = [float(p) for p in power_levels]
    if not levels or levels[0] != 0.0 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("power levels must be ascending and start at 0")
    tables: dict[str, PTable] = {}
    for block_id, gens in generator_groups.items():
        if not gens:
            raise ValueError(f"protected block {block_id!r} has no generators")
        rises = [0.0]
        for level in levels[1:]:
            powers = {g: level / len(gens) for g in gens}
            state = steady_state(network, map_power(powers, network))
            cells, weights = network._block(block_id)
            rise = float((state.temperatures_c[cells] - network.ambient_c) @ weights)
            rises.append(rise)
        if any(b <= a for a, b in zip(rises, rises[1:])):
            raise RuntimeError(
                f"non-monotone temperature response calibrating {block_id!r}; "
                "internal consistency failure")
        tables[block_id] = PTable(np.asarray(rises), np.asarray(levels))
    return tables


def coupling_matrix(
    network: ThermalNetwork,
    generator_groups: dict[str, tuple[str, ...]],
) -> np.ndarray:
    """Full steady-state noise-coupling table: entry [b, g] is the
    temperature rise of protected block b per watt on group g. The diagonal
    is what the per-block power tables invert; the off-diagonals quantify
    cross-group heating."""
    blocks = list(generator_groups)
    m = np.zeros((len(blocks), len(blocks)))
    for j, src in enumerate(blocks):
        gens = generator_groups[src]
        powers = {g: 1.0 / len(gens) for g in gens}
        state = steady_state(network, map_power(powers, network))
        for i, dst in enumerate(blocks):
            cells, weights = network._block(dst)
            m[i, j] = float((state.temperatures_c[cells] - network.ambient_c) @ weights)
    return m


def calibrate_t_table(
    svf_by_increment: dict[float, float],
    original_svf: float,
) -> TTable:
    """Map security levels to increments from a leakage sweep: drop
    increments that leak more than the unshielded baseline, then rank the
    survivors so the highest level gets the lowest leakage. Falls back to
    the default linear table (flagged uncalibrated) if nothing survives."""
    if not svf_by_increment:
        raise ValueError("empty sweep results")
    survivors = {dt: v for dt, v in svf_by_increment.items() if v <= original_svf}
    if not survivors:
        return TTable.default(calibrated=False)
    ranked = sorted(survivors.items(), key=lambda kv: (-kv[1], kv[0]))
    return TTable({level: dt for level, (dt, _) in enumerate(ranked)})


def max_avg_injection(
    block_temp_trace: Trace,
    p_tables: dict[str, PTable],
) -> tuple[Trace, dict[str, bool]]:
    """Maximal-injection baseline: per sample, command the power whose
    calibrated rise lifts the block to its own trace maximum, flattening the
    observation there. Demands beyond the calibrated domain clamp and flag."""
    if block_temp_trace.unit != TraceUnit.CELSIUS:
        raise ValueError("expected a temperature trace")
    out = np.zeros_like(block_temp_trace.values)
    clamped: dict[str, bool] = {}
    for c, block_id in enumerate(block_temp_trace.channels):
        table = p_tables[block_id]
        demand = block_temp_trace.values[:, c].max() - block_temp_trace.values[:, c]
        clamped[block_id] = bool(np.any(demand > table.max_delta_t))
        out[:, c] = np.interp(demand, table.delta_t_c, table.power_w)
    trace = Trace(block_temp_trace.sample_interval_s, block_temp_trace.channels,
                  out, TraceUnit.WATTS)
    return trace, clamped


@dataclass(frozen=True)
class ShieldRunResult:
    cell_temps: Trace
    block_temps: Trace  # true per-protected-block temperatures
    observed: Trace  # attacker-grade per-block observation
    generator_power: Trace  # per generator block
    group_power: Trace  # per protected block (its group total)
    levels: np.ndarray  # [samples x protected], -1 in fixed-increment mode
    t_th: np.ndarray
    t_min: np.ndarray
    t_max: np.ndarray
    p_cap: np.ndarray
    infeasible: np.ndarray
    throttled: np.ndarray  # [samples]


def run_shielded(
    network: ThermalNetwork,
    workload_power: Trace,
    config: ControllerConfig,
    tables: ShieldTables,
    seed: int = 0,
    initial_offset: np.ndarray | None = None,
    obs_noise_std_c: float = 0.0,
    obs_quantization_c: float = 0.0,
    injected_power: Trace | None = None,
) -> ShieldRunResult:
    """Run the closed shielding loop over a workload power trace.

    Per sample: sense each protected block, estimate its unshielded
    temperature, update the range, re-select the threshold at adjustment
    boundaries, command the generator group, then advance the thermal state
    one sample. When any cell exceeded the thermal limit during the previous
    adjustment interval, the demanded security level drops by one for the
    next interval (the thermal-management hook).

    injected_power replays a precomputed command trace (clamped to the
    budget) instead of running the command law; the maximal-injection
    baseline and the budget-zero reproduction both use it.
    """
    if workload_power.unit != TraceUnit.WATTS:
        raise ValueError("workload trace must be in watts")
    protected = tuple(tables.groups)
    gen_ids = tuple(g for b in protected for g in tables.groups[b])
    if len(set(gen_ids)) != len(gen_ids):
        raise ValueError("generator groups must not share generator blocks")

    samples = workload_power.num_samples
    interval = workload_power.sample_interval_s
    w_func = network.block_weight_matrix(workload_power.channels)
    w_gen = network.block_weight_matrix(gen_ids)
    w_prot = network.block_weight_matrix(protected)
    workload_cells = workload_power.values @ w_func

    if injected_power is not None:
        if injected_power.channels != protected or injected_power.num_samples != samples:
            raise ValueError("injected power trace must match protected blocks and samples")

    stepper = TransientStepper(network, interval / config.substeps)
    offset = np.zeros(network.num_cells) if initial_offset is None else initial_offset.copy()
    rng = np.random.default_rng(seed)

    states = {b: BlockShieldState.fresh(config.range_window) for b in protected}
    kp = {
        b: (config.kp if config.kp is not None else tables.p_tables[b].slope_w_per_c())
        for b in protected
    }

    cell_out = np.empty((samples, network.num_cells))
    gen_out = np.zeros((samples, len(gen_ids)))
    group_out = np.zeros((samples, len(protected)))
    levels = np.full((samples, len(protected)), -1, dtype=int)
    t_th_out = np.full((samples, len(protected)), np.nan)
    t_min_out = np.full((samples, len(protected)), np.nan)
    t_max_out = np.full((samples, len(protected)), np.nan)
    p_cap_out = np.zeros((samples, len(protected)))
    infeasible = np.zeros((samples, len(protected)), dtype=bool)
    throttled = np.zeros(samples, dtype=bool)

    gen_slice = {}
    pos = 0
    for b in protected:
        n = len(tables.groups[b])
        gen_slice[b] = slice(pos, pos + n)
        pos += n

    selections: dict[str, ThresholdSelection] = {}
    throttle_pending = False
    limit_hit = False

    for n in range(samples):
        temps_now = offset + network.ambient_c
        at_boundary = n % config.adjustment_interval == 0
        if at_boundary:
            throttle_pending = limit_hit
            limit_hit = False
        throttled[n] = throttle_pending

        block_readings = temps_now @ w_prot.T
        if config.sensor_noise_std_c > 0:
            block_readings = block_readings + rng.normal(
                0.0, config.sensor_noise_std_c, block_readings.shape)
        if config.sensor_quantization_c > 0:
            q = config.sensor_quantization_c
            block_readings = np.round(block_readings / q) * q

        # first pass: estimate, track ranges, (re-)select thresholds
        estimates = np.zeros(len(protected))
        for i, b in enumerate(protected):
            st = states[b]
            table = tables.p_tables[b]
            estimates[i], _ = estimate_block_temp(block_readings[i], st.last_command_w, table)
            update_range(st, estimates[i], config.adjustment_interval)
            if at_boundary or b not in selections:
                demand = config.security_level
                if throttle_pending and config.fixed_delta_t is None:
                    demand = max(0, demand - 1)
                selections[b] = select_threshold(st, config, tables.t_table, table,
                                                 demand_level=demand)
        if at_boundary and config.threshold_scope == "global_max":
            # hide the spatial ordering: every block targets the hottest
            # block's threshold, with the budget re-checked per group
            t_th_global = max(sel.t_th for sel in selections.values())
            for b in protected:
                st = states[b]
                table = tables.p_tables[b]
                p_cap = table.power_for_delta_t(t_th_global - st.t_min)
                sel = selections[b]
                over = p_cap > config.power_budget_w
                selections[b] = replace(
                    sel, t_th=t_th_global,
                    p_cap=min(p_cap, config.power_budget_w),
                    infeasible=sel.infeasible or over)

        # second pass: command the generator groups
        commands = np.zeros(len(protected))
        for i, b in enumerate(protected):
            st = states[b]
            sel = selections[b]
            st.t_th = sel.t_th
            if injected_power is None:
                commands[i] = generator_command(sel.t_th, estimates[i], sel.p_cap,
                                                config, st, kp[b])
            else:
                commands[i] = min(injected_power.values[n, i], config.power_budget_w)
            st.last_command_w = commands[i]
            levels[n, i] = sel.achieved_level
            t_th_out[n, i] = sel.t_th
            t_min_out[n, i] = st.t_min
            t_max_out[n, i] = st.t_max
            p_cap_out[n, i] = sel.p_cap
            infeasible[n, i] = sel.infeasible
            group_out[n, i] = commands[i]
            group = tables.groups[b]
            gen_out[n, gen_slice[b]] = commands[i] / len(group)

        cell_power = workload_cells[n] + gen_out[n] @ w_gen
        offset = stepper.advance(offset, cell_power, config.substeps)
        cell_out[n] = offset + network.ambient_c
        if np.any(cell_out[n] > config.thermal_limit_c):
            limit_hit = True

    cell_trace = Trace(interval, network.cell_names(), cell_out, TraceUnit.CELSIUS)
    block_vals = cell_out @ w_prot.T
    obs_vals = block_vals
    if obs_noise_std_c > 0:
        obs_vals = obs_vals + rng.normal(0.0, obs_noise_std_c, obs_vals.shape)
    if obs_quantization_c > 0:
        obs_vals = np.round(obs_vals / obs_quantization_c) * obs_quantization_c

    return ShieldRunResult(
        cell_temps=cell_trace,
        block_temps=Trace(interval, protected, block_vals, TraceUnit.CELSIUS),
        observed=Trace(interval, protected, obs_vals, TraceUnit.CELSIUS),
        generator_power=Trace(interval, gen_ids, gen_out, TraceUnit.WATTS),
        group_power=Trace(interval, protected, group_out, TraceUnit.WATTS),
        levels=levels,
        t_th=t_th_out,
        t_min=t_min_out,
        t_max=t_max_out,
        p_cap=p_cap_out,
        infeasible=infeasible,
        throttled=throttled,
    )
