"""Scenario files: one YAML document describing die, blocks, workload,
sensors, controller and analysis settings.

Validation is strict: a schema_version field is required and unknown keys
are errors, so configuration drift fails loudly instead of silently doing
nothing. All relative paths resolve against the scenario file's directory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .controller import ControllerConfig
from .model import Block, BlockKind, Floorplan, GridSpec, Layer, LayerStack, Trace, TraceUnit
from .sensors import SensorConfig, SensorMode
from .workload import BENCHMARK_NAMES, Phase, PowerModel, SynthSpec, benchmark_suite, load_trace

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Config/schema problem; message names the file and key."""


def _require_keys(mapping: dict, allowed: set[str], required: set[str], where: str, path) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(f"{path}: {where}: unknown keys {sorted(unknown)}")
    missing = required - set(mapping)
    if missing:
        raise ScenarioError(f"{path}: {where}: missing keys {sorted(missing)}")


def _float(value, where: str, path) -> float:
    if isinstance(value, str):
        # YAML 1.1 only treats exponents with a sign as floats; accept the
        # plain scientific form too
        if value.strip().lower() in ("inf", ".inf", "infinity"):
            return math.inf
        try:
            return float(value)
        except ValueError:
            raise ScenarioError(f"{path}: {where}: expected a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: {where}: expected a number, got {value!r}")
    return float(value)


def _int(value, where: str, path) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}: {where}: expected an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class AnalysisSettings:
    window: int = 1024
    warmup: int = 64
    k_max: int = 20
    stsf_groups: tuple[int, ...] = (1, 2, 4, 8)
    epsilon_c: float = 0.1


@dataclass(frozen=True)
class LayerSweep:
    block: str
    layers: tuple[int, ...]
    sensor_id: str


@dataclass(frozen=True)
class Scenario:
    path: Path
    name: str
    seed: int
    floorplan: Floorplan
    stack: LayerStack
    grid: GridSpec
    power_model: PowerModel
    sample_interval_s: float
    samples: int
    benchmarks: tuple[str, ...]
    phases: tuple[Phase, ...] | None
    trace_csv: Path | None
    sensors: tuple[SensorConfig, ...]
    controller: ControllerConfig
    groups: dict[str, tuple[str, ...]]
    obs_noise_std_c: float
    obs_quantization_c: float
    analysis: AnalysisSettings
    sweep_delta_t: tuple[float, ...]
    calibration_power_levels: tuple[float, ...]
    tables_dir: Path | None
    layer_sweep: LayerSweep | None
    output_dir: Path | None
    raw: dict = field(repr=False, default_factory=dict)

    def workload_trace(self, benchmark: str | None = None) -> Trace:
        """Instruction trace for one benchmark (or the inline/CSV workload)."""
        if self.trace_csv is not None:
            return load_trace(self.trace_csv, TraceUnit.INSTRUCTIONS)
        if self.phases is not None:
            spec = SynthSpec(self.phases, self.seed)
            from .workload import synth_workload
            return synth_workload(spec, self.sample_interval_s)
        if benchmark is None:
            raise ScenarioError(f"{self.path}: workload: benchmark name required")
        blocks = [b.id for b in self.floorplan.blocks if b.kind == BlockKind.FUNCTIONAL]
        suite = benchmark_suite(blocks, self.samples, self.seed)
        if benchmark not in suite:
            raise ScenarioError(f"{self.path}: unknown benchmark {benchmark!r}")
        from .workload import synth_workload
        return synth_workload(suite[benchmark], self.sample_interval_s)


def _parse_blocks(items, path) -> tuple[Block, ...]:
    if not isinstance(items, list) or not items:
        raise ScenarioError(f"{path}: blocks: expected a nonempty list")
    blocks = []
    for i, raw in enumerate(items):
        where = f"blocks[{i}]"
        if not isinstance(raw, dict):
            raise ScenarioError(f"{path}: {where}: expected a mapping")
        _require_keys(raw, {"id", "layer", "rect_mm", "kind"}, {"id", "layer", "rect_mm"},
                      where, path)
        rect = raw["rect_mm"]
        if not (isinstance(rect, list) and len(rect) == 4):
            raise ScenarioError(f"{path}: {where}: rect_mm must be [x0, y0, x1, y1]")
        kind = raw.get("kind", "functional")
        try:
            kind = BlockKind(kind)
        except ValueError:
            raise ScenarioError(f"{path}: {where}: unknown kind {kind!r}") from None
        blocks.append(Block(
            id=str(raw["id"]),
            rect_mm=tuple(_float(v, f"{where}.rect_mm", path) for v in rect),
            layer=_int(raw["layer"], f"{where}.layer", path),
            kind=kind,
        ))
    return tuple(blocks)


def _parse_phase(raw: dict, i: int, path) -> Phase:
    where = f"workload.phases[{i}]"
    allowed = {"duration", "rates", "pattern", "period", "duty",
               "burst_prob", "burst_len", "jitter", "offsets"}
    _require_keys(raw, allowed, {"duration", "rates"}, where, path)
    kwargs = dict(raw)
    kwargs["duration"] = _int(raw["duration"], f"{where}.duration", path)
    kwargs["rates"] = {str(k): _float(v, f"{where}.rates", path)
                       for k, v in raw["rates"].items()}
    if "offsets" in kwargs:
        kwargs["offsets"] = {str(k): _int(v, f"{where}.offsets", path)
                             for k, v in raw["offsets"].items()}
    try:
        return Phase(**kwargs)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{path}: {where}: {e}") from None


def _parse_sensor(raw: dict, i: int, grid: GridSpec, num_layers: int,
                  block_cells: dict[str, list[tuple[int, int, int]]], path) -> SensorConfig:
    where = f"sensors[{i}]"
    allowed = {"id", "mode", "location", "region_blocks", "region_cells", "weights",
               "noise_std_c", "quantization_c", "blur_radius"}
    _require_keys(raw, allowed, {"id", "mode"}, where, path)
    try:
        mode = SensorMode(raw["mode"])
    except ValueError:
        raise ScenarioError(f"{path}: {where}: unknown mode {raw['mode']!r}") from None
    location = None
    if "location" in raw:
        loc = raw["location"]
        if not (isinstance(loc, list) and len(loc) == 3):
            raise ScenarioError(f"{path}: {where}: location must be [layer, row, col]")
        location = tuple(_int(v, f"{where}.location", path) for v in loc)
    region: list[tuple[int, int, int]] = []
    for b in raw.get("region_blocks", []):
        if b not in block_cells:
            raise ScenarioError(f"{path}: {where}: region block {b!r} not in floorplan")
        region.extend(block_cells[b])
    for cell in raw.get("region_cells", []):
        region.append(tuple(_int(v, f"{where}.region_cells", path) for v in cell))
    weights = raw.get("weights")
    try:
        return SensorConfig(
            mode=mode,
            grid=grid,
            num_layers=num_layers,
            location=location,
            region=tuple(region),
            region_weights=tuple(weights) if weights else None,
            noise_std_c=_float(raw.get("noise_std_c", 0.0), where, path),
            quantization_c=_float(raw.get("quantization_c", 0.0), where, path),
            ir_blur_radius=_int(raw.get("blur_radius", 0), where, path),
            sensor_id=str(raw["id"]),
        )
    except ValueError as e:
        raise ScenarioError(f"{path}: {where}: {e}") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"{path}: no such scenario file")
    with open(path, encoding="utf-8") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ScenarioError(f"{path}: {e}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")

    top_allowed = {
        "schema_version", "name", "seed", "die", "layers", "grid", "blocks",
        "power_model", "workload", "sensors", "controller", "observation",
        "analysis", "sweep", "calibration", "tables", "attack", "output_dir",
    }
    _require_keys(doc, top_allowed,
                  {"schema_version", "name", "die", "layers", "grid", "blocks"},
                  "top level", path)
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise ScenarioError(
            f"{path}: schema_version {version!r} unsupported (expected {SCHEMA_VERSION})")

    die = doc["die"]
    _require_keys(die, {"width_mm", "height_mm", "ambient_c",
                        "boundary_resistance_top", "boundary_resistance_bottom"},
                  {"width_mm", "height_mm"}, "die", path)
    layers = []
    for i, raw in enumerate(doc["layers"]):
        where = f"layers[{i}]"
        _require_keys(raw, {"thickness_m", "conductivity_w_mk", "volumetric_heat_capacity"},
                      {"thickness_m", "conductivity_w_mk", "volumetric_heat_capacity"},
                      where, path)
        layers.append(Layer(
            thickness_m=_float(raw["thickness_m"], where, path),
            conductivity_w_mk=_float(raw["conductivity_w_mk"], where, path),
            volumetric_heat_capacity=_float(raw["volumetric_heat_capacity"], where, path),
        ))
    try:
        stack = LayerStack(
            layers=tuple(layers),
            die_width_mm=_float(die["width_mm"], "die.width_mm", path),
            die_height_mm=_float(die["height_mm"], "die.height_mm", path),
            ambient_c=_float(die.get("ambient_c", 45.0), "die.ambient_c", path),
            boundary_resistance_top=_float(die.get("boundary_resistance_top", 1e-5),
                                           "die.boundary_resistance_top", path),
            boundary_resistance_bottom=_float(die.get("boundary_resistance_bottom", 1e-5),
                                              "die.boundary_resistance_bottom", path),
        )
    except ValueError as e:
        raise ScenarioError(f"{path}: die/layers: {e}") from None

    grid_raw = doc["grid"]
    _require_keys(grid_raw, {"rows", "cols"}, {"rows", "cols"}, "grid", path)
    grid = GridSpec(_int(grid_raw["rows"], "grid.rows", path),
                    _int(grid_raw["cols"], "grid.cols", path))

    blocks = _parse_blocks(doc["blocks"], path)
    floorplan = Floorplan(blocks, stack.die_width_mm, stack.die_height_mm, stack.num_layers)

    pm_raw = doc.get("power_model", {})
    static = {}
    energy = {}
    for bid, entry in pm_raw.items():
        _require_keys(entry, {"static_w", "energy_per_instruction_j"}, set(),
                      f"power_model.{bid}", path)
        static[str(bid)] = _float(entry.get("static_w", 0.0), f"power_model.{bid}", path)
        energy[str(bid)] = _float(entry.get("energy_per_instruction_j", 0.0),
                                  f"power_model.{bid}", path)
    power_model = PowerModel(static, energy)

    wl = doc.get("workload", {})
    _require_keys(wl, {"sample_interval_s", "samples", "benchmarks", "phases", "trace_csv"},
                  set(), "workload", path)
    sample_interval = _float(wl.get("sample_interval_s", 2e-3), "workload.sample_interval_s", path)
    samples = _int(wl.get("samples", 2000), "workload.samples", path)
    benchmarks_raw = wl.get("benchmarks")
    if benchmarks_raw is None:
        benchmarks: tuple[str, ...] = ()
    elif benchmarks_raw == "suite":
        benchmarks = BENCHMARK_NAMES
    elif isinstance(benchmarks_raw, str):
        benchmarks = (benchmarks_raw,)
    else:
        benchmarks = tuple(str(b) for b in benchmarks_raw)
    phases = None
    if "phases" in wl:
        phases = tuple(_parse_phase(p, i, path) for i, p in enumerate(wl["phases"]))
    trace_csv = None
    if "trace_csv" in wl:
        trace_csv = (path.parent / wl["trace_csv"]).resolve()
        if not trace_csv.exists():
            raise ScenarioError(f"{path}: workload.trace_csv: no such file {trace_csv}")

    # cell coverage for builtin sensor regions defined by block names
    block_cell_map: dict[str, list[tuple[int, int, int]]] = {}
    xs = [stack.die_width_mm * c / grid.cols for c in range(grid.cols + 1)]
    ys = [stack.die_height_mm * r / grid.rows for r in range(grid.rows + 1)]
    for b in blocks:
        covered = []
        x0, y0, x1, y1 = b.rect_mm
        for r in range(grid.rows):
            if min(y1, ys[r + 1]) - max(y0, ys[r]) <= 0:
                continue
            for c in range(grid.cols):
                if min(x1, xs[c + 1]) - max(x0, xs[c]) > 0:
                    covered.append((b.layer, r, c))
        block_cell_map[b.id] = covered

    sensors = tuple(
        _parse_sensor(raw, i, grid, stack.num_layers, block_cell_map, path)
        for i, raw in enumerate(doc.get("sensors", []))
    )

    ctl = doc.get("controller", {})
    ctl_allowed = {"security_level", "adjustment_interval", "range_window", "mode",
                   "kp", "ki", "kd", "power_budget_w", "thermal_limit_c",
                   "threshold_scope", "substeps", "sensor_noise_std_c",
                   "sensor_quantization_c", "groups"}
    _require_keys(ctl, ctl_allowed, set(), "controller", path)
    groups: dict[str, tuple[str, ...]] = {}
    known = {b.id for b in blocks}
    for bid, gens in ctl.get("groups", {}).items():
        if bid not in known:
            raise ScenarioError(f"{path}: controller.groups: unknown block {bid!r}")
        gen_tuple = tuple(str(g) for g in gens)
        for g in gen_tuple:
            if g not in known:
                raise ScenarioError(f"{path}: controller.groups.{bid}: unknown generator {g!r}")
        groups[str(bid)] = gen_tuple
    ctl_kwargs = {k: v for k, v in ctl.items() if k != "groups"}
    if "thermal_limit_c" in ctl_kwargs:
        ctl_kwargs["thermal_limit_c"] = _float(ctl_kwargs["thermal_limit_c"],
                                               "controller.thermal_limit_c", path)
    try:
        controller = ControllerConfig(**ctl_kwargs)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{path}: controller: {e}") from None

    obs = doc.get("observation", {})
    _require_keys(obs, {"noise_std_c", "quantization_c"}, set(), "observation", path)

    an = doc.get("analysis", {})
    _require_keys(an, {"window", "warmup", "k_max", "stsf_groups", "epsilon_c"},
                  set(), "analysis", path)
    analysis = AnalysisSettings(
        window=_int(an.get("window", 1024), "analysis.window", path),
        warmup=_int(an.get("warmup", 64), "analysis.warmup", path),
        k_max=_int(an.get("k_max", 20), "analysis.k_max", path),
        stsf_groups=tuple(an.get("stsf_groups", (1, 2, 4, 8))),
        epsilon_c=_float(an.get("epsilon_c", 0.1), "analysis.epsilon_c", path),
    )

    sweep_raw = doc.get("sweep", {})
    _require_keys(sweep_raw, {"delta_t"}, set(), "sweep", path)
    sweep = tuple(_float(v, "sweep.delta_t", path) for v in sweep_raw.get(
        "delta_t", (3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0)))

    cal = doc.get("calibration", {})
    _require_keys(cal, {"power_levels"}, set(), "calibration", path)
    power_levels = tuple(_float(v, "calibration.power_levels", path)
                         for v in cal.get("power_levels",
                                          (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0)))

    tables_dir = None
    if "tables" in doc:
        _require_keys(doc["tables"], {"dir"}, {"dir"}, "tables", path)
        tables_dir = (path.parent / doc["tables"]["dir"]).resolve()

    layer_sweep = None
    if "attack" in doc:
        _require_keys(doc["attack"], {"layer_sweep"}, set(), "attack", path)
        if "layer_sweep" in doc["attack"]:
            ls = doc["attack"]["layer_sweep"]
            _require_keys(ls, {"block", "layers", "sensor"}, {"block", "layers", "sensor"},
                          "attack.layer_sweep", path)
            layer_sweep = LayerSweep(
                block=str(ls["block"]),
                layers=tuple(_int(v, "attack.layer_sweep.layers", path) for v in ls["layers"]),
                sensor_id=str(ls["sensor"]),
            )

    output_dir = (path.parent / doc["output_dir"]).resolve() if "output_dir" in doc else None

    return Scenario(
        path=path,
        name=str(doc["name"]),
        seed=_int(doc.get("seed", 0), "seed", path),
        floorplan=floorplan,
        stack=stack,
        grid=grid,
        power_model=power_model,
        sample_interval_s=sample_interval,
        samples=samples,
        benchmarks=benchmarks,
        phases=phases,
        trace_csv=trace_csv,
        sensors=sensors,
        controller=controller,
        groups=groups,
        obs_noise_std_c=_float(obs.get("noise_std_c", 0.0), "observation.noise_std_c", path),
        obs_quantization_c=_float(obs.get("quantization_c", 0.0),
                                  "observation.quantization_c", path),
        analysis=analysis,
        sweep_delta_t=sweep,
        calibration_power_levels=power_levels,
        tables_dir=tables_dir,
        layer_sweep=layer_sweep,
        output_dir=output_dir,
        raw=doc,
    )
