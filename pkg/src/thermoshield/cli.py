"""Command-line surface.

Subcommands: simulate (unshielded baseline), calibrate (lookup tables),
shield (closed-loop runs + metrics summary), analyze (metrics over trace
CSVs), attack (sensor observations and what each attack mode achieves),
report (charts + aggregate CSV over finished runs).

Exit codes: 0 success, 1 validation/configuration error, 2 runtime failure.
All outputs are deterministic for identical inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from .controller import PTable, ShieldTables, TTable
from .metrics import best_delay, effective_groups, stsf, svf
from .model import Trace, TraceUnit
from .scenario import Scenario, ScenarioError, load_scenario
from .sensors import layer_attenuation_experiment, observe
from .traceio import (
    TraceSchemaError,
    read_p_table_csv,
    read_t_table_csv,
    read_trace_csv,
    write_columns_csv,
    write_p_table_csv,
    write_summary_csv,
    write_t_table_csv,
    write_trace_csv,
)


class CliError(ValueError):
    """User-facing validation problem (exit code 1)."""


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        scenario = replace(scenario, seed=args.seed)
    if getattr(args, "security_level", None) is not None:
        scenario = replace(scenario,
                           controller=replace(scenario.controller,
                                              security_level=args.security_level))
    return scenario


def _out_dir(args, scenario: Scenario) -> Path:
    if args.out:
        return Path(args.out)
    if scenario.output_dir is not None:
        return scenario.output_dir
    raise CliError("no output directory: pass --out or set output_dir in the scenario")


def _benchmarks(scenario: Scenario) -> list[str]:
    if scenario.trace_csv is not None or scenario.phases is not None:
        return [scenario.name]
    if not scenario.benchmarks:
        raise CliError(f"{scenario.path}: workload.benchmarks is empty")
    return list(scenario.benchmarks)


def _levels_trace_csv(path, levels: np.ndarray, channels, interval: float) -> None:
    header = ["time_s"] + list(channels)
    rows = []
    for i in range(levels.shape[0]):
        rows.append([i * interval] + [int(v) for v in levels[i]])
    write_columns_csv(path, header, rows)


def cmd_simulate(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario)
    network = pipeline.build_scenario_network(scenario)
    for name in _benchmarks(scenario):
        run = pipeline.run_baseline(scenario, network,
                                    None if name == scenario.name else name)
        run_dir = out / name
        write_trace_csv(run_dir / "cell_temps.csv", run.cell_temps)
        write_trace_csv(run_dir / "block_temps.csv", run.block_temps)
        print(f"{name}: {run.cell_temps.num_samples} samples, "
              f"k*={run.best_k}, svf={run.svf_report.svf:+.4f}")
    return 0


def cmd_calibrate(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario)
    network = pipeline.build_scenario_network(scenario)
    tables, sweep_rows = pipeline.calibrate_scenario(scenario, network)
    for block, table in tables.p_tables.items():
        write_p_table_csv(out / f"ptable_{block}.csv", table.delta_t_c, table.power_w)
    write_t_table_csv(out / "ttable.csv", tables.t_table.entries)
    write_columns_csv(out / "svf_by_increment.csv",
                      ("benchmark", "setting", "delta_t_c", "svf", "abs_svf"),
                      [(r["benchmark"], r["setting"], r["delta_t_c"], r["svf"], r["abs_svf"])
                       for r in sweep_rows])
    flag = "" if tables.t_table.calibrated else " (uncalibrated fallback)"
    print(f"wrote {len(tables.p_tables)} power tables and "
          f"{len(tables.t_table.entries)}-level security table{flag} to {out}")
    return 0


def load_tables(scenario: Scenario, tables_dir) -> ShieldTables:
    tables_dir = Path(tables_dir)
    if not tables_dir.exists():
        raise CliError(f"tables directory {tables_dir} does not exist; run calibrate first")
    p_tables = {}
    for block in scenario.groups:
        path = tables_dir / f"ptable_{block}.csv"
        dts, pws = read_p_table_csv(path)
        p_tables[block] = PTable(dts, pws)
    entries = read_t_table_csv(tables_dir / "ttable.csv")
    return ShieldTables(TTable(entries), p_tables, scenario.groups)


def cmd_shield(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario)
    network = pipeline.build_scenario_network(scenario)
    tables_dir = args.tables or scenario.tables_dir
    if tables_dir is None:
        raise CliError("no tables: pass --tables <dir> or set tables.dir in the scenario")
    tables = load_tables(scenario, tables_dir)
    max_dt = max(scenario.sweep_delta_t)
    for block, table in tables.p_tables.items():
        if args.sweep and table.max_delta_t < max_dt:
            raise CliError(f"table for {block!r} covers {table.max_delta_t:.2f} degC "
                           f"but the sweep needs {max_dt:.2f}")

    summary = []
    for name in _benchmarks(scenario):
        baseline = pipeline.run_baseline(scenario, network,
                                         None if name == scenario.name else name)
        summary.append(pipeline.baseline_row(scenario, baseline))
        ma_run = pipeline.run_max_avg(scenario, network, tables, baseline)

        settings: list[tuple[str, object]] = []
        if args.sweep:
            for dt in scenario.sweep_delta_t:
                settings.append((f"shield_{dt:g}",
                                 pipeline.shield_config(scenario, fixed_delta_t=dt)))
        else:
            level = scenario.controller.security_level
            settings.append((f"level_{level}", pipeline.shield_config(scenario)))
        for setting, config in settings:
            run = pipeline.run_shield_setting(scenario, network, tables, baseline,
                                              setting, config)
            row = pipeline.evaluate_run(scenario, baseline, run.observed,
                                        run.group_power, ma_run.group_power)
            row.update({"benchmark": name, "setting": setting})
            summary.append(row)
            run_dir = out / name / setting
            write_trace_csv(run_dir / "observed_temps.csv", run.observed)
            write_trace_csv(run_dir / "generator_power.csv", run.generator_power)
            write_trace_csv(run_dir / "block_temps.csv", run.block_temps)
            write_trace_csv(run_dir / "cell_temps.csv", run.cell_temps)
            _levels_trace_csv(run_dir / "achieved_levels.csv", run.levels,
                              run.observed.channels, run.observed.sample_interval_s)
        if args.max_avg:
            row = pipeline.evaluate_run(scenario, baseline, ma_run.observed,
                                        ma_run.group_power, ma_run.group_power)
            row.update({"benchmark": name, "setting": "max_avg"})
            summary.append(row)
            run_dir = out / name / "max_avg"
            write_trace_csv(run_dir / "observed_temps.csv", ma_run.observed)
            write_trace_csv(run_dir / "generator_power.csv", ma_run.generator_power)
            write_trace_csv(run_dir / "cell_temps.csv", ma_run.cell_temps)
        print(f"{name}: {len(settings)} shielded run(s) done")
    write_summary_csv(out / "summary.csv", summary)
    print(f"summary: {out / 'summary.csv'}")
    return 0


def cmd_analyze(args) -> int:
    inst = read_trace_csv(args.inst_csv, TraceUnit.INSTRUCTIONS)
    temp = read_trace_csv(args.temp_csv, TraceUnit.CELSIUS)
    warmup = args.warmup
    k_max = args.k_max
    stop = min(inst.num_samples, temp.num_samples - k_max, warmup + args.window)
    if stop - warmup < 3:
        raise CliError(f"analysis window too small ({warmup}..{stop})")
    k, rep = best_delay(inst, temp, k_max, (warmup, stop))
    n = temp.num_channels
    means = {c: float(temp.channel(c)[warmup:].mean()) for c in temp.channels}
    m_eff = effective_groups(means, args.epsilon)
    stsf_rows = [(m, stsf(n, m).stsf) for m in args.stsf_groups if n % m == 0]
    result = {
        "delay_k": k,
        "svf": rep.svf,
        "abs_svf": rep.abs_svf,
        "num_pairs": rep.num_pairs,
        "zero_variance": rep.zero_variance,
        "blocks": n,
        "m_eff": m_eff,
        "stsf_at_m_eff": stsf(n, m_eff).stsf,
        "stsf_by_m": {str(m): v for m, v in stsf_rows},
    }
    out = Path(args.out) if args.out else None
    if args.format == "json":
        text = json.dumps(result, indent=2, sort_keys=True) + "\n"
        if out:
            out.mkdir(parents=True, exist_ok=True)
            (out / "analysis.json").write_text(text)
        print(text, end="")
    else:
        rows = [("delay_k", k), ("svf", rep.svf), ("abs_svf", rep.abs_svf),
                ("num_pairs", rep.num_pairs), ("zero_variance", int(rep.zero_variance)),
                ("blocks", n), ("m_eff", m_eff), ("stsf_at_m_eff", stsf(n, m_eff).stsf)]
        rows += [(f"stsf_m{m}", v) for m, v in stsf_rows]
        if out:
            write_columns_csv(out / "analysis.csv", ("metric", "value"), rows)
            print(f"wrote {out / 'analysis.csv'}")
        for k_, v in rows:
            print(f"{k_},{v}")
    return 0


def cmd_attack(args) -> int:
    scenario = _load(args)
    out = _out_dir(args, scenario)
    network = pipeline.build_scenario_network(scenario)
    wanted = set(args.sensors.split(",")) if args.sensors else None
    sensors = [s for s in scenario.sensors if wanted is None or s.sensor_id in wanted]
    if wanted:
        missing = wanted - {s.sensor_id for s in sensors}
        if missing:
            raise CliError(f"unknown sensors: {sorted(missing)}")
    rows = []
    for name in _benchmarks(scenario):
        baseline = pipeline.run_baseline(scenario, network,
                                         None if name == scenario.name else name)
        window = pipeline.analysis_window(scenario, baseline.inst.num_samples)
        for sensor in sensors:
            obs = observe(baseline.cell_temps, sensor,
                          seed=pipeline.derived_seed_int(scenario.seed, name,
                                                         sensor.sensor_id))
            write_trace_csv(out / name / f"obs_{sensor.sensor_id}.csv", obs)
            k, rep = best_delay(baseline.inst, obs, scenario.analysis.k_max, window)
            rows.append((name, sensor.sensor_id, sensor.mode.value, k,
                         rep.svf, rep.abs_svf))
        print(f"{name}: {len(sensors)} sensor observations")
    write_columns_csv(out / "attack_summary.csv",
                      ("benchmark", "sensor", "mode", "delay_k", "svf", "abs_svf"),
                      rows)

    if scenario.layer_sweep is not None:
        sweep = scenario.layer_sweep
        sensor = next((s for s in scenario.sensors if s.sensor_id == sweep.sensor_id), None)
        if sensor is None:
            raise CliError(f"layer sweep names unknown sensor {sweep.sensor_id!r}")
        block = scenario.floorplan.block(sweep.block)
        pruned = type(scenario.floorplan)(
            (block,), scenario.floorplan.die_width_mm,
            scenario.floorplan.die_height_mm, scenario.floorplan.num_layers)
        att_rows = []
        for name in _benchmarks(scenario):
            inst = scenario.workload_trace(None if name == scenario.name else name)
            power = pipeline.to_power(inst.select((sweep.block,)), scenario.power_model)
            result = layer_attenuation_experiment(
                pruned, scenario.stack, scenario.grid, sweep.block, sweep.layers,
                power, sensor, k_max=scenario.analysis.k_max,
                seed=pipeline.derived_seed_int(scenario.seed, name, "layer-sweep"))
            for layer in sweep.layers:
                rep = result.per_layer[layer]
                att_rows.append((name, layer, rep.delay_k, rep.svf, rep.abs_svf))
        write_columns_csv(out / "layer_attenuation.csv",
                          ("benchmark", "layer", "delay_k", "svf", "abs_svf"),
                          att_rows)
        print(f"layer attenuation table: {out / 'layer_attenuation.csv'}")
    return 0


def cmd_report(args) -> int:
    from .report import write_report

    grid_rows = grid_cols = None
    for d in args.run_dirs:
        cell = Path(d) / "cell_temps.csv"
        if cell.exists():
            with open(cell, encoding="utf-8") as f:
                header = f.readline().strip().split(",")[1:]
            coords = [re.match(r"L(\d+)R(\d+)C(\d+)$", h) for h in header]
            if all(coords):
                grid_rows = max(int(m.group(2)) for m in coords) + 1
                grid_cols = max(int(m.group(3)) for m in coords) + 1
            break
    written = write_report(args.run_dirs, args.out, grid_rows, grid_cols)
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoshield",
        description="thermal side-channel simulation and shielding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p, seed=True):
        p.add_argument("--scenario", required=True, help="scenario YAML path")
        p.add_argument("--out", help="output directory")
        if seed:
            p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("simulate", help="unshielded baseline run")
    scenario_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="build power and security-level tables")
    scenario_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("shield", help="closed-loop shielded runs + metrics")
    scenario_flags(p)
    p.add_argument("--tables", help="directory with calibrated tables")
    p.add_argument("--security-level", type=int, help="override requested level")
    p.add_argument("--sweep", action="store_true",
                   help="sweep the configured temperature increments")
    p.add_argument("--max-avg", action="store_true",
                   help="emit the maximal-injection baseline run")
    p.set_defaults(func=cmd_shield)

    p = sub.add_parser("analyze", help="metrics over instruction/temperature CSVs")
    p.add_argument("inst_csv")
    p.add_argument("temp_csv")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--window", type=int, default=1024)
    p.add_argument("--warmup", type=int, default=64)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--stsf-groups", type=int, nargs="+", default=[1, 2, 4, 8])
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("attack", help="attacker observations per sensor")
    scenario_flags(p)
    p.add_argument("--sensors", help="comma-separated sensor ids (default: all)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="charts + aggregate CSV from run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ScenarioError, TraceSchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
