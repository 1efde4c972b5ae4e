"""Synthetic per-block instruction traces and the activity-to-power model.

Stands in for a full microarchitectural simulation pipeline: blocks are
driven by named activity patterns (constant, square, sawtooth, burst), and
power is static + energy-per-instruction * rate. The shipped suite of 15
benchmarks spans steady, periodic, bursty and phase-changing behavior.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import Trace, TraceUnit
from .traceio import read_trace_csv

PATTERNS = ("constant", "square", "sawtooth", "burst")


@dataclass(frozen=True)
class Phase:
    """One workload phase: per-block mean rates shaped by a pattern.

    rates maps block id -> mean instructions per sample. period/duty apply
    to square and sawtooth; the burst knobs govern randomly placed episodes
    of burst_level activity over a base_level background (spikes when
    burst_level > base_level, idle gaps when inverted), with per-sample
    jitter inside episodes. offsets shifts a block's pattern origin in
    samples (anti-phase workloads).
    """

    duration: int
    rates: dict[str, float]
    pattern: str = "constant"
    period: int = 32
    duty: float = 0.5
    burst_prob: float = 0.02
    burst_len: int = 6
    burst_level: float = 1.0
    base_level: float = 0.05
    jitter: float = 0.3
    # slow sinusoidal drift added on top of any pattern (low-frequency
    # component, amplitude as a fraction of the rate)
    drift_amp: float = 0.0
    drift_period: int = 400
    # share one burst placement/jitter draw across all blocks (a single
    # program's bursts hitting every unit together, scaled by its rate)
    sync: bool = False
    offsets: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.duration < 1:
            raise ValueError("phase duration must be >= 1 sample")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if self.period < 1 or self.drift_period < 1:
            raise ValueError("periods must be >= 1")
        if not (0.0 < self.duty < 1.0):
            raise ValueError("duty must be in (0, 1)")
        if self.burst_level < 0 or self.base_level < 0 or self.drift_amp < 0:
            raise ValueError("burst/base/drift levels must be >= 0")
        if any(r < 0 for r in self.rates.values()):
            raise ValueError("rates must be >= 0")


@dataclass(frozen=True)
class SynthSpec:
    phases: tuple[Phase, ...]
    seed: int = 0

    @property
    def num_samples(self) -> int:
        return sum(p.duration for p in self.phases)

    def channels(self) -> tuple[str, ...]:
        ids: list[str] = []
        for p in self.phases:
            for b in p.rates:
                if b not in ids:
                    ids.append(b)
        return tuple(ids)


@dataclass(frozen=True)
class PowerModel:
    """P_b(t) = static_b + energy_per_instruction_b * count_b(t) / interval."""

    static_w: dict[str, float]
    energy_per_instruction_j: dict[str, float]

    def __post_init__(self):
        if any(v < 0 for v in self.static_w.values()):
            raise ValueError("static power must be >= 0")
        if any(v < 0 for v in self.energy_per_instruction_j.values()):
            raise ValueError("energy per instruction must be >= 0")


def _phase_block(phase: Phase, block: str, rng: np.random.Generator) -> np.ndarray:
    rate = phase.rates[block]
    t = np.arange(phase.duration) + phase.offsets.get(block, 0)
    drift = 0.0
    if phase.drift_amp > 0:
        drift = rate * phase.drift_amp * 0.5 * (1.0 + np.sin(2 * np.pi * t / phase.drift_period))
    if phase.pattern == "constant":
        return np.full(phase.duration, rate) + drift
    if phase.pattern == "square":
        on = (t % phase.period) < phase.duty * phase.period
        return np.where(on, rate, 0.0) + drift
    if phase.pattern == "sawtooth":
        frac = (t % phase.period) / max(phase.period - 1, 1)
        return rate * frac + drift
    # burst: randomly placed episodes of burst_level activity over a
    # base_level background; episode lengths vary and samples inside an
    # episode jitter, so the trace changes rapidly there and stays smooth
    # in between
    out = np.full(phase.duration, phase.base_level * rate)
    i = 0
    while i < phase.duration:
        if rng.random() < phase.burst_prob:
            length = int(rng.integers(max(1, phase.burst_len // 2), phase.burst_len + 1))
            stop = min(i + length, phase.duration)
            noise = 1.0 + phase.jitter * rng.standard_normal(stop - i)
            out[i:stop] = rate * phase.burst_level * np.clip(noise, 0.0, None)
            i = stop
        else:
            i += 1
    if phase.drift_amp > 0:
        out = out + drift
    return out


def synth_workload(spec: SynthSpec, sample_interval_s: float = 2e-3) -> Trace:
    """Generate the per-block instruction-count trace. Deterministic per
    (spec, seed); the seed only feeds the burst pattern."""
    channels = spec.channels()
    rng = np.random.default_rng(spec.seed)
    rows = []
    for phase in spec.phases:
        vals = np.zeros((phase.duration, len(channels)))
        if phase.sync and phase.pattern == "burst":
            shape = _phase_block(replace(phase, rates={"_": 1.0}), "_", rng)
            for c, block in enumerate(channels):
                if block in phase.rates:
                    vals[:, c] = phase.rates[block] * shape
        else:
            for c, block in enumerate(channels):
                if block in phase.rates:
                    vals[:, c] = _phase_block(phase, block, rng)
        rows.append(vals)
    values = np.vstack(rows)
    return Trace(sample_interval_s, channels, values, TraceUnit.INSTRUCTIONS)


def to_power(inst_trace: Trace, model: PowerModel) -> Trace:
    """Linear activity-proportional power per block."""
    if inst_trace.unit != TraceUnit.INSTRUCTIONS:
        raise ValueError("expected an instruction-count trace")
    static = []
    energy = []
    for ch in inst_trace.channels:
        if ch not in model.static_w or ch not in model.energy_per_instruction_j:
            raise KeyError(f"power model has no entry for block {ch!r}")
        static.append(model.static_w[ch])
        energy.append(model.energy_per_instruction_j[ch])
    static_arr = np.asarray(static)
    energy_arr = np.asarray(energy)
    watts = static_arr + inst_trace.values * energy_arr / inst_trace.sample_interval_s
    return Trace(inst_trace.sample_interval_s, inst_trace.channels, watts, TraceUnit.WATTS)


def load_trace(path, unit: TraceUnit = TraceUnit.INSTRUCTIONS) -> Trace:
    """Ingest a trace CSV (time_s,<channel>,... schema); validation errors
    carry the offending line number."""
    return read_trace_csv(path, unit)


def _spread(base: float, blocks, factors) -> dict[str, float]:
    return {b: base * factors[i % len(factors)] for i, b in enumerate(blocks)}


def benchmark_suite(blocks, samples: int, seed: int = 0):
    """The 15 shipped synthetic benchmarks, instantiated for a block list.

    Per-block rate factors differ so blocks stay spatially distinguishable;
    temporal character is what varies between benchmarks.
    """
    blocks = list(blocks)
    third = max(samples // 3, 1)
    rest = samples - 2 * third

    def ph(**kw) -> Phase:
        return Phase(**kw)

    suite: dict[str, SynthSpec] = {
        # steady: mostly-flat activity with a slow weak ripple so the secret
        # trace is non-degenerate
        "steady_low": SynthSpec((ph(
            duration=samples, rates=_spread(9e5, blocks, (1.0, 0.5, 0.8, 0.3)),
            pattern="square", period=256, duty=0.5),), seed),
        "steady_high": SynthSpec((ph(
            duration=samples, rates=_spread(1.6e6, blocks, (0.7, 1.0, 0.4, 0.9)),
            pattern="square", period=320, duty=0.7),), seed),
        "square_fast": SynthSpec((ph(
            duration=samples, rates=_spread(2.2e6, blocks, (1.0, 0.6, 0.9, 0.4)),
            pattern="square", period=16),), seed),
        "square_slow": SynthSpec((ph(
            duration=samples, rates=_spread(2.4e6, blocks, (0.5, 1.0, 0.3, 0.8)),
            pattern="square", period=128),), seed),
        "saw_fast": SynthSpec((ph(
            duration=samples, rates=_spread(1.5e6, blocks, (1.0, 0.7, 0.5, 0.9)),
            pattern="sawtooth", period=24),), seed),
        "saw_slow": SynthSpec((ph(
            duration=samples, rates=_spread(1.7e6, blocks, (0.6, 0.9, 1.0, 0.4)),
            pattern="sawtooth", period=160),), seed),
        # sparse short spikes over a quiet floor
        "burst_sparse": SynthSpec((ph(
            duration=samples, rates=_spread(1.4e6, blocks, (1.0, 0.4, 0.6, 0.3)),
            pattern="burst", burst_prob=0.01, burst_len=6, base_level=0.1,
            jitter=0.5, sync=True),), seed),
        # sharp spikes riding a pronounced slow drift: rapid changes at the
        # peaks, smooth elsewhere, considerable low-frequency content
        "burst_drift": SynthSpec((ph(
            duration=samples, rates=_spread(1.4e6, blocks, (1.0, 0.2, 0.35, 0.15)),
            pattern="burst", burst_prob=0.015, burst_len=6, base_level=0.15,
            jitter=0.35, drift_amp=0.4, drift_period=450, sync=True),), seed),
        # busy baseline with short idle gaps of varying depth/length
        "burst_gaps": SynthSpec((ph(
            duration=samples, rates=_spread(2.6e6, blocks, (1.0, 0.7, 0.85, 0.55)),
            pattern="burst", burst_prob=0.015, burst_len=10,
            base_level=1.0, burst_level=0.08, jitter=0.4, sync=True),), seed),
        "burst_heavy": SynthSpec((ph(
            duration=samples, rates=_spread(3.2e6, blocks, (1.0, 0.8, 0.9, 0.6)),
            pattern="burst", burst_prob=0.02, burst_len=14,
            base_level=1.0, burst_level=0.06, jitter=0.5, sync=True),), seed),
        "phase_steps": SynthSpec((
            ph(duration=third, rates=_spread(6e5, blocks, (1.0, 0.4, 0.7, 0.5))),
            ph(duration=third, rates=_spread(2.2e6, blocks, (0.5, 1.0, 0.6, 0.8))),
            ph(duration=rest, rates=_spread(1.3e6, blocks, (0.9, 0.6, 1.0, 0.3))),
        ), seed),
        "mixed_periodic": SynthSpec((
            ph(duration=samples // 2, rates=_spread(1.8e6, blocks, (1.0, 0.5, 0.8, 0.6)),
               pattern="square", period=40, duty=0.4),
            ph(duration=samples - samples // 2, rates=_spread(1.6e6, blocks, (0.6, 1.0, 0.5, 0.9)),
               pattern="sawtooth", period=64),
        ), seed),
        "duty_25": SynthSpec((ph(
            duration=samples, rates=_spread(1.0e6, blocks, (0.9, 1.0, 0.5, 0.7)),
            pattern="square", period=48, duty=0.25),), seed),
        "duty_75": SynthSpec((ph(
            duration=samples, rates=_spread(2.4e6, blocks, (0.7, 0.5, 1.0, 0.8)),
            pattern="square", period=48, duty=0.75),), seed),
        "ramp_long": SynthSpec((ph(
            duration=samples, rates=_spread(1.5e6, blocks, (1.0, 0.8, 0.6, 0.9)),
            pattern="sawtooth", period=max(samples // 2, 2)),), seed),
    }
    return suite


BENCHMARK_NAMES = (
    "steady_low", "steady_high", "square_fast", "square_slow", "saw_fast",
    "saw_slow", "burst_sparse", "burst_drift", "burst_gaps", "burst_heavy",
    "phase_steps", "mixed_periodic", "duty_25", "duty_75", "ramp_long",
)
