"""Thermal side-channel leakage simulation and closed-loop shielding."""

from .controller import (
    ControllerConfig,
    PTable,
    ShieldTables,
    TTable,
    calibrate_p_table,
    calibrate_t_table,
    estimate_block_temp,
    generator_command,
    max_avg_injection,
    run_shielded,
    select_threshold,
    update_range,
)
from .metrics import (
    SvfReport,
    StsfReport,
    best_delay,
    effective_groups,
    group_blocks,
    mpu,
    pearson,
    power_overhead,
    scaled_svf,
    similarity_vector,
    standardized_euclidean,
    stsf,
    svf,
)
from .model import (
    Block,
    BlockKind,
    Floorplan,
    GridSpec,
    Layer,
    LayerStack,
    Trace,
    TraceUnit,
    resample,
    validate_floorplan,
)
from .sensors import SensorConfig, SensorMode, layer_attenuation_experiment, observe
from .thermal import (
    ThermalNetwork,
    ThermalState,
    block_temperature,
    block_temperature_trace,
    build_network,
    map_power,
    steady_state,
    transient,
)
from .workload import PowerModel, Phase, SynthSpec, benchmark_suite, load_trace, synth_workload, to_power

__version__ = "0.1.0"
