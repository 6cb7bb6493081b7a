"""Multi-constellation direct-satellite-to-device connectivity simulator.

A deterministic desk-scale model of pooled LEO constellations serving
handheld devices: Walker-shell geometry and coverage, a scalar-beam link
budget, short-horizon CSI prediction, interference-aware power allocation,
pre-configured handover paths on a coverage-window DAG, and traffic-driven
sub-constellation control, with a pooled-vs-standalone evaluation harness.
"""
from .beamforming import BeamAssignment, PowerAllocation, allocate_power, evaluate_rates, point_beams
from .channel import CsiSample, LinkParams, achievable_rate, beam_gain, csi_sample, doppler_shift, free_space_path_loss, sinr
from .constellation import (
    ConstellationEphemeris,
    CoverageSnapshot,
    CoverageWindow,
    GroundPoint,
    OrbitalShell,
    SatelliteOrbit,
    SatelliteState,
    build_walker_shell,
    coverage_windows,
    elevation,
    propagate,
    snapshot,
)
from .control import (
    CoverageIndex,
    LatLonRect,
    Region,
    SubConstellation,
    UeRequirement,
    divide_regions,
    form_sc,
    reconfigure_sc,
)
from .events import Event, EventLog, MetricsReport, UeMetrics
from .handover import (
    HandoverGraph,
    HoMetricWeights,
    HoPath,
    HoProtocolState,
    best_dual_paths,
    best_path,
    build_hgm,
    detect_ping_pong,
    edge_benefit,
    ho_protocol_step,
)
from .prediction import (
    CsiHistory,
    InterferenceMatrix,
    interference_matrix,
    predict_csi_attention,
    predict_csi_ephemeris,
    push_sample,
)
from .scenario import (
    ControlConfig,
    HandoverConfig,
    PredictionConfig,
    Scenario,
    StandaloneConfig,
    populate_ues,
)
from .sim import PositionsCache, SweepRow, compute_metrics, run, sweep

__version__ = "0.1.0"
