"""Graph-spectral detection of false data injection attacks on grid states.

The pipeline: build the grid's admittance matrix as a complex weighted
Laplacian, split it into two real Laplacians, transform the estimated
voltage state into the graph-frequency domain, high-pass filter, and
compare the peak filtered component against thresholds calibrated on
historic clean states.
"""

from .grid_model import (
    Bus,
    CaseError,
    GridCase,
    LaplacianPair,
    Line,
    build_admittance_ac,
    build_admittance_dc,
    bundled_case,
    decompose,
    load_case,
    parse_case,
)
from .power_flow import (
    ComplexState,
    PowerFlowError,
    SolverOptions,
    injections_from_state,
    solve_ac,
    solve_dc,
    state_from_dict,
    state_to_dict,
)
from .state_attack import (
    AttackSpec,
    AttackTarget,
    LoadScenarioSpec,
    NoiseSpec,
    apply_attack,
    apply_noise,
    make_historic,
    random_scenarios,
)
from .spectral import (
    CutoffError,
    FilterDesignError,
    GhpfDesign,
    SpectralBasis,
    design_poly_filter,
    filter_and_stat,
    filter_vertex,
    gft,
    igft,
    select_cutoff,
    spectral_basis,
    total_variation,
)
from .detector import (
    DetectionReport,
    DetectorModel,
    baseline_norm,
    baseline_residual,
    calibrate,
    calibrate_dc,
    detect,
    detect_dc,
    detect_smoothness,
    threshold_for_false_alarm,
)
from .experiments import (
    CurvePoint,
    ExperimentConfig,
    run_compare,
    run_tc1,
    run_tc2,
    run_tc3,
    run_tc4,
)

__version__ = "0.1.0"

__all__ = [
    "AttackSpec", "AttackTarget", "Bus", "CaseError", "ComplexState",
    "CurvePoint", "CutoffError", "DetectionReport", "DetectorModel",
    "ExperimentConfig", "FilterDesignError", "GhpfDesign", "GridCase",
    "LaplacianPair", "Line", "LoadScenarioSpec", "NoiseSpec",
    "PowerFlowError", "SolverOptions", "SpectralBasis",
    "apply_attack", "apply_noise", "baseline_norm", "baseline_residual",
    "build_admittance_ac", "build_admittance_dc", "bundled_case",
    "calibrate", "calibrate_dc", "decompose", "design_poly_filter",
    "detect", "detect_dc", "detect_smoothness", "filter_and_stat",
    "filter_vertex", "gft", "igft", "injections_from_state", "load_case",
    "make_historic", "parse_case", "random_scenarios", "run_compare",
    "run_tc1", "run_tc2", "run_tc3", "run_tc4", "select_cutoff",
    "solve_ac", "solve_dc", "spectral_basis", "state_from_dict",
    "state_to_dict", "threshold_for_false_alarm", "total_variation",
]
