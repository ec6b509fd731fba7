"""Simulator and statistics toolkit for AFC-DLCZ time-bin entanglement."""

__version__ = "0.1.0"

from .config import (
    AnalyzerSetting,
    ExperimentConfig,
    LeakagePeak,
    SpinDecoherence,
    load_config,
    phase_from_detuning,
    save_config,
    validate_config,
)
from .analytic import (
    predict_chsh,
    predict_fringe,
    predict_g2,
    predict_histogram,
    predict_visibility,
    stokes_probability,
    thermal_distribution,
)
from .mc import run_experiment, run_trial
from .analysis import (
    build_histogram,
    compute_E,
    compute_S,
    fit_fringe,
    g2_estimate,
    scan_binsize,
    scan_g2_vs_width,
    scan_window,
)
from .tags import TagStream, TimeTag, read_tags, write_tags

__all__ = [
    "AnalyzerSetting",
    "ExperimentConfig",
    "LeakagePeak",
    "SpinDecoherence",
    "TagStream",
    "TimeTag",
    "build_histogram",
    "compute_E",
    "compute_S",
    "fit_fringe",
    "g2_estimate",
    "load_config",
    "phase_from_detuning",
    "predict_chsh",
    "predict_fringe",
    "predict_g2",
    "predict_histogram",
    "predict_visibility",
    "read_tags",
    "run_experiment",
    "run_trial",
    "save_config",
    "scan_binsize",
    "scan_g2_vs_width",
    "scan_window",
    "stokes_probability",
    "thermal_distribution",
    "validate_config",
    "write_tags",
]
