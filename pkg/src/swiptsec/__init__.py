"""Secrecy sum-rate optimization testbed for an amplifying-surface SWIPT link.

Submodules: channel (fading and surface composition), sysmodel (rates, power,
harvesting), wmmse (rate reformulation), conic (convex subproblem solvers),
bcd (block-coordinate optimizer), lowcx (three-stage zero-forcing optimizer),
baselines (passive/surface-free/rate-max schemes), harness (experiments, CLI).
"""

from .channel import ChannelSet, DelayProfile, Geometry, build_channel_set, effective_cfr
from .sysmodel import DesignPoint, FeasibilityReport, SystemParams, check_feasibility, secrecy_sum_rate
from .bcd import BcdConfig, BcdResult, run_bcd
from .lowcx import LowcxConfig, LowcxResult, run_lowcomplexity
from .baselines import RunRecord, SchemeSpec, run_scheme
from .harness import ExperimentConfig, load_config, run_experiment, summarize, write_csv

__all__ = [
    "ChannelSet", "DelayProfile", "Geometry", "build_channel_set", "effective_cfr",
    "DesignPoint", "FeasibilityReport", "SystemParams", "check_feasibility",
    "secrecy_sum_rate", "BcdConfig", "BcdResult", "run_bcd", "LowcxConfig",
    "LowcxResult", "run_lowcomplexity", "RunRecord", "SchemeSpec", "run_scheme",
    "ExperimentConfig", "load_config", "run_experiment", "summarize", "write_csv",
]

__version__ = "0.1.0"
