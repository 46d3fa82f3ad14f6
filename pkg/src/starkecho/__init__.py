"""Stark-modulated photon echo simulation, scanning and fitting."""

from .moments import DipoleSet, LightField, rabi_frequency, total_moment
from .dynamics import (
    FreeParams,
    PulseParams,
    StateMap,
    TwoLevelState,
    free_propagator,
    pulse_propagator,
    reference_evolve,
)
from .echo import EchoEngine, EchoObservables, EchoSequence, EnsembleSpec, StarkPulse, simulate_echo
from .fit import FitModelParams, FitResult, fit_curve, fit_trace, initial_guess, model_eval
from .scan import (
    ModulationMetrics,
    ModulationTrace,
    StarkConfig,
    ZeemanBranchShifts,
    branch_shifts,
    gshift_vs_field,
    modulation_metrics,
    scan,
    zeeman_branch_shifts,
)
from .config import RunConfig
from .io import ExperimentTrace, ingest_csv, read_trace_csv, write_trace_csv

__all__ = [
    "DipoleSet", "LightField", "rabi_frequency", "total_moment",
    "FreeParams", "PulseParams", "StateMap", "TwoLevelState", "free_propagator", "pulse_propagator",
    "reference_evolve",
    "EchoEngine", "EchoObservables", "EchoSequence", "EnsembleSpec", "StarkPulse", "simulate_echo",
    "FitModelParams", "FitResult", "fit_curve", "fit_trace", "initial_guess", "model_eval",
    "ModulationMetrics", "ModulationTrace", "StarkConfig", "ZeemanBranchShifts", "branch_shifts",
    "gshift_vs_field", "modulation_metrics", "scan", "zeeman_branch_shifts",
    "RunConfig", "ExperimentTrace", "ingest_csv", "read_trace_csv", "write_trace_csv",
]
