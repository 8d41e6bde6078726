"""Experiment harness: spec files, nonlinearity registry, pipelines and CLI."""

from .experiments import (criterion_vs_probe, lima_counterexample_check, run_experiment,
                          run_experiments, stability_probe)
from .registry import available, build_nonlinearity
from .specfile import ExperimentSpec, SpecError, load_spec, parse_spec

__all__ = [
    "ExperimentSpec",
    "SpecError",
    "available",
    "build_nonlinearity",
    "criterion_vs_probe",
    "lima_counterexample_check",
    "load_spec",
    "parse_spec",
    "run_experiment",
    "run_experiments",
    "stability_probe",
]
