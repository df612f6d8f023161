"""Declarative experiment harness: configs, replicated runs, aggregation, plot tables."""

from coalsim.harness.config import (ConfigError, ExperimentSpec, evaluate, load_config,
                                    load_grid)
from coalsim.harness.observers import OBSERVERS
from coalsim.harness.runner import (ScalingReport, emit_plot_data, replicate_and_aggregate,
                                    run_experiment)

__all__ = ["ConfigError", "ExperimentSpec", "evaluate", "load_config", "load_grid", "OBSERVERS",
           "ScalingReport", "emit_plot_data", "replicate_and_aggregate", "run_experiment",
           "cookbook_path", "cookbook_configs"]


def cookbook_path(name: str):
    """Path of a bundled config, e.g. ``cookbook_path("c07_long_time_d3")``."""
    from importlib.resources import files

    p = files("coalsim.harness") / "cookbook" / (name if name.endswith(".ini") else name + ".ini")
    if not p.is_file():
        raise FileNotFoundError(name)
    return p


def cookbook_configs() -> list:
    from importlib.resources import files

    d = files("coalsim.harness") / "cookbook"
    return sorted(p for p in d.iterdir() if p.name.endswith(".ini"))
