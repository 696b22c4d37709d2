"""
Scenario ingestion and result export.

  • series.py:    CSV time series read as step functions
  • scenario.py:  scenario documents resolved into model inputs
  • export.py:    plot-ready CSV / JSON writers
  • manifest.py:  reproducibility manifests with input hashes
"""
from .export import (
    RUN_COLUMNS,
    write_chain_coo,
    write_csv,
    write_json,
    write_mdp_solution,
    write_power_flow,
    write_run,
    write_sensitivities,
)
from .manifest import RunManifest, file_sha256, load_manifest
from .scenario import Scenario, load_scenario
from .series import read_injections_csv, read_series_csv, step_scalar, step_values

__all__ = [
    "RUN_COLUMNS",
    "RunManifest",
    "Scenario",
    "file_sha256",
    "load_manifest",
    "load_scenario",
    "read_injections_csv",
    "read_series_csv",
    "step_scalar",
    "step_values",
    "write_chain_coo",
    "write_csv",
    "write_json",
    "write_mdp_solution",
    "write_power_flow",
    "write_sensitivities",
]
