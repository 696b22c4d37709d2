"""Shared fixtures: shipped data paths and a coarse copy of the cloud-dip scenario."""
import os
import json
from typing import Optional

import pytest

DATA = os.path.join(os.path.dirname(__file__), "..", "markovgrid", "data")
CLOUD_DIP = os.path.join(DATA, "cloud_dip")


def write_coarse_scenario(
    directory, dx: float = 0.5, horizon: int = 3, steps: int = 4, agents: Optional[int] = None
) -> str:
    """
    The cloud-dip inputs on a coarse chain and a short horizon, paths made
    absolute.  ``agents`` rewrites the agent count of every TCL population
    in a private copy of the feeder.
    """
    with open(os.path.join(CLOUD_DIP, "scenario.json"), encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("loads", "irradiance", "reference"):
        doc[key] = os.path.abspath(os.path.join(CLOUD_DIP, doc[key]))
    doc["feeder"] = os.path.abspath(os.path.join(DATA, "feeder_12.json"))
    doc["tcl_params"] = os.path.abspath(os.path.join(DATA, "tcl_params.json"))
    doc["name"] = "cloud_dip_coarse"
    doc["steps"] = steps
    doc["config"]["horizon"] = horizon
    for pop in doc["populations"]:
        pop["dx"] = dx
    if agents is not None:
        with open(doc["feeder"], encoding="utf-8") as fh:
            feeder = json.load(fh)
        for device in feeder["devices"]:
            if device["kind"] == "tcl":
                device["agents"] = agents
        doc["feeder"] = os.path.join(str(directory), "feeder.json")
        with open(doc["feeder"], "w", encoding="utf-8") as fh:
            json.dump(feeder, fh)
    path = os.path.join(str(directory), "scenario.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    return path


@pytest.fixture
def coarse_scenario_path(tmp_path) -> str:
    return write_coarse_scenario(tmp_path)


@pytest.fixture
def coarse_scenario_factory(tmp_path_factory):
    """Build further coarse scenarios, each in its own directory."""
    def make(**overrides) -> str:
        return write_coarse_scenario(tmp_path_factory.mktemp("scenario"), **overrides)
    return make
