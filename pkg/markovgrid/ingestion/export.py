"""
Plot-ready CSV / JSON output for CLI runs.

Run directories hold substation.csv, voltages.csv, tcl.csv, solver.csv,
summary.json and manifest.json.  Floats are written with a fixed format so
that two runs with the same seed produce identical files.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp

if TYPE_CHECKING:
    from ..grid import PowerFlowSolution, Sensitivities, SweepReport
    from ..mdp import MdpSolution
    from ..mpc import RunResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"

RUN_COLUMNS = {
    "substation": ["step", "t_s", "p0_ref_kw", "p0_linear_kw", "p0_nonlinear_kw", "eps_kw",
                   "curtailment_kw", "pv_p_kw", "pv_q_kvar", "tcl_kw", "switches"],
    "voltages": ["step", "node", "v_linear_pu", "v_nonlinear_pu"],
    "tcl": ["t", "population", "state_index", "rho", "rho_hat"],
    "solver": ["step", "status", "iterations", "objective", "kkt_worst"],
}


def write_csv(df: pd.DataFrame, path: Path, columns: Optional[Sequence[str]] = None) -> Path:
    if columns is not None:
        df = df.reindex(columns=list(columns))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(payload: dict[str, Any], path: Path) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_run(result: "RunResult", out_dir: Path, summary: dict[str, Any]) -> list[Path]:
    """Write the four run CSVs and summary.json; returns the written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = result.frames()
    written = [write_csv(frames[name], out_dir / f"{name}.csv", cols) for name, cols in RUN_COLUMNS.items()]
    written.append(write_json(summary, out_dir / "summary.json"))
    logger.info("Wrote %d run files to %s", len(written), out_dir)
    return written


def write_chain_coo(entries: np.ndarray, path: Path) -> Path:
    """Nonzeros of a transition matrix as (row, col, value) CSV."""
    coo = sp.coo_matrix(entries)
    order = np.lexsort((coo.row, coo.col))
    df = pd.DataFrame({"row": coo.row[order], "col": coo.col[order], "value": coo.data[order]})
    return write_csv(df, path)


def write_mdp_solution(result: "MdpSolution", out_dir: Path) -> list[Path]:
    """ρ trajectory, one policy CSV per step, and solution.json (objective + KKT)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        {"t": d.time_index, "state_index": i, "rho": float(v)}
        for d in result.distributions for i, v in enumerate(d.values)
    ]
    written = [write_csv(pd.DataFrame(rows), out_dir / "rho.csv", ["t", "state_index", "rho"])]
    for t, policy in enumerate(result.policies):
        N = policy.entries.shape[0]
        df = pd.DataFrame(policy.entries, columns=[f"from_{j}" for j in range(N)])
        df.insert(0, "to", np.arange(N))
        written.append(write_csv(df, out_dir / f"policy_{t}.csv"))
    written.append(write_json({
        "status": result.status.value,
        "objective": result.objective,
        "iterations": result.solution.iterations,
        "kkt": result.kkt.as_dict(),
    }, out_dir / "solution.json"))
    return written


def write_power_flow(solution: "PowerFlowSolution", out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame({
        "node": np.arange(solution.v_mag.size),
        "v_mag_pu": solution.v_mag,
        "v_angle_deg": solution.v_angle_deg,
    })
    return [
        write_csv(df, out_dir / "voltages.csv"),
        write_json({
            "converged": solution.converged,
            "iterations": solution.iterations,
            "residual": solution.residual,
            "p0_pu": solution.p0,
            "q0_pu": solution.q0,
            "losses_p_pu": solution.losses_p,
        }, out_dir / "powerflow.json"),
    ]


def write_sensitivities(sens: "Sensitivities", sweep: "SweepReport", out_dir: Path) -> list[Path]:
    """Nodal sensitivity tables (row = monitored node, column = injecting node) and the sweep report."""
    out_dir.mkdir(parents=True, exist_ok=True)
    n = sens.K_p.shape[1]
    written = []
    for name, K in (("K_p", sens.K_p), ("K_q", sens.K_q)):
        df = pd.DataFrame(K, columns=[f"inj_{j}" for j in range(n)])
        df.insert(0, "node", np.arange(1, n))
        written.append(write_csv(df, out_dir / f"{name}.csv"))
    written.append(write_csv(
        pd.DataFrame({"node": np.arange(n), "k_p": sens.k_p, "k_q": sens.k_q}), out_dir / "k_p0.csv"
    ))
    written.append(write_json({
        "base_p0_pu": sens.base_p0,
        "base_v_pu": sens.base_v,
        "sweep_points": sweep.points,
        "max_voltage_error_pu": sweep.max_voltage_error,
        "max_p0_error_pu": sweep.max_p0_error,
    }, out_dir / "sweep.json"))
    return written
