# switched_ioss/analytics.py
from __future__ import annotations
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .envelope import Envelope, SlackReport, ioss_curves
from .errors import EmptyTrajectoryError
from .sim import Trajectory


def _channel_max(arr: Optional[np.ndarray]) -> Optional[float]:
    """Max of an optional scalar channel; None if absent or empty."""
    if arr is None or len(arr) == 0:
        return None
    return float(np.max(arr))


def run_row(run_id: int, trajectory: Trajectory, reports: Sequence[SlackReport], seed: Optional[int] = None) -> Dict:
    """
    One row of the per-run table.

    Parameters
    ----------
    run_id : int
        Index of the run inside the experiment.
    trajectory : Trajectory
        Simulated run.
    reports : sequence of SlackReport
        Checks evaluated on the run; each contributes ``<name>_slack`` and ``<name>_passed``.
    seed : int | None
        Seed used to draw the signal, state and input.
    """
    x_norm = trajectory.state_norm()
    sigma = trajectory.sigma
    row = {
        "run": run_id,
        "seed": seed,
        "nodes": len(trajectory.times),
        "horizon": trajectory.horizon,
        "x0_norm": float(x_norm[0]),
        "x_norm_max": float(x_norm.max()),
        "x_norm_final": float(x_norm[-1]),
        "v_norm_max": float(trajectory.input_norm().max()) if trajectory.inputs.size else 0.0,
        "y_norm_max": float(trajectory.output_norm().max()) if trajectory.outputs.size else 0.0,
        "switches": int(np.count_nonzero(np.diff(sigma))),
        "z_max": _channel_max(trajectory.z),
        "w_max": _channel_max(trajectory.w),
    }
    for rep in reports:
        row[f"{rep.name}_slack"] = rep.min_slack
        row[f"{rep.name}_passed"] = rep.passed
    return row


def summarize_runs(rows: List[Dict]) -> pd.DataFrame:
    """Per-run statistics table, ordered by run id."""
    if not rows:
        return pd.DataFrame(columns=["run", "seed", "nodes", "horizon"])
    return pd.DataFrame(rows).sort_values("run").reset_index(drop=True)


def envelope_curves_frame(
    trajectory: Trajectory,
    envelope: Envelope,
    include_outputs: bool = True,
) -> pd.DataFrame:
    """Plot-ready ``(t, lhs, rhs)`` columns of the stability inequality, plus ``x_norm``."""
    lhs, rhs = ioss_curves(trajectory, envelope, include_outputs)
    return pd.DataFrame({"t": trajectory.times, "x_norm": trajectory.state_norm(), "lhs": lhs, "rhs": rhs})


def estimator_curves_frame(trajectory: Trajectory, envelope: Envelope) -> pd.DataFrame:
    """``t, x_norm, z, w, c_z`` and the bound of ``|x|`` built from ``z``."""
    if trajectory.z is None:
        raise EmptyTrajectoryError("trajectory has no estimator channel")
    x_norm = trajectory.state_norm()
    c_z = envelope.c_ratio * trajectory.z
    bound = envelope.beta_bar(x_norm[0] + abs(trajectory.z[0]), trajectory.times) + envelope.chi_bar(c_z)
    frame = pd.DataFrame({"t": trajectory.times, "x_norm": x_norm, "z": trajectory.z})
    if trajectory.w is not None:
        frame["w"] = trajectory.w
    frame["c_z"] = c_z
    frame["x_bound"] = bound
    return frame


def generate_statistics(summary_df: pd.DataFrame, output_dir: Path) -> Path:
    """
    Aggregate the per-run table into ``stats.json``.

    Returns
    -------
    stats_path : Path
        Path to the saved JSON stats file.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    stats: Dict = {"n_runs": int(len(summary_df))}
    if not summary_df.empty:
        stats["x_norm_max"] = float(summary_df["x_norm_max"].max())
        stats["x_norm_final_median"] = float(summary_df["x_norm_final"].median())
        stats["switches_total"] = int(summary_df["switches"].sum())
        checks = sorted(c[: -len("_passed")] for c in summary_df.columns if c.endswith("_passed"))
        stats["checks"] = {
            name: {
                "passed_runs": int(summary_df[f"{name}_passed"].sum()),
                "min_slack": float(summary_df[f"{name}_slack"].min()),
            }
            for name in checks
        }

    stats_path = output_dir / "stats.json"
    stats_path.write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
    return stats_path
