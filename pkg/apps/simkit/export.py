"""simkit/export.py"""

import csv
import logging
import os

from core.jsonio import write_json
from simkit.metrics import running_metrics

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"


def trajectory_header(traj):
    p, m = traj.y.shape[1], traj.u.shape[1]
    return (
        ["t"]
        + [f"y_{i}" for i in range(1, p + 1)]
        + [f"yhat_{i}" for i in range(1, p + 1)]
        + [f"u_{i}" for i in range(1, m + 1)]
        + [f"uhat_{i}" for i in range(1, m + 1)]
        + ["rise_running", "sse_running"]
    )


def write_trajectory_csv(traj, path):
    """One row per grid point; every float written with 9 significant digits."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    rise, sse = running_metrics(traj)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(trajectory_header(traj))
        for k in range(traj.t.size):
            values = [traj.t[k], *traj.y[k], *traj.y_hat[k], *traj.u[k], *traj.u_hat[k], rise[k], sse[k]]
            writer.writerow([FLOAT_FORMAT % v for v in values])
    logger.info("Wrote %d samples to %s", traj.t.size, path)
    return path


def write_manifest(entries, path):
    """JSON index of the written trajectories and their metrics."""
    write_json({"runs": entries}, path)
    return path
