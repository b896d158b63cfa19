"""certify/validation.py

Empirical check of certificates against simulated runs: metric dominance, tube
containment and hard-IQC positivity of every declared uncertainty class.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from certify.pipeline import channel_label, epsilon_factor
from certify.theorems import RISE, SSE
from core.exceptions import NonFiniteState
from iqclib.factors import iqc_running_integral
from nncontroller.epsilon import evaluate_ideal
from nncontroller.mlp import forward
from simkit.metrics import channel_rise, channel_sse
from sysmodels.statespace import signal_norms

logger = logging.getLogger(__name__)

IQC_FLOOR = -1e-9

PASS = "pass"
FAIL = "fail"
INFO = "info"


def numeric_slack(dt):
    return 1e-6 + dt**2


@dataclass
class CheckRow:
    run: str
    channel: str
    check: str
    value: float
    limit: float
    status: str
    attribution: str = ""
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "run": self.run,
            "channel": self.channel,
            "check": self.check,
            "value": self.value,
            "limit": self.limit,
            "status": self.status,
            "attribution": self.attribution,
            "notes": list(self.notes),
        }


def _status(ok, certified):
    if not certified:
        return INFO
    return PASS if ok else FAIL


def iqc_rows(study, problem, eps, run, traj):
    """Smallest prefix integral of each declared class along one run."""
    rows = []
    t = traj.t
    for unc in problem.uncertainties:
        p, q = study.uncertainty_samples(problem, run, traj)
        low = float(np.min(iqc_running_integral(unc.factor(), p, q, t)))
        rows.append(
            CheckRow(run.label, problem.label, f"iqc:{unc.kind}", low, IQC_FLOOR, _status(low >= IQC_FLOOR, run.network))
        )
    if run.network and eps is not None:
        y_hat = traj.y_hat[:, list(problem.output_columns)]
        inputs = study.network_inputs(problem, run, traj)
        q = forward(problem.net, inputs) - evaluate_ideal(problem.ideal, inputs)
        low = float(np.min(iqc_running_integral(epsilon_factor(problem, eps), y_hat, q, t)))
        rows.append(CheckRow(run.label, problem.label, "iqc:epsilon", low, IQC_FLOOR, _status(low >= IQC_FLOOR, True)))
    return rows


def metric_rows(problem, levels, run, traj):
    """Empirical RISE/SSE per channel against the certified levels, plus the tube."""
    rows = []
    cols = list(problem.output_columns)
    t, y, y_hat = traj.t, traj.y[:, cols], traj.y_hat[:, cols]
    slack = numeric_slack(traj.dt)
    ref_norm = signal_norms(t, y_hat).l2
    for name, plant_rows in problem.channels:
        label = channel_label(problem, name)
        idx = problem.channel_columns(plant_rows)
        rise = levels.get((RISE, label))
        if rise is not None:
            level, factor = rise
            value = channel_rise(y, y_hat, t, idx)
            rows.append(CheckRow(run.label, label, "rise", value, level, _status(value <= level + slack, run.network)))
            if factor is not None:
                gap = signal_norms(t, y[:, idx] - y_hat[:, idx]).l2
                bound = factor * ref_norm
                rows.append(CheckRow(run.label, label, "tube", gap, bound, _status(gap < bound, run.network)))
        sse = levels.get((SSE, label))
        if sse is not None:
            value = channel_sse(y, y_hat, t, idx)
            rows.append(CheckRow(run.label, label, "sse", value, sse[0], _status(value <= sse[0] + slack, run.network)))
    return rows


def validate_study(study, net, levels, runs, epsilons=None):
    """Check every run; ``levels`` maps ``(metric, channel)`` to ``(level, factor)``.

    A failing row is attributed to the model class when its run left the class
    the certificate assumes or one of its IQC checks failed, otherwise to the
    certificate.
    """
    epsilons = epsilons or {}
    problems = study.problems(net)
    table = []
    for run in runs:
        try:
            traj = study.simulate(run, net)
        except NonFiniteState as e:
            table.append(CheckRow(run.label, "", "finite", np.nan, np.nan, FAIL, "model-class", [str(e)]))
            continue
        for problem in problems:
            notes = study.class_notes(problem, run, traj)
            rows = iqc_rows(study, problem, epsilons.get(problem.label), run, traj)
            iqc_failed = any(row.status == FAIL for row in rows)
            rows += metric_rows(problem, levels, run, traj)
            for row in rows:
                row.notes = notes
                if row.status == FAIL:
                    row.attribution = "model-class" if notes or iqc_failed else "certificate"
            table.extend(rows)
    failed = sum(row.status == FAIL for row in table)
    logger.info("Validated %d runs: %d checks, %d failed", len(runs), len(table), failed)
    return table


def failures(table):
    return [row for row in table if row.status == FAIL]
