"""certify/pipeline.py

Scenario-level certification: bound the training error, enumerate the Jacobian
vertices, build one extended system per vertex and certify each output channel.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from certify.theorems import RISE, SSE, certify_rise, certify_sse
from core.exceptions import ScenarioError
from core.jsonio import digest
from errorsys.assembly import build_error_system, build_extended, controller_error_gain
from iqclib.factors import combine, norm_bound_iqc, sector_iqc
from nncontroller.bounds import jacobian_box, vertices
from nncontroller.epsilon import EpsilonKind, estimate_epsilon

logger = logging.getLogger(__name__)

METRICS = {"rise": (RISE,), "sse": (SSE,), "both": (RISE, SSE)}


@dataclass(frozen=True, eq=False)
class ProblemCertificates:
    problem: object
    epsilon: object
    certificates: list = field(default_factory=list)
    coupling: float = None

    def get(self, metric, channel):
        for cert in self.certificates:
            if cert.metric == metric and cert.channel == channel:
                return cert
        return None


def channel_label(problem, name):
    return f"{problem.label}:{name}"


def weights_digest(net):
    return digest(net.to_dict())


def epsilon_for(problem, grid=None):
    """Training-error bound of the problem's network against its ideal law."""
    net = problem.net
    channel_inputs = None
    if problem.epsilon_mode == "sector":
        channel_inputs = tuple(range(net.output_dim))
    return estimate_epsilon(
        net,
        problem.ideal,
        problem.box,
        grid or problem.grid,
        mode=problem.epsilon_mode,
        channel_inputs=channel_inputs,
        reference_inputs=problem.reference_dim,
    )


def eta_rows(problem, columns, reference=False):
    """Rows of ``eta = (y, y_hat)`` picking ``columns`` of y, or of y_hat."""
    k = problem.reference_dim
    S = np.zeros((len(columns), 2 * k))
    for i, j in enumerate(columns):
        S[i, j + (k if reference else 0)] = 1.0
    return S


def epsilon_factor(problem, eps):
    """IQC factor of ``q_eps = eps(y_hat)`` against ``p_eps = y_hat``."""
    net = problem.net
    k = problem.reference_dim
    if eps.kind == EpsilonKind.SECTOR:
        selector = np.zeros((net.output_dim, k))
        for row, j in enumerate(eps.channel_inputs or range(net.output_dim)):
            selector[row, j] = 1.0
        return sector_iqc(eps.alpha, eps.beta, input_map=selector)
    if eps.mode != "gain":
        raise ScenarioError(
            f"{problem.label}: an {eps.mode} bound is not a pointwise IQC against the reference output, "
            "use the gain or sector mode"
        )
    if not math.isfinite(eps.c):
        raise ScenarioError(
            f"{problem.label}: the training error does not vanish with the reference output, "
            "so no gain bound exists"
        )
    return norm_bound_iqc(eps.c, q_dim=net.output_dim, p_dim=k)


def coupling_gain(problem, iv):
    """Norm bound on ``Lambda_c (y_c - y_hat_c)`` from the coupled Jacobian columns, or None."""
    if not problem.coupled_inputs:
        return None
    block = iv.select(range(iv.shape[0]), problem.coupled_inputs)
    return float(np.linalg.norm(np.maximum(np.abs(block.lo), np.abs(block.hi))))


def build_filter(problem, eps, coupling=None):
    """Plant uncertainty factors, the training-error factor and any coupling factor,
    all reading the shared ``eta = (y, y_hat)`` of the problem."""
    plant_rows = eta_rows(problem, problem.plant_inputs)
    factors = [unc.factor() for unc in problem.uncertainties]
    maps = [plant_rows] * len(factors)
    factors.append(epsilon_factor(problem, eps))
    maps.append(eta_rows(problem, range(problem.reference_dim), reference=True))
    if coupling is not None:
        coupled = problem.coupled_inputs
        factors.append(norm_bound_iqc(coupling, q_dim=problem.net.output_dim, p_dim=len(coupled)))
        maps.append(eta_rows(problem, coupled) - eta_rows(problem, coupled, reference=True))
    return combine(factors, eta_maps=maps)


def extended_vertices(problem, xi, iv=None, vertex_cap=None, workers=None):
    iv = jacobian_box(problem.net, problem.box) if iv is None else iv
    corners = vertices(iv.select(range(iv.shape[0]), problem.plant_inputs), cap=vertex_cap)
    err = build_error_system(problem.plant, problem.reference)

    def build(Lam):
        return build_extended(err, controller_error_gain(Lam, problem.plant), xi)

    workers = settings.KEEPCLOSE_THREADS if workers is None else workers
    if workers <= 1 or len(corners) == 1:
        exts = [build(Lam) for Lam in corners]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            exts = list(pool.map(build, corners))
    logger.info("%s: %d vertices, %d extended states each", problem.label, len(exts), exts[0].n_chi)
    return exts


def certify_problem(
    problem,
    metrics=(RISE,),
    *,
    gamma_range=(1e-4, 1e2),
    sigma_range=(1e-4, 1e2),
    tol=None,
    sse_mode="bisect",
    vertex_cap=None,
    grid=None,
    workers=None,
):
    """Certificates for every declared output channel of one problem."""
    eps = epsilon_for(problem, grid)
    iv = jacobian_box(problem.net, problem.box)
    coupling = coupling_gain(problem, iv)
    xi = build_filter(problem, eps, coupling)
    exts = extended_vertices(problem, xi, iv, vertex_cap=vertex_cap, workers=workers)
    result = ProblemCertificates(problem, eps, coupling=coupling)
    for name, rows in problem.channels:
        restricted = [ext.output_rows(rows) for ext in exts]
        label = channel_label(problem, name)
        for metric in metrics:
            if metric == RISE:
                cert = certify_rise(restricted, gamma_range=gamma_range, tol_bisect=tol, workers=workers, channel=label)
            else:
                cert = certify_sse(
                    restricted,
                    mode=sse_mode,
                    sigma_range=sigma_range,
                    tol_bisect=tol,
                    workers=workers,
                    channel=label,
                )
            result.certificates.append(cert)
    return result


def certificate_document(study, results, metric, seed=None, net=None):
    """JSON document holding every certificate of one metric."""
    entries = []
    for res in results:
        for cert in res.certificates:
            if cert.metric != metric:
                continue
            entry = cert.to_dict()
            entry["problem"] = res.problem.label
            entries.append(entry)
    document = {
        "scenario": study.name,
        "metric": metric,
        "seed": seed,
        "weights_digest": weights_digest(net) if net is not None else None,
        "epsilon": {res.problem.label: res.epsilon.to_dict() for res in results},
    }
    coupling = {res.problem.label: res.coupling for res in results if res.coupling is not None}
    if coupling:
        document["coupling"] = coupling
    document["certificates"] = entries
    return document


def levels_from_document(document):
    """``{channel: (level, factor)}`` from a certificate document."""
    return {entry["channel"]: (entry["level"], entry.get("factor_2g_over_1mg")) for entry in document["certificates"]}


def epsilon_matches(recorded, bound, rtol=1e-9):
    """True when a recorded bound dict describes ``bound`` up to JSON rounding."""
    current = bound.to_dict()
    if not recorded or recorded.get("kind") != current["kind"] or recorded.get("mode") != current["mode"]:
        return False
    keys = ("c",) if current["kind"] == EpsilonKind.NORM else ("alpha", "beta")
    try:
        return all(np.allclose(recorded[key], current[key], rtol=rtol, atol=0.0) for key in keys)
    except (KeyError, ValueError):
        return False
