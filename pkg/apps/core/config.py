"""core/config.py"""

import os
from dataclasses import dataclass

from django.conf import settings

from core.exceptions import BoundOrder, ScenarioError

METRIC_CHOICES = ("rise", "sse", "both")


def parse_range(text, name="range"):
    """``"a:b"`` to ``(a, b)`` with ``0 < a < b``."""
    try:
        lo, hi = (float(part) for part in str(text).split(":"))
    except ValueError as e:
        raise BoundOrder(f"{name} must look like a:b, got '{text}'") from e
    if not 0 < lo < hi:
        raise BoundOrder(f"{name} must satisfy 0 < a < b, got '{text}'")
    return lo, hi


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "arm"
    metric: str = "rise"
    gamma_range: tuple = None
    sigma_range: tuple = None
    sse_mode: str = "bisect"
    tol: float = None
    dt: float = None
    T: float = None
    grid: int = None
    vertex_cap: int = None
    out: str = None
    seed: int = None
    weights: str = None
    certificate: str = None
    runs: int = None
    store: bool = True
    printed_sign: bool = False

    def __post_init__(self):
        if self.metric not in METRIC_CHOICES:
            raise ScenarioError(f"metric must be one of {METRIC_CHOICES}, got '{self.metric}'")
        for name in ("tol", "dt", "T"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise BoundOrder(f"--{name} must be positive, got {value}")
        for name in ("grid", "vertex_cap"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise BoundOrder(f"--{name.replace('_', '-')} must be at least 1, got {value}")
        for name in ("weights", "certificate"):
            path = getattr(self, name)
            if path and not os.path.exists(path):
                raise ScenarioError(f"--{name} file not found: {path}")

    @property
    def output_dir(self):
        return str(self.out or settings.KEEPCLOSE_OUTPUT_DIR)

    @property
    def cache_dir(self):
        return os.path.join(self.output_dir, "weights")

    @classmethod
    def from_options(cls, options):
        gamma_range = options.get("gamma_range")
        if gamma_range:
            gamma_range = parse_range(gamma_range, "--gamma-range")
        if options.get("gamma_max") is not None:
            lo = gamma_range[0] if gamma_range else 1e-4
            gamma_range = parse_range(f"{min(lo, options['gamma_max'] / 10)}:{options['gamma_max']}", "--gamma-max")
        sigma_range = options.get("sigma_range")
        if sigma_range:
            sigma_range = parse_range(sigma_range, "--sigma-range")
        return cls(
            scenario=options.get("scenario") or "arm",
            metric=options.get("metric") or "rise",
            gamma_range=gamma_range,
            sigma_range=sigma_range,
            sse_mode=options.get("sse_mode") or "bisect",
            tol=options.get("tol"),
            dt=options.get("dt"),
            T=options.get("T"),
            grid=options.get("grid"),
            vertex_cap=options.get("vertex_cap"),
            out=options.get("out"),
            seed=options.get("seed"),
            weights=options.get("weights"),
            certificate=options.get("certificate"),
            runs=options.get("runs"),
            store=not options.get("no_store", False),
            printed_sign=options.get("printed_sign", False),
        )


def add_run_arguments(parser):
    parser.add_argument("--scenario", default="arm", help="arm, apollo or a scenario JSON path")
    parser.add_argument("--metric", choices=METRIC_CHOICES, default="rise")
    parser.add_argument("--gamma-range", dest="gamma_range", help="RISE search range a:b")
    parser.add_argument("--gamma-max", dest="gamma_max", type=float, help="upper edge of the RISE search")
    parser.add_argument("--sigma-range", dest="sigma_range", help="SSE search range a:b")
    parser.add_argument("--sse-mode", dest="sse_mode", choices=("bisect", "direct"), default="bisect")
    parser.add_argument("--tol", type=float, help="relative bisection tolerance")
    parser.add_argument("--dt", type=float, help="simulation step")
    parser.add_argument("--T", dest="T", type=float, help="simulation horizon")
    parser.add_argument("--grid", type=int, help="training-error grid points per axis")
    parser.add_argument("--vertex-cap", dest="vertex_cap", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--weights", help="network weights JSON instead of training")
    parser.add_argument("--certificate", help="certificate JSON to validate against")
    parser.add_argument("--runs", type=int, help="number of random test runs")
    parser.add_argument("--no-store", dest="no_store", action="store_true", help="do not save certificates")
    parser.add_argument(
        "--paper-sign-convention",
        dest="printed_sign",
        action="store_true",
        help="use the printed sign of the arm feedback-linearizing law",
    )
