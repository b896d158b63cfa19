"""core/runner.py

Shared plumbing of the batch commands: option parsing, the exit-code contract
and the scenario/controller set-up every command starts from.
"""

import logging
import os

from django.core.management.base import BaseCommand, CommandError

from core.config import RunConfig, add_run_arguments
from core.exceptions import KeepCloseError
from scenarios.loader import load_scenario

logger = logging.getLogger(__name__)


class KeepCloseCommand(BaseCommand):
    """Base command: library errors leave with their ``exit_code`` and a stderr diagnostic."""

    def add_arguments(self, parser):
        add_run_arguments(parser)

    def handle(self, *args, **options):
        try:
            cfg = RunConfig.from_options(options)
            self.run(cfg)
        except KeepCloseError as e:
            raise CommandError(f"{type(e).__name__}: {e}", returncode=e.exit_code) from e

    def run(self, cfg):
        raise NotImplementedError

    def setup(self, cfg):
        """Scenario study and its network, with the command-line overrides applied."""
        study = load_scenario(cfg.scenario)
        if cfg.dt:
            study.dt = cfg.dt
        if cfg.T:
            study.T = cfg.T
        net = study.controller(seed=cfg.seed, weights=cfg.weights, cache_dir=cfg.cache_dir)
        self.stdout.write(f"Scenario {study.name}: controller {net!r}\n")
        return study, net

    def output_path(self, cfg, *parts):
        path = os.path.join(cfg.output_dir, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path
