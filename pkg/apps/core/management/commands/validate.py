"""core/management/commands/validate.py"""

from certify.models import CertificateRecord
from certify.pipeline import (
    METRICS,
    certify_problem,
    channel_label,
    epsilon_for,
    epsilon_matches,
    weights_digest,
)
from certify.validation import FAIL, failures, validate_study
from core.exceptions import ScenarioError, ValidationFailure
from core.jsonio import read_json, write_json
from core.runner import KeepCloseCommand


class Command(KeepCloseCommand):
    help = "Check certified levels against simulated runs and report a pass/fail table"

    def run(self, cfg):
        study, net = self.setup(cfg)
        problems = study.problems(net, grid=cfg.grid)
        epsilons = {problem.label: epsilon_for(problem, cfg.grid) for problem in problems}
        levels = self._levels(cfg, study, net, problems, epsilons)

        runs = study.runs(seed=cfg.seed, count=cfg.runs)
        table = validate_study(study, net, levels, runs, epsilons)

        self.stdout.write(f"{'run':<16} {'channel':<10} {'check':<12} {'value':>12} {'limit':>12}  status\n")
        for row in table:
            status = row.status if row.status != FAIL else f"FAIL ({row.attribution})"
            self.stdout.write(
                f"{row.run:<16} {row.channel:<10} {row.check:<12} {row.value:>12.6g} {row.limit:>12.6g}  {status}\n"
            )
        path = self.output_path(cfg, f"{study.name}_validation.json")
        write_json({"scenario": study.name, "seed": cfg.seed, "checks": [row.to_dict() for row in table]}, path)

        bad = failures(table)
        if bad:
            listed = "; ".join(
                f"{row.run} {row.channel} {row.check} [{row.attribution}{': ' + ', '.join(row.notes) if row.notes else ''}]"
                for row in bad
            )
            raise ValidationFailure(f"{len(bad)} of {len(table)} checks failed: {listed}", failures=bad)
        self.stdout.write(f"All {len(table)} checks passed ({len(runs)} runs)\n")

    def _levels(self, cfg, study, net, problems, epsilons):
        """``{(metric, channel): (level, factor)}`` from a file, the database, or a fresh certification.

        Recorded levels count only for the same network weights and training-error bounds.
        """
        seed = study.default_seed if cfg.seed is None else cfg.seed
        digest = weights_digest(net)
        if cfg.certificate:
            document = read_json(cfg.certificate)
            self._check_document(document, study, seed, digest, problems, epsilons)
            return {
                (document["metric"], entry["channel"]): (entry["level"], entry.get("factor_2g_over_1mg"))
                for entry in document["certificates"]
            }

        levels = {}
        for problem in problems:
            eps = epsilons[problem.label]
            for metric in METRICS[cfg.metric]:
                records = [
                    CertificateRecord.latest(
                        study.name,
                        metric,
                        channel_label(problem, name),
                        weights_digest=digest,
                        epsilon=eps.to_dict(),
                    )
                    for name, _ in problem.channels
                ]
                if all(records):
                    for record in records:
                        levels[(metric, record.channel)] = (record.level, record.factor)
                    continue
                result = certify_problem(
                    problem,
                    (metric,),
                    gamma_range=cfg.gamma_range or study.gamma_range,
                    sigma_range=cfg.sigma_range or study.sigma_range,
                    tol=cfg.tol,
                    sse_mode=cfg.sse_mode,
                    vertex_cap=cfg.vertex_cap,
                    grid=cfg.grid,
                )
                for cert in result.certificates:
                    levels[(metric, cert.channel)] = (cert.level, cert.factor)
                    if cfg.store:
                        CertificateRecord.from_certificate(
                            study.name, cert, weights_digest=digest, epsilon=result.epsilon.to_dict(), seed=seed
                        )
        return levels

    @staticmethod
    def _check_document(document, study, seed, digest, problems, epsilons):
        if document.get("scenario") != study.name:
            raise ScenarioError(f"certificate is for scenario {document.get('scenario')!r}, not {study.name!r}")
        recorded = document.get("weights_digest")
        if recorded != digest:
            raise ScenarioError(f"certificate is for network weights {recorded!r}, not {digest!r}")
        if document.get("seed") is not None and int(document["seed"]) != int(seed):
            raise ScenarioError(f"certificate was issued for seed {document['seed']}, not {seed}")
        recorded_eps = document.get("epsilon", {})
        for problem in problems:
            if not epsilon_matches(recorded_eps.get(problem.label), epsilons[problem.label]):
                raise ScenarioError(f"{problem.label}: certificate records another training-error bound")
