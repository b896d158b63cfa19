"""core/management/commands/certify.py"""

from certify.models import CertificateRecord
from certify.pipeline import METRICS, certificate_document, certify_problem, weights_digest
from core.jsonio import write_json
from core.runner import KeepCloseCommand


class Command(KeepCloseCommand):
    help = "Certify RISE and/or SSE levels of a scenario's network controller"

    def run(self, cfg):
        study, net = self.setup(cfg)
        seed = study.default_seed if cfg.seed is None else cfg.seed
        digest = weights_digest(net)
        metrics = METRICS[cfg.metric]
        results = [
            certify_problem(
                problem,
                metrics,
                gamma_range=cfg.gamma_range or study.gamma_range,
                sigma_range=cfg.sigma_range or study.sigma_range,
                tol=cfg.tol,
                sse_mode=cfg.sse_mode,
                vertex_cap=cfg.vertex_cap,
                grid=cfg.grid,
            )
            for problem in study.problems(net, grid=cfg.grid)
        ]

        for metric in metrics:
            document = certificate_document(study, results, metric, seed=seed, net=net)
            path = self.output_path(cfg, f"{study.name}_certificate_{metric.lower()}.json")
            write_json(document, path)
            self.stdout.write(f"Wrote {path}\n")

        for res in results:
            for cert in res.certificates:
                factor = "" if cert.factor is None else f"  2g/(1-g)={cert.factor:.6g}"
                self.stdout.write(
                    f"  {cert.channel:<10} {cert.metric:<4} {cert.level:.6g}{factor}  ({cert.vertices} vertices)\n"
                )
                if cfg.store:
                    CertificateRecord.from_certificate(
                        study.name, cert, weights_digest=digest, epsilon=res.epsilon.to_dict(), seed=seed
                    )
