"""core/management/commands/simulate.py"""

from core.exceptions import NonFiniteState
from core.jsonio import write_json
from core.runner import KeepCloseCommand
from simkit.export import write_trajectory_csv
from simkit.metrics import empirical_rise, empirical_sse, running_metrics


class Command(KeepCloseCommand):
    help = "Simulate the scenario runs and write trajectory CSVs with running RISE/SSE"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--hold", type=float, help="sample-and-hold period of the controller")

    def run(self, cfg):
        study, net = self.setup(cfg)
        runs = study.runs(seed=cfg.seed, count=cfg.runs)
        hold = self._hold
        entries = []
        for run in runs:
            traj = study.simulate(run, net, hold=hold)
            entries.append(self._write(cfg, study, traj, network=run.network))

        # feedback-linearized arm against its reference model
        if study.kind == "arm":
            for run in runs[:2]:
                try:
                    traj = study.simulate_linearized(run, printed_sign=cfg.printed_sign)
                except NonFiniteState as e:
                    self.stderr.write(f"{e}\n")
                    traj = e.partial
                entries.append(self._write(cfg, study, traj, network=False))

        manifest = self.output_path(cfg, study.name, "manifest.json")
        write_json({"scenario": study.name, "seed": cfg.seed, "runs": entries}, manifest)
        self.stdout.write(f"Wrote {len(entries)} trajectories and {manifest}\n")

    def handle(self, *args, **options):
        self._hold = options.get("hold")
        return super().handle(*args, **options)

    def _write(self, cfg, study, traj, network=True):
        path = self.output_path(cfg, study.name, f"{traj.label}.csv")
        write_trajectory_csv(traj, path)
        rise, sse = running_metrics(traj)
        entry = {
            "label": traj.label,
            "csv": path,
            "network": network,
            "rise": empirical_rise(traj.y, traj.y_hat, traj.t),
            "sse": empirical_sse(traj.y, traj.y_hat, traj.t),
            "rise_running_max": float(rise.max()),
            "sse_running_max": float(sse.max()),
        }
        self.stdout.write(f"  {traj.label:<16} RISE {entry['rise']:.4g}  SSE {entry['sse']:.4g}\n")
        return entry
