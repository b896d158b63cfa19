"""core/management/commands/report.py"""

from django.core.management.base import BaseCommand

from certify.models import CertificateRecord


class Command(BaseCommand):
    help = "List stored certificates"

    def add_arguments(self, parser):
        parser.add_argument("--scenario", help="only this scenario")
        parser.add_argument("--metric", choices=("RISE", "SSE"))
        parser.add_argument("--latest", action="store_true", help="newest record per channel and metric only")

    def handle(self, *args, **options):
        records = CertificateRecord.objects.all()
        if options.get("scenario"):
            records = records.filter(scenario=options["scenario"])
        if options.get("metric"):
            records = records.filter(metric=options["metric"])

        if not records.exists():
            self.stdout.write("No certificates stored.\n")
            return

        seen = set()
        self.stdout.write(f"{'scenario':<10} {'channel':<10} {'metric':<6} {'level':>12} {'2g/(1-g)':>12} {'vertices':>8}  created\n")
        for record in records:
            key = (record.scenario, record.metric, record.channel)
            if options.get("latest") and key in seen:
                continue
            seen.add(key)
            factor = "-" if record.factor is None else f"{record.factor:.6g}"
            self.stdout.write(
                f"{record.scenario:<10} {record.channel:<10} {record.metric:<6} {record.level:>12.6g} "
                f"{factor:>12} {record.vertices:>8}  {record.created_at:%Y-%m-%d %H:%M}\n"
            )
