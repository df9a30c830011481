from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from django_autostop.bo.bench import BoundGapPoint, BoundGapSummary, bound_gap_series, write_csv
from django_autostop.bo.exception import NotAvailable, RecordFormatError
from django_autostop.bo.records import read_record
from django_autostop.management.commands.autostop_score import record_files

SERIES = "bound_gap.csv"
SUMMARY = "bound_gap_summary.csv"


class Command(BaseCommand):
    help = "Compare the regret upper bound with the true regret of synthetic runs."

    def add_arguments(self, parser):
        parser.add_argument("--records", required=True, help="Directory with run records of synthetic objectives")
        parser.add_argument("--out", help="Output directory (default: the records directory)")

    def handle(self, *args, **options):
        records = Path(options["records"])
        out = Path(options.get("out") or records)
        points, summaries = [], []
        try:
            for path in record_files(records):
                gap = bound_gap_series(read_record(path), run_id=path.stem)
                points.extend(gap.points)
                summaries.append(BoundGapSummary.from_gap(gap))
        except (NotAvailable, RecordFormatError) as error:
            raise CommandError(str(error), returncode=1)

        write_csv(out / SERIES, points, BoundGapPoint)
        write_csv(out / SUMMARY, summaries, BoundGapSummary)
        if options["verbosity"] >= 1:
            negatives = sum(summary.negatives for summary in summaries)
            self.stdout.write(
                self.style.SUCCESS(f"{len(points)} iterations over {len(summaries)} records, {negatives} negative gaps")
            )
