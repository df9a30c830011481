from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from django_autostop.bo.bench import AggregateRow, MetricsRow, aggregate, score_record, write_csv
from django_autostop.bo.exception import RecordFormatError
from django_autostop.bo.records import read_record
from django_autostop.conf import get_setting

METRICS = "metrics.csv"
AGGREGATE = "aggregate.csv"


def record_files(directory: Path):
    files = sorted(path for path in Path(directory).glob("*.jsonl") if path.is_file())
    if not files:
        raise RecordFormatError(f"No run records (*.jsonl) in '{directory}'")
    return files


class Command(BaseCommand):
    help = "Score run records with RYC and RTC and aggregate the scores across seeds."

    def add_arguments(self, parser):
        parser.add_argument("--records", required=True, help="Directory with run records")
        parser.add_argument("--budget", type=int, help="Full budget T (default: all iterations of a record)")
        parser.add_argument("--out", help="Output directory (default: the records directory)")

    def handle(self, *args, **options):
        records = Path(options["records"])
        out = Path(options.get("out") or records)

        def score(path: Path) -> MetricsRow:
            return score_record(read_record(path), budget=options.get("budget"), run_id=path.stem)

        try:
            with ThreadPoolExecutor(max_workers=get_setting("WORKERS")) as executor:
                rows = list(executor.map(score, record_files(records)))
        except RecordFormatError as error:
            raise CommandError(str(error), returncode=1)

        write_csv(out / METRICS, rows, MetricsRow)
        write_csv(out / AGGREGATE, aggregate(rows), AggregateRow)
        if options["verbosity"] >= 1:
            self.stdout.write(self.style.SUCCESS(f"Scored {len(rows)} records into {out}"))
