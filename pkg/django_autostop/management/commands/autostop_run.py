import json
import logging
from concurrent.futures import ThreadPoolExecutor

from django.core.management.base import BaseCommand, CommandError

from django_autostop.bo.engine import run
from django_autostop.bo.exception import AutoStopError, ConfigError, InvalidArgument, RecordFormatError, RunAborted
from django_autostop.bo.records import write_atomic, write_record
from django_autostop.conf import get_setting
from django_autostop.experiment import ExperimentConfig

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class Command(BaseCommand):
    help = "Run Bayesian optimization with automatic termination for every (criterion, seed) of an experiment."

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="Experiment config (JSON)")
        parser.add_argument("--out", help="Output directory for run records")
        parser.add_argument("--seeds", help="Comma separated seeds, e.g. 0,1,2")
        parser.add_argument("--max-iters", type=int, dest="max_iters", help="Iteration budget per run")
        parser.add_argument(
            "--criterion",
            action="append",
            dest="criteria",
            help="Stopping criterion as NAME:key=val,... (repeatable)",
        )
        parser.add_argument("--criterion-suite", dest="suite", help="Named group of criteria, e.g. conv or regret_cv")

    def execute_job(self, experiment: ExperimentConfig, criterion, seed):
        record = run(
            experiment.space,
            experiment.create_objective(),
            experiment.proposer,
            criterion,
            experiment.max_iters,
            seed,
            options=experiment.options,
            continue_after_stop=True,
        )
        record.summary.config_hash = experiment.config_hash
        path = experiment.output / experiment.record_name(criterion, seed)
        write_record(record, path)
        return record, path

    def _save_partial(self, experiment: ExperimentConfig, criterion, seed, error: RunAborted):
        if error.record is None:
            return
        error.record.summary.config_hash = experiment.config_hash
        error.record.summary.iterations = len(error.record.rows)
        error.record.summary.reason = "aborted"
        write_record(error.record, experiment.output / experiment.record_name(criterion, seed))

    def handle(self, *args, **options):
        try:
            experiment = ExperimentConfig.from_file(
                options["config"],
                seeds=options.get("seeds"),
                max_iters=options.get("max_iters"),
                criteria=options.get("criteria"),
                suite=options.get("suite"),
                output=options.get("out"),
            )
        except (ConfigError, InvalidArgument, RecordFormatError) as error:
            raise CommandError(str(error), returncode=1)

        jobs = list(experiment.jobs())
        workers = get_setting("WORKERS")
        logger.info("Starting %d runs with %d workers", len(jobs), workers)
        results, failures = [], []
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(self.execute_job, experiment, criterion, seed) for criterion, seed in jobs]
            for (criterion, seed), future in zip(jobs, futures):
                try:
                    record, path = future.result()
                except RunAborted as error:
                    self._save_partial(experiment, criterion, seed, error)
                    failures.append(error)
                    self.stderr.write(f"{criterion.name} seed {seed}: {error}")
                    continue
                except AutoStopError as error:
                    raise CommandError(f"{criterion.name} seed {seed}: {error}", returncode=1)
                results.append((criterion, seed, record, path))
                if options["verbosity"] >= 2:
                    summary = record.summary
                    self.stdout.write(f"{path.name}: {summary.iterations} iterations, stop at {summary.stop_iteration}")

        self.write_manifest(experiment, results)
        if get_setting("REGISTER_RUNS"):
            from django_autostop.registry import register_run

            for _, _, record, path in results:
                register_run(record, path)
        if failures:
            raise CommandError(f"{len(failures)} of {len(jobs)} runs failed: {failures[0]}", returncode=2)
        if options["verbosity"] >= 1:
            self.stdout.write(self.style.SUCCESS(f"Finished {len(results)} runs in {experiment.output}"))

    def write_manifest(self, experiment: ExperimentConfig, results):
        manifest = {
            "config_hash": experiment.config_hash,
            "max_iters": experiment.max_iters,
            "proposer": experiment.proposer.name,
            "records": [
                {
                    "criterion": criterion.name,
                    "seed": seed,
                    "file": path.name,
                    "iterations": record.summary.iterations,
                    "stop_iteration": record.stop_iteration,
                }
                for criterion, seed, record, path in results
            ],
        }
        write_atomic(experiment.output / MANIFEST, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
