import logging
from pathlib import Path
from typing import Optional

from django.utils import timezone

from django_autostop import models
from django_autostop.bo.bench import score_record
from django_autostop.bo.records import RunRecord, read_record

logger = logging.getLogger(__name__)


def _scores(record: RunRecord, run_id: str):
    row = score_record(record, run_id=run_id)
    return {"ryc": row.ryc, "rtc": row.rtc}


def register_run(record: RunRecord, path: Path) -> models.Run:
    """Создать или обновить запись о прогоне по ключу (эксперимент, критерий, зерно)."""
    summary = record.summary
    defaults = {
        "task": summary.task,
        "record_path": str(path),
        "iterations": summary.iterations,
        "stop_iteration": summary.stop_iteration,
        "final_incumbent": summary.final_incumbent,
        "updated_at": timezone.now(),
        **_scores(record, Path(path).stem),
    }
    run, is_created = models.Run.objects.update_or_create(
        experiment=summary.config_hash,
        criterion=summary.criterion,
        seed=summary.seed,
        defaults=defaults,
    )
    logger.debug("Run %s %s", run, "registered" if is_created else "updated")
    return run


def refresh_run(run: models.Run, rescore: bool = False, record: Optional[RunRecord] = None):
    """Перечитать итог записи; при `rescore` пересчитать RYC и RTC."""
    record = record or read_record(run.record_path)
    run.iterations = record.summary.iterations
    run.stop_iteration = record.summary.stop_iteration
    run.final_incumbent = record.summary.final_incumbent
    if rescore:
        scores = _scores(record, Path(run.record_path).stem)
        run.ryc, run.rtc = scores["ryc"], scores["rtc"]
    run.updated_at = timezone.now()
