"""
Оценка критериев остановки по записям прогонов.

RYC - относительное изменение тестовой ошибки между решением в момент
остановки и решением по полному бюджету, RTC - доля сэкономленного времени.
"""
import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exception import BadTimes, NotAvailable, RecordFormatError
from .records import RunRecord, write_atomic

logger = logging.getLogger(__name__)

QUANTILES = (0.2, 0.5, 0.8)
VALIDATION_PROXY = "validation_proxy"
DEGENERATE_RYC = "degenerate_ryc"
NO_TIMING = "no_timing"


def ryc(y_T: float, y_es: float) -> float:
    denominator = max(y_T, y_es)
    if not denominator > 0:
        logger.warning("RYC is undefined for non-positive errors (%r, %r), using 0", y_T, y_es)
        return 0.0
    return (y_T - y_es) / denominator


def rtc(t_T: float, t_es: float) -> float:
    if not t_T > 0:
        raise BadTimes(f"Full-budget time must be positive, got {t_T!r}")
    if t_es > t_T:
        raise BadTimes(f"Time at stop {t_es!r} exceeds full-budget time {t_T!r}")
    return (t_T - t_es) / t_T


@dataclass(frozen=True)
class MetricsRow:
    run_id: str
    task: str
    criterion: str
    seed: int
    stop_iteration: Optional[int]
    y_T: float
    y_es: float
    t_T: float
    t_es: float
    ryc: float
    rtc: float
    flags: str = ""
    config_hash: str = ""


@dataclass(frozen=True)
class AggregateRow:
    criterion: str
    task: str
    runs: int
    ryc_mean: float
    ryc_std: float
    rtc_mean: float
    rtc_std: float
    positive_ryc: int
    config_hash: str = ""


@dataclass(frozen=True)
class BoundGapPoint:
    run_id: str
    t: int
    r_bar: float
    true_regret: float
    diff: float
    negative: bool
    config_hash: str = ""


@dataclass
class BoundGap:
    run_id: str
    points: List[BoundGapPoint] = field(default_factory=list)
    config_hash: str = ""

    @property
    def negatives(self) -> int:
        return sum(point.negative for point in self.points)

    @property
    def quantiles(self) -> Dict[float, float]:
        diffs = np.array([point.diff for point in self.points], dtype=float)
        return {q: float(np.quantile(diffs, q)) for q in QUANTILES}


def _test_value(value: Optional[float], fallback: float, flags: set) -> float:
    if value is None:
        flags.add(VALIDATION_PROXY)
        return fallback
    return value


def score_record(record: RunRecord, budget: Optional[int] = None, run_id: str = "") -> MetricsRow:
    """
    Посчитать RYC и RTC одного прогона.

    :param budget: Полный бюджет T; по умолчанию - все итерации записи.
    :param run_id: Идентификатор прогона (обычно имя файла записи).
    """
    rows = record.rows
    if not rows:
        raise RecordFormatError(f"Record '{run_id}' has no iterations")
    budget = budget or len(rows)
    if budget > len(rows):
        raise RecordFormatError(f"Record '{run_id}' has {len(rows)} iterations, budget is {budget}")

    flags = set()
    final = rows[budget - 1]
    stop_iteration = record.stop_iteration if record.stop_iteration and record.stop_iteration <= budget else None
    stopped = rows[stop_iteration - 1] if stop_iteration else final

    y_T = _test_value(final.incumbent_test, final.incumbent_value, flags)
    y_es = _test_value(stopped.incumbent_test, stopped.incumbent_value, flags)
    if not max(y_T, y_es) > 0:
        flags.add(DEGENERATE_RYC)
    try:
        time_change = rtc(final.cum_seconds, stopped.cum_seconds)
    except BadTimes:
        logger.warning("Record '%s' carries no timing, RTC is set to 0", run_id)
        flags.add(NO_TIMING)
        time_change = 0.0
    return MetricsRow(
        run_id=run_id,
        task=record.summary.task,
        criterion=record.summary.criterion,
        seed=record.summary.seed,
        stop_iteration=stop_iteration,
        y_T=y_T,
        y_es=y_es,
        t_T=final.cum_seconds,
        t_es=stopped.cum_seconds,
        ryc=ryc(y_T, y_es),
        rtc=time_change,
        flags=";".join(sorted(flags)),
        config_hash=record.summary.config_hash,
    )


def bound_gap_series(record: RunRecord, run_id: str = "") -> BoundGap:
    """
    Разность r̄_t − (истинный регрет) по итерациям синтетического прогона.
    Итерации без оценки r̄_t пропускаются.
    """
    if all(row.true_regret is None for row in record.rows):
        raise NotAvailable(f"Record '{run_id}' has no true regret column, only synthetic runs can be diagnosed")
    gap = BoundGap(run_id=run_id, config_hash=record.summary.config_hash)
    for row in record.rows:
        if row.r_bar is None or row.true_regret is None:
            continue
        diff = row.r_bar - row.true_regret
        point = BoundGapPoint(run_id, row.t, row.r_bar, row.true_regret, diff, diff < 0, gap.config_hash)
        gap.points.append(point)
    if not gap.points:
        raise NotAvailable(f"Record '{run_id}' has no iterations with a regret bound")
    return gap


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((value - mean) ** 2 for value in values) / (len(values) - 1))


def aggregate(rows: Iterable[MetricsRow], keys: Sequence[str] = ("criterion", "task")) -> List[AggregateRow]:
    groups = defaultdict(list)
    for row in rows:
        groups[tuple(getattr(row, key) for key in ("criterion", "task") if key in keys)].append(row)
    report = []
    for group in sorted(groups):
        items = sorted(groups[group], key=lambda row: (row.seed, row.run_id))
        ryc_mean, ryc_std = _mean_std([row.ryc for row in items])
        rtc_mean, rtc_std = _mean_std([row.rtc for row in items])
        report.append(
            AggregateRow(
                criterion=items[0].criterion if "criterion" in keys else "",
                task=items[0].task if "task" in keys else "",
                runs=len(items),
                ryc_mean=ryc_mean,
                ryc_std=ryc_std,
                rtc_mean=rtc_mean,
                rtc_std=rtc_std,
                positive_ryc=sum(row.ryc > 0 for row in items),
                config_hash=";".join(sorted({row.config_hash for row in items if row.config_hash})),
            )
        )
    return report


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def dumps_csv(rows: Sequence, row_type) -> str:
    """CSV с фиксированным заголовком по полям `row_type`."""
    names = [item.name for item in fields(row_type)]
    stream = io.StringIO()
    writer = csv.DictWriter(stream, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: format_value(value) for key, value in asdict(row).items()})
    return stream.getvalue()


def write_csv(path: Union[str, Path], rows: Sequence, row_type):
    write_atomic(path, dumps_csv(rows, row_type))


@dataclass(frozen=True)
class BoundGapSummary:
    run_id: str
    iterations: int
    negatives: int
    q20: float
    q50: float
    q80: float
    config_hash: str = ""

    @classmethod
    def from_gap(cls, gap: BoundGap) -> "BoundGapSummary":
        q20, q50, q80 = (gap.quantiles[q] for q in QUANTILES)
        return cls(gap.run_id, len(gap.points), gap.negatives, q20, q50, q80, gap.config_hash)
