"""
Форматы хранения: трассы внешних оптимизаторов и записи прогонов.
Оба формата - построчный JSON; запись прогона завершается строкой-итогом.
"""
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .exception import RecordFormatError

SUMMARY_KEY = "summary"


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    y: float
    eval_seconds: float = 0.0
    test_metric: Optional[float] = None
    fold_metrics: Optional[Tuple[float, ...]] = None
    candidate: Optional[Dict[str, float]] = None


def read_trace(path: Union[str, Path]) -> List[TraceRow]:
    rows = []
    try:
        with open(path, encoding="utf-8") as stream:
            for number, line in enumerate(stream, start=1):
                if not line.strip():
                    continue
                data = json.loads(line)
                fold_metrics = data.get("fold_metrics")
                rows.append(
                    TraceRow(
                        iteration=int(data["iteration"]),
                        y=float(data["y"]),
                        eval_seconds=float(data.get("eval_seconds", 0.0)),
                        test_metric=None if data.get("test_metric") is None else float(data["test_metric"]),
                        fold_metrics=None if fold_metrics is None else tuple(float(value) for value in fold_metrics),
                        candidate=data.get("candidate"),
                    )
                )
    except OSError as error:
        raise RecordFormatError(f"Cannot read trace '{path}': {error}")
    except (ValueError, KeyError, TypeError) as error:
        raise RecordFormatError(f"Malformed trace '{path}' at line {number}: {error}")
    rows.sort(key=lambda row: row.iteration)
    if [row.iteration for row in rows] != list(range(1, len(rows) + 1)):
        raise RecordFormatError(f"Trace '{path}' iterations must be contiguous starting at 1")
    return rows


@dataclass(frozen=True)
class RunRow:
    t: int
    candidate: Optional[Dict[str, float]]
    y: float
    incumbent_value: float
    incumbent_test: Optional[float]
    r_bar: Optional[float]
    beta_t: Optional[float]
    stop_statistic: Optional[float]
    stop_threshold: Optional[float]
    stopped: bool
    eval_seconds: float
    cum_seconds: float
    max_acq: Optional[float] = None
    true_regret: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunRow":
        return cls(**data)


@dataclass
class RunSummary:
    task: str
    criterion: str
    criterion_config: dict
    proposer: str
    seed: int
    max_iters: int
    iterations: int = 0
    stop_iteration: Optional[int] = None
    final_incumbent: Optional[float] = None
    final_test: Optional[float] = None
    reason: str = ""
    config_hash: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunRecord:
    summary: RunSummary
    rows: List[RunRow] = field(default_factory=list)

    @property
    def stop_iteration(self) -> Optional[int]:
        return self.summary.stop_iteration

    @property
    def stop_row(self) -> Optional[RunRow]:
        return next((row for row in self.rows if row.stopped), None)

    def dumps(self) -> str:
        lines = [json.dumps(row.as_dict(), sort_keys=True) for row in self.rows]
        lines.append(json.dumps({SUMMARY_KEY: self.summary.as_dict()}, sort_keys=True))
        return "\n".join(lines) + "\n"


def write_atomic(path: Union[str, Path], text: str):
    """Запись файла через временный файл в том же каталоге."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise


def write_record(record: RunRecord, path: Union[str, Path]):
    write_atomic(path, record.dumps())


def read_record(path: Union[str, Path]) -> RunRecord:
    rows, summary = [], None
    try:
        with open(path, encoding="utf-8") as stream:
            for line in stream:
                if not line.strip():
                    continue
                data = json.loads(line)
                if SUMMARY_KEY in data:
                    summary = RunSummary(**data[SUMMARY_KEY])
                else:
                    rows.append(RunRow.from_dict(data))
    except OSError as error:
        raise RecordFormatError(f"Cannot read record '{path}': {error}")
    except (ValueError, TypeError) as error:
        raise RecordFormatError(f"Malformed record '{path}': {error}")
    if summary is None:
        raise RecordFormatError(f"Record '{path}' has no summary line")
    if [row.t for row in rows] != list(range(1, len(rows) + 1)):
        raise RecordFormatError(f"Record '{path}' rows must be numbered 1..t")
    if sum(row.stopped for row in rows) > 1:
        raise RecordFormatError(f"Record '{path}' has more than one stop row")
    return RunRecord(summary=summary, rows=rows)
