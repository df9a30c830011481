import json
import sys
from pathlib import Path

import pytest

from django_autostop.bo.engine import EngineOptions

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def fast_options():
    return EngineOptions(gp_restarts=2, acq_budget=128, bound_budget=128, polish_steps=5, init_points=3)


@pytest.fixture
def echo_command():
    return [sys.executable, str(FIXTURES / "echo_stub.py")]


def write_trace(path: Path, ys, candidates=None, test_metrics=None, seconds=1.0):
    """Записать трассу в формате построчного JSON."""
    lines = []
    for index, y in enumerate(ys):
        row = {"iteration": index + 1, "y": y, "eval_seconds": seconds}
        if candidates is not None:
            row["candidate"] = candidates[index]
        if test_metrics is not None:
            row["test_metric"] = test_metrics[index]
        lines.append(json.dumps(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def plateau_trace(path: Path, rows: int = 50, plateau_from: int = 12):
    """Значения улучшаются до строки `plateau_from`, затем перестают улучшаться."""
    ys = [1.0 - 0.05 * t if t <= plateau_from else 1.0 for t in range(1, rows + 1)]
    return write_trace(path, ys, test_metrics=[y + 0.1 for y in ys])


def write_config(path: Path, config: dict) -> Path:
    path.write_text(json.dumps(config), encoding="utf-8")
    return path
