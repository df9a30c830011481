import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .exception import InvalidArgument
from .space import Candidate


@dataclass(frozen=True)
class Observation:
    iteration: int
    candidate: Optional[Candidate]
    y: float
    fold_values: Optional[Tuple[float, ...]] = None
    eval_seconds: float = 0.0
    test_metric: Optional[float] = None

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise InvalidArgument(f"Observed value at iteration {self.iteration} must be finite, got {self.y!r}")
        if self.eval_seconds < 0:
            raise InvalidArgument(f"eval_seconds must be non-negative, got {self.eval_seconds!r}")
        if self.fold_values is not None:
            object.__setattr__(self, "fold_values", tuple(float(value) for value in self.fold_values))


@dataclass
class ObservationLog:
    """
    Множество вычисленных точек G_t со значениями y_{1:t}.
    Итерации нумеруются подряд начиная с 1.
    """

    records: List[Observation] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[Observation]:
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def append(self, observation: Observation):
        expected = len(self.records) + 1
        if observation.iteration != expected:
            raise InvalidArgument(f"Expected iteration {expected}, got {observation.iteration}")
        self.records.append(observation)

    @property
    def values(self) -> np.ndarray:
        return np.array([record.y for record in self.records], dtype=float)

    @property
    def candidates(self) -> List[Candidate]:
        return [record.candidate for record in self.records]

    @property
    def has_candidates(self) -> bool:
        return all(record.candidate is not None for record in self.records)

    def points(self, dim: int) -> np.ndarray:
        if not self.records:
            return np.zeros((0, dim))
        return np.array([record.candidate.coords for record in self.records], dtype=float)

    def best_history(self) -> List[float]:
        """Префиксные минимумы y - траектория текущего лучшего значения."""
        return list(np.minimum.accumulate(self.values)) if self.records else []

    def subset(self, records: List[Observation]) -> "ObservationLog":
        """Подмножество наблюдений без проверки непрерывности нумерации."""
        log = ObservationLog()
        log.records = list(records)
        return log
