"""
Учет k-кратной кросс-валидации и поправленная оценка дисперсии
среднего по фолдам (поправка Надо-Бенжио).
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np

from .exception import BadFoldCount, InvalidArgument, LengthMismatch

NADEAU_BENGIO = "nadeau_bengio"
EMPIRICAL = "empirical"
EMPIRICAL_FACTOR = 0.5
CORRECTIONS = (NADEAU_BENGIO, EMPIRICAL)


@dataclass(frozen=True)
class FoldSpec:
    n: int
    k: int
    assignment: Tuple[int, ...]

    @property
    def sizes(self) -> Tuple[int, ...]:
        counts = np.bincount(np.asarray(self.assignment, dtype=int), minlength=self.k)
        return tuple(int(value) for value in counts)

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) == fold)

    def as_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "sizes": list(self.sizes)}


@dataclass(frozen=True)
class CVStats:
    fold_values: Tuple[float, ...]
    mean: float
    sample_variance: float
    corrected_variance: float
    correction_factor: float


def make_folds(n: int, k: int, stream: np.random.Generator) -> FoldSpec:
    """
    Случайное разбиение {0..n-1} на k фолдов, размеры которых
    различаются не более чем на единицу.
    """
    if not 2 <= k <= n:
        raise BadFoldCount(f"Fold count must satisfy 2 <= k <= n, got k={k}, n={n}")
    assignment = np.empty(n, dtype=int)
    for fold, block in enumerate(np.array_split(stream.permutation(n), k)):
        assignment[block] = fold
    return FoldSpec(n=n, k=k, assignment=tuple(int(value) for value in assignment))


def correction_factor(k: int, fold_size: float, rest_size: float) -> float:
    if k < 2:
        raise BadFoldCount(f"Fold count must be at least 2, got {k}")
    if fold_size <= 0 or rest_size <= 0:
        raise InvalidArgument("Fold and rest sizes must be positive")
    return float(Fraction(1, k) + Fraction(fold_size) / Fraction(rest_size))


def cv_stats(
    fold_values: Sequence[float],
    k: int,
    fold_size: float = 1,
    rest_size: Optional[float] = None,
    ddof: int = 0,
    correction: str = NADEAU_BENGIO,
) -> CVStats:
    """
    Статистики кросс-валидации для одного кандидата.

    :param fold_values: Значения метрики на каждом из k фолдов.
    :param fold_size: Размер одного фолда |D_i|.
    :param rest_size: Размер обучающей части |D_-i|, по умолчанию (k - 1) * fold_size.
    :param ddof: 0 - нормировка 1/k, 1 - несмещенная 1/(k - 1).
    :param correction: `nadeau_bengio` или `empirical` (постоянный множитель 0.5).
    """
    values = np.asarray(fold_values, dtype=float)
    if len(values) != k:
        raise LengthMismatch(f"Expected {k} fold values, got {len(values)}")
    if ddof not in (0, 1):
        raise InvalidArgument(f"ddof must be 0 or 1, got {ddof}")
    if rest_size is None:
        rest_size = (k - 1) * fold_size
    if correction == NADEAU_BENGIO:
        factor = correction_factor(k, fold_size, rest_size)
    elif correction == EMPIRICAL:
        factor = EMPIRICAL_FACTOR
    else:
        raise InvalidArgument(f"Unknown correction '{correction}'. Expected one of: {', '.join(CORRECTIONS)}")
    mean = math.fsum(values) / k
    variance = math.fsum((values - mean) ** 2) / (k - ddof)
    return CVStats(
        fold_values=tuple(float(value) for value in values),
        mean=mean,
        sample_variance=variance,
        corrected_variance=factor * variance,
        correction_factor=factor,
    )
