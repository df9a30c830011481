import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import erfc

from .exception import InvalidArgument, NegativeVariance
from .gp import GPPosterior
from .space import Candidate, SearchSpace

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 2048
DEFAULT_POLISH_STEPS = 50
POLISH_STARTS = 5
POLISH_INITIAL_STEP = 0.1
POLISH_MIN_STEP = 1e-6

INV_SQRT2 = 1.0 / math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

ScoreFunction = Callable[[np.ndarray], np.ndarray]


class AcquisitionKind(str, Enum):
    EXPECTED_IMPROVEMENT = "ei"
    PROBABILITY_OF_IMPROVEMENT = "pi"


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: AcquisitionKind
    incumbent_value: float

    def __post_init__(self):
        object.__setattr__(self, "kind", AcquisitionKind(self.kind))
        if not math.isfinite(self.incumbent_value):
            raise InvalidArgument(f"Incumbent value must be finite, got {self.incumbent_value!r}")


def normal_cdf(z):
    return 0.5 * erfc(-np.asarray(z, dtype=float) * INV_SQRT2)


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    return INV_SQRT2PI * np.exp(-0.5 * z**2)


def acq_values(spec: AcquisitionSpec, means, variances) -> np.ndarray:
    """
    Значения функции приобретения (в постановке минимизации) для
    векторов апостериорных средних и дисперсий.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if np.any(variances < 0):
        raise NegativeVariance(f"Variance must be non-negative, got {variances.min()!r}")
    deviations = np.sqrt(variances)
    improvement = spec.incumbent_value - means
    positive = deviations > 0
    z = np.divide(improvement, deviations, out=np.zeros_like(improvement), where=positive)
    if spec.kind is AcquisitionKind.EXPECTED_IMPROVEMENT:
        smooth = improvement * normal_cdf(z) + deviations * normal_pdf(z)
        values = np.where(positive, smooth, np.maximum(improvement, 0.0))
        return np.maximum(values, 0.0)
    return np.where(positive, normal_cdf(z), (means < spec.incumbent_value).astype(float))


def acq_value(spec: AcquisitionSpec, mean: float, variance: float) -> float:
    return float(acq_values(spec, np.array([mean]), np.array([variance]))[0])


def _pattern_search(score: ScoreFunction, start: np.ndarray, start_value: float, steps: int):
    """
    Покоординатный поиск по образцу внутри единичного куба.
    Шаг уменьшается вдвое, если ни один из 2d соседей не улучшил значение.
    """
    point, value = start.copy(), start_value
    step = POLISH_INITIAL_STEP
    dim = len(point)
    for _ in range(steps):
        neighbours = np.repeat(point[None, :], 2 * dim, axis=0)
        for j in range(dim):
            neighbours[2 * j, j] += step
            neighbours[2 * j + 1, j] -= step
        neighbours = np.clip(neighbours, 0.0, 1.0)
        scores = score(neighbours)
        best = int(np.argmax(scores))
        if scores[best] > value:
            point, value = neighbours[best], float(scores[best])
        else:
            step /= 2.0
            if step < POLISH_MIN_STEP:
                break
    return point, value


def maximize(
    score: ScoreFunction,
    space: SearchSpace,
    budget: int,
    stream: np.random.Generator,
    pool: Optional[np.ndarray] = None,
    include: Optional[np.ndarray] = None,
    polish_steps: int = DEFAULT_POLISH_STEPS,
) -> Tuple[np.ndarray, float]:
    """
    Максимизация функции по пространству поиска: перебор квазислучайных
    кандидатов и локальная доводка от пяти лучших.

    :param score: Векторизованная функция, матрица (n, d) -> вектор (n,).
    :param budget: Число квазислучайных кандидатов.
    :param pool: Конечное множество кандидатов. Если задано, перебирается
        только оно и доводка не выполняется.
    :param include: Кандидаты, которые всегда добавляются к перебору.
    :param polish_steps: Число шагов локальной доводки.
    """
    if budget < 1:
        raise InvalidArgument(f"Search budget must be positive, got {budget}")
    candidates = np.asarray(pool, dtype=float) if pool is not None else space.sobol_array(budget, stream)
    if include is not None and len(include):
        candidates = np.vstack([candidates, np.asarray(include, dtype=float)])
    scores = np.asarray(score(candidates), dtype=float)
    best = int(np.argmax(scores))
    best_point, best_value = candidates[best], float(scores[best])
    if pool is None and polish_steps > 0:
        for index in np.argsort(-scores, kind="stable")[:POLISH_STARTS]:
            point, value = _pattern_search(score, candidates[index], float(scores[index]), polish_steps)
            if value > best_value:
                best_point, best_value = point, value
    return best_point, best_value


def propose(
    gp: GPPosterior,
    space: SearchSpace,
    spec: AcquisitionSpec,
    budget: int = DEFAULT_BUDGET,
    stream: Optional[np.random.Generator] = None,
    pool: Optional[np.ndarray] = None,
    polish_steps: int = DEFAULT_POLISH_STEPS,
) -> Tuple[Candidate, float]:
    """
    Выбрать следующего кандидата как максимум функции приобретения.
    При равенстве значений выбирается кандидат с меньшим индексом.
    """
    stream = stream if stream is not None else np.random.default_rng(0)

    def score(points):
        return acq_values(spec, *gp.predict(points))

    point, value = maximize(score, space, budget, stream, pool=pool, polish_steps=polish_steps)
    return Candidate.from_array(point), value


def max_acq_over_space(
    gp: GPPosterior,
    space: SearchSpace,
    spec: AcquisitionSpec,
    budget: int = DEFAULT_BUDGET,
    stream: Optional[np.random.Generator] = None,
    pool: Optional[np.ndarray] = None,
    polish_steps: int = DEFAULT_POLISH_STEPS,
) -> float:
    _, value = propose(gp, space, spec, budget, stream, pool=pool, polish_steps=polish_steps)
    return value
