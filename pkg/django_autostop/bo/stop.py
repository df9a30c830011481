"""
Критерии автоматической остановки оптимизации.

Основной критерий строится на верхней оценке простого регрета
r̄_t = min_{G_t} ucb_t − min_Γ lcb_t и сравнивает ее либо со стандартным
отклонением оценки кросс-валидации в текущем лучшем кандидате, либо с
порогом пользователя. Для сравнения доступны базовые критерии: Conv-i,
пороги на EI и PI.
"""
import logging
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from .acq import DEFAULT_BUDGET, DEFAULT_POLISH_STEPS, AcquisitionKind, maximize
from .cv import CORRECTIONS, NADEAU_BENGIO
from .exception import ConfigError, InvalidArgument, MissingInput
from .gp import GPPosterior
from .observations import ObservationLog
from .space import Candidate, PointsLike, SearchSpace, as_matrix

logger = logging.getLogger(__name__)


class CriterionKind(str, Enum):
    REGRET_CV = "regret_cv"
    REGRET_FIXED = "regret_fixed"
    CONV = "conv"
    EI_THRESHOLD = "ei_threshold"
    PI_THRESHOLD = "pi_threshold"


THRESHOLD_KINDS = (CriterionKind.REGRET_FIXED, CriterionKind.EI_THRESHOLD, CriterionKind.PI_THRESHOLD)
REGRET_KINDS = (CriterionKind.REGRET_CV, CriterionKind.REGRET_FIXED)
ACQUISITION_KINDS = {
    CriterionKind.EI_THRESHOLD: AcquisitionKind.EXPECTED_IMPROVEMENT,
    CriterionKind.PI_THRESHOLD: AcquisitionKind.PROBABILITY_OF_IMPROVEMENT,
}


@dataclass(frozen=True)
class BetaSchedule:
    gamma_cardinality: int
    delta: float = 0.1
    scale_down: float = 5.0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise InvalidArgument(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.gamma_cardinality < 1:
            raise InvalidArgument(f"gamma_cardinality must be positive, got {self.gamma_cardinality!r}")
        if not self.scale_down > 0:
            raise InvalidArgument(f"scale_down must be positive, got {self.scale_down!r}")

    def beta(self, t: int) -> float:
        """β_t = 2 log(|Γ| t² π² / (6δ)) / scale_down."""
        if t < 1:
            raise InvalidArgument(f"Iteration must be at least 1, got {t}")
        return 2.0 * math.log(self.gamma_cardinality * t**2 * math.pi**2 / (6.0 * self.delta)) / self.scale_down


def beta(schedule: BetaSchedule, t: int) -> float:
    return schedule.beta(t)


@dataclass(frozen=True)
class RegretBound:
    beta_t: float
    min_ucb: float
    min_lcb: float
    r_bar: float
    argmin_ucb: Candidate
    argmin_lcb: Candidate


@dataclass(frozen=True)
class StopDecision:
    should_stop: bool
    criterion: str
    statistic: Optional[float]
    threshold: Optional[float]
    iteration: int


@dataclass(frozen=True)
class CriterionConfig:
    kind: CriterionKind
    threshold: Optional[float] = None
    i: Optional[int] = None
    warmup_iters: int = 20
    top_fraction: float = 0.5
    delta: float = 0.1
    scale_down: float = 5.0
    correction: str = NADEAU_BENGIO
    inclusive: bool = False

    KEY_ALIASES = {"warmup": "warmup_iters"}

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", CriterionKind(self.kind))
        except ValueError:
            names = ", ".join(kind.value for kind in CriterionKind)
            raise ConfigError(f"Unknown criterion '{self.kind}'. Expected one of: {names}")
        if self.kind in THRESHOLD_KINDS and (self.threshold is None or not self.threshold > 0):
            raise ConfigError(f"Criterion '{self.kind.value}' requires a positive 'threshold'")
        if self.kind is CriterionKind.CONV and (self.i is None or self.i < 1):
            raise ConfigError("Criterion 'conv' requires 'i' >= 1")
        if self.warmup_iters < 0:
            raise ConfigError("'warmup' must be non-negative")
        if not 0 < self.top_fraction <= 1:
            raise ConfigError("'top_fraction' must lie in (0, 1]")
        if not 0 < self.delta < 1:
            raise ConfigError("'delta' must lie in (0, 1)")
        if not self.scale_down > 0:
            raise ConfigError("'scale_down' must be positive")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"'correction' must be one of: {', '.join(CORRECTIONS)}")

    @property
    def name(self) -> str:
        """Короткое имя критерия, пригодное для имени файла."""
        if self.kind is CriterionKind.CONV:
            return f"conv_{self.i}"
        if self.kind is CriterionKind.REGRET_CV:
            name = "regret_cv" if self.correction == NADEAU_BENGIO else f"regret_cv_{self.correction}"
        else:
            name = f"{self.kind.value}_{self.threshold:g}"
        if self.needs_bound and self.top_fraction != 0.5:
            name = f"{name}_q{self.top_fraction:g}"
        return name

    @property
    def needs_bound(self) -> bool:
        return self.kind in REGRET_KINDS

    @property
    def acquisition_kind(self) -> Optional[AcquisitionKind]:
        return ACQUISITION_KINDS.get(self.kind)

    def schedule(self, dim: int) -> BetaSchedule:
        return BetaSchedule(gamma_cardinality=dim, delta=self.delta, scale_down=self.scale_down)

    def as_dict(self) -> dict:
        data = {}
        for item in fields(self):
            value = getattr(self, item.name)
            data[item.name] = value.value if isinstance(value, Enum) else value
        return data

    @classmethod
    def parse(cls, text: str) -> "CriterionConfig":
        """
        Разбор строки вида `name:key=val,key=val`, например
        `regret_fixed:threshold=0.001,warmup=20` или `conv:i=10`.
        """
        name, _, options = text.strip().partition(":")
        kwargs = {"kind": name.strip()}
        known = {item.name for item in fields(cls)}
        for chunk in filter(None, (part.strip() for part in options.split(","))):
            key, sep, raw = chunk.partition("=")
            key = cls.KEY_ALIASES.get(key.strip(), key.strip())
            if not sep or key not in known or key == "kind":
                raise ConfigError(f"Unknown criterion option '{chunk}' in '{text}'")
            kwargs[key] = _coerce(key, raw.strip())
        return cls(**kwargs)

    @classmethod
    def from_config(cls, value) -> "CriterionConfig":
        if isinstance(value, CriterionConfig):
            return value
        if isinstance(value, str):
            return cls.parse(value)
        if isinstance(value, dict):
            data = {cls.KEY_ALIASES.get(key, key): item for key, item in value.items()}
            try:
                return cls(**data)
            except TypeError as error:
                raise ConfigError(f"Malformed criterion {value!r}: {error}")
        raise ConfigError(f"Malformed criterion {value!r}")


def _coerce(key: str, raw: str):
    try:
        if key in ("i", "warmup_iters"):
            return int(raw)
        if key == "inclusive":
            return raw.lower() in ("1", "true", "yes")
        if key == "correction":
            return raw
        return float(raw)
    except ValueError:
        raise ConfigError(f"Invalid value '{raw}' for criterion option '{key}'")


CRITERION_SUITES = {
    "conv": ["conv:i=10", "conv:i=30", "conv:i=50"],
    "ei": ["ei_threshold:threshold=1e-9", "ei_threshold:threshold=1e-13", "ei_threshold:threshold=1e-17"],
    "pi": ["pi_threshold:threshold=1e-5", "pi_threshold:threshold=1e-9", "pi_threshold:threshold=1e-13"],
    "regret_fixed": [
        "regret_fixed:threshold=0.0001",
        "regret_fixed:threshold=0.001",
        "regret_fixed:threshold=0.01",
    ],
    "regret_cv": ["regret_cv", "regret_cv:correction=empirical"],
}
CRITERION_SUITES["cv"] = CRITERION_SUITES["conv"] + CRITERION_SUITES["ei"] + CRITERION_SUITES["pi"] + CRITERION_SUITES[
    "regret_cv"
]
CRITERION_SUITES["holdout"] = CRITERION_SUITES["conv"] + CRITERION_SUITES["regret_fixed"]


def criterion_suite(name: str) -> List[CriterionConfig]:
    try:
        return [CriterionConfig.parse(item) for item in CRITERION_SUITES[name]]
    except KeyError:
        raise ConfigError(f"Unknown criterion suite '{name}'. Expected one of: {', '.join(sorted(CRITERION_SUITES))}")


@dataclass
class CriterionState:
    best: float = math.inf
    stale: int = 0
    stopped_at: Optional[int] = None


@dataclass(frozen=True)
class StopInputs:
    t: int
    r_bar: Optional[float] = None
    cv_var_at_incumbent: Optional[float] = None
    best_history: Sequence[float] = field(default_factory=tuple)
    max_acq: Optional[float] = None


def filter_top_q(log: ObservationLog, q: float) -> ObservationLog:
    """
    Оставить ⌈q·t⌉ наблюдений с наименьшими y.
    При равенстве значений предпочтение отдается более ранним итерациям,
    исходный порядок сохраняется.
    """
    if not 0 < q <= 1:
        raise InvalidArgument(f"q must lie in (0, 1], got {q!r}")
    if not len(log):
        raise InvalidArgument("Observation log is empty")
    keep = math.ceil(round(q * len(log), 9))
    order = sorted(range(len(log)), key=lambda index: (log[index].y, log[index].iteration))
    selected = sorted(order[:keep])
    return log.subset([log[index] for index in selected])


def regret_upper_bound(
    gp: GPPosterior,
    space: SearchSpace,
    evaluated: PointsLike,
    t: int,
    schedule: BetaSchedule,
    search_budget: int = DEFAULT_BUDGET,
    stream: Optional[np.random.Generator] = None,
    pool: Optional[np.ndarray] = None,
    polish_steps: int = DEFAULT_POLISH_STEPS,
) -> RegretBound:
    """
    Верхняя оценка простого регрета.

    :param gp: Апостериорное распределение (обычно по отфильтрованному журналу).
    :param evaluated: Все вычисленные кандидаты G_t.
    :param t: Номер итерации для β_t.
    :param search_budget: Число квазислучайных кандидатов при поиске min lcb.
    :param pool: Конечная область Γ; если задана, min lcb ищется перебором.
    """
    points = as_matrix(evaluated, len(space))
    if not len(points):
        raise InvalidArgument("At least one evaluated candidate is required")
    stream = stream if stream is not None else np.random.default_rng(0)
    beta_t = schedule.beta(t)
    width = math.sqrt(beta_t)

    means, variances = gp.predict(points)
    deviations = np.sqrt(variances)
    ucb = means + width * deviations
    lcb = means - width * deviations
    best_ucb = int(np.argmin(ucb))
    best_lcb = int(np.argmin(lcb))

    def negative_lcb(candidates):
        pool_means, pool_variances = gp.predict(candidates)
        return -(pool_means - width * np.sqrt(pool_variances))

    point, value = maximize(
        negative_lcb, space, search_budget, stream, pool=pool, include=points, polish_steps=polish_steps
    )
    if -value < lcb[best_lcb]:
        min_lcb, argmin_lcb = -value, Candidate.from_array(point)
    else:
        min_lcb, argmin_lcb = float(lcb[best_lcb]), Candidate.from_array(points[best_lcb])
    min_ucb = float(ucb[best_ucb])
    return RegretBound(
        beta_t=beta_t,
        min_ucb=min_ucb,
        min_lcb=min_lcb,
        r_bar=min_ucb - min_lcb,
        argmin_ucb=Candidate.from_array(points[best_ucb]),
        argmin_lcb=argmin_lcb,
    )


def _below(statistic: float, threshold: float, inclusive: bool) -> bool:
    return statistic <= threshold if inclusive else statistic < threshold


def _require(config: CriterionConfig, inputs: StopInputs, name: str):
    value = getattr(inputs, name)
    if value is None:
        raise MissingInput(config.kind.value, name)
    return value


def check(config: CriterionConfig, state: CriterionState, inputs: StopInputs) -> StopDecision:
    """
    Проверить условие остановки на итерации `inputs.t`.
    Состояние `state` принадлежит одному прогону и обновляется на месте.
    """
    if inputs.t < 1:
        raise InvalidArgument(f"Iteration must be at least 1, got {inputs.t}")
    after_warmup = inputs.t > config.warmup_iters

    if config.kind is CriterionKind.CONV:
        if not inputs.best_history:
            raise MissingInput(config.kind.value, "best_history")
        current = inputs.best_history[-1]
        if current < state.best:
            state.best = current
            state.stale = 0
        else:
            state.stale += 1
        statistic, threshold = float(state.stale), float(config.i)
        should_stop = state.stale >= config.i
    elif config.kind is CriterionKind.REGRET_CV:
        statistic = _require(config, inputs, "r_bar")
        threshold = math.sqrt(max(_require(config, inputs, "cv_var_at_incumbent"), 0.0))
        should_stop = after_warmup and _below(statistic, threshold, config.inclusive)
    elif config.kind is CriterionKind.REGRET_FIXED:
        statistic, threshold = _require(config, inputs, "r_bar"), config.threshold
        should_stop = after_warmup and _below(statistic, threshold, config.inclusive)
    else:
        statistic, threshold = _require(config, inputs, "max_acq"), config.threshold
        should_stop = after_warmup and _below(statistic, threshold, config.inclusive)

    if should_stop and state.stopped_at is None:
        state.stopped_at = inputs.t
        logger.info("Criterion %s fired at iteration %d (%g vs %g)", config.name, inputs.t, statistic, threshold)
    return StopDecision(
        should_stop=bool(should_stop),
        criterion=config.name,
        statistic=None if statistic is None else float(statistic),
        threshold=None if threshold is None else float(threshold),
        iteration=inputs.t,
    )
