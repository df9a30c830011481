"""
Цикл байесовской оптимизации с кросс-валидацией и автоматической остановкой.

На каждой итерации: выбор кандидата -> вычисление -> обновление лучшего
кандидата и его оценки дисперсии -> подгонка GP по лучшей доле наблюдений ->
верхняя оценка регрета -> проверка критерия остановки.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .acq import DEFAULT_BUDGET, DEFAULT_POLISH_STEPS, AcquisitionKind, AcquisitionSpec, propose
from .cv import cv_stats
from .exception import (
    ConfigError,
    InvalidArgument,
    LengthMismatch,
    NotAvailable,
    ObjectiveError,
    ObjectiveFailure,
    ReplayExhausted,
)
from .gp import DEFAULT_RESTARTS, GPPosterior, KernelParams, fit
from .objectives import ObjectiveAdapter, evaluate, true_regret
from .observations import Observation, ObservationLog
from .records import RunRecord, RunRow, RunSummary
from .space import Candidate, SearchSpace
from .stop import (
    CriterionConfig,
    CriterionKind,
    CriterionState,
    StopDecision,
    StopInputs,
    check,
    filter_top_q,
    regret_upper_bound,
)

logger = logging.getLogger(__name__)

STREAM_PROPOSER = 0
STREAM_GP = 1
STREAM_BOUND = 2
STREAM_ACQUISITION = 3


class ProposerKind(str, Enum):
    GPBO = "gpbo"
    RANDOM = "random"


@dataclass(frozen=True)
class Proposer:
    kind: ProposerKind = ProposerKind.GPBO
    acquisition: AcquisitionKind = AcquisitionKind.EXPECTED_IMPROVEMENT

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", ProposerKind(self.kind))
            object.__setattr__(self, "acquisition", AcquisitionKind(self.acquisition))
        except ValueError as error:
            raise ConfigError(f"Malformed proposer: {error}")

    @property
    def name(self) -> str:
        if self.kind is ProposerKind.RANDOM:
            return self.kind.value
        return f"{self.kind.value}_{self.acquisition.value}"

    @classmethod
    def from_config(cls, value) -> "Proposer":
        if isinstance(value, Proposer):
            return value
        if isinstance(value, str):
            return cls(kind=value)
        if isinstance(value, dict):
            return cls(kind=value.get("type", ProposerKind.GPBO), acquisition=value.get("acquisition", "ei"))
        raise ConfigError(f"Malformed proposer {value!r}")


@dataclass(frozen=True)
class EngineOptions:
    gp_restarts: int = DEFAULT_RESTARTS
    acq_budget: int = DEFAULT_BUDGET
    bound_budget: int = DEFAULT_BUDGET
    polish_steps: int = DEFAULT_POLISH_STEPS
    init_points: int = 3
    kernel: Optional[KernelParams] = None
    ddof: int = 0


@dataclass
class Incumbent:
    candidate: Optional[Candidate]
    value: float
    iteration_found: int
    cv_corrected_variance: Optional[float] = None
    test_metric: Optional[float] = None


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class RunState:
    """
    Состояние одного прогона. Экземпляр принадлежит одному потоку.
    """

    def __init__(
        self,
        space: SearchSpace,
        objective: ObjectiveAdapter,
        proposer: Proposer,
        criterion: CriterionConfig,
        max_iters: int,
        seed: int,
        options: EngineOptions,
    ):
        self.space = space
        self.objective = objective
        self.proposer = proposer
        self.criterion = criterion
        self.max_iters = max_iters
        self.seed = seed
        self.options = options
        self.schedule = criterion.schedule(len(space))
        self.log = ObservationLog()
        self.incumbent: Optional[Incumbent] = None
        self.state = CriterionState()
        self.streams = {
            key: space.stream(seed, key) for key in (STREAM_PROPOSER, STREAM_GP, STREAM_BOUND, STREAM_ACQUISITION)
        }
        self._proposal_gp: Optional[GPPosterior] = None
        self._proposal_size = -1
        self._pending: Optional[Candidate] = None
        self._warned_bound = False
        self._warned_cv = False
        self.record = RunRecord(
            summary=RunSummary(
                task=objective.task,
                criterion=criterion.name,
                criterion_config=criterion.as_dict(),
                proposer=proposer.name,
                seed=int(seed),
                max_iters=max_iters,
            )
        )

    @property
    def domain(self) -> Optional[np.ndarray]:
        return self.objective.domain

    def _gp(self, points: np.ndarray, values: np.ndarray) -> Optional[GPPosterior]:
        if len(values) < 2:
            return None
        if self.options.kernel is not None:
            return GPPosterior.condition(self.options.kernel, points, values)
        return fit(self.space, points, values, restarts=self.options.gp_restarts, stream=self.streams[STREAM_GP])

    def proposal_gp(self) -> Optional[GPPosterior]:
        """GP по полному журналу; пересчитывается только при появлении новых наблюдений."""
        if self._proposal_size != len(self.log):
            self._proposal_gp = self._gp(self.log.points(len(self.space)), self.log.values)
            self._proposal_size = len(self.log)
        return self._proposal_gp

    def _random_candidate(self) -> Candidate:
        stream = self.streams[STREAM_PROPOSER]
        if self.domain is not None:
            return Candidate.from_array(self.domain[int(stream.integers(len(self.domain)))])
        return self.space.sample_candidates(1, stream)[0]

    def _propose(self, kind: AcquisitionKind):
        spec = AcquisitionSpec(kind, self.incumbent.value)
        return propose(
            self.proposal_gp(),
            self.space,
            spec,
            budget=self.options.acq_budget,
            stream=self.streams[STREAM_ACQUISITION],
            pool=self.domain,
            polish_steps=self.options.polish_steps,
        )

    def next_candidate(self, t: int) -> Optional[Candidate]:
        if self.objective.fixed_sequence:
            return self.objective.next_candidate(self.space)
        if self.proposer.kind is ProposerKind.RANDOM or t <= self.options.init_points:
            return self._random_candidate()
        if self._pending is not None:
            candidate, self._pending = self._pending, None
            return candidate
        if self.proposal_gp() is None:
            return self._random_candidate()
        candidate, _ = self._propose(self.proposer.acquisition)
        return candidate

    def update_incumbent(self, observation: Observation):
        if self.incumbent is not None and not observation.y < self.incumbent.value:
            return
        variance = None
        if observation.fold_values and len(observation.fold_values) >= 2:
            stats = cv_stats(
                observation.fold_values,
                k=len(observation.fold_values),
                ddof=self.options.ddof,
                correction=self.criterion.correction,
            )
            variance = stats.corrected_variance
        self.incumbent = Incumbent(
            candidate=observation.candidate,
            value=observation.y,
            iteration_found=observation.iteration,
            cv_corrected_variance=variance,
            test_metric=observation.test_metric,
        )

    def cv_unavailable(self) -> bool:
        """Лучший кандидат без оценок по фолдам: критерий regret_cv не срабатывает."""
        if self.criterion.kind is not CriterionKind.REGRET_CV or self.incumbent.cv_corrected_variance is not None:
            return False
        if not self._warned_cv:
            logger.warning(
                "Incumbent of '%s' carries fewer than 2 fold values, CV threshold is unavailable", self.objective.task
            )
            self._warned_cv = True
        return True

    def bound(self, t: int):
        filtered = filter_top_q(self.log, self.criterion.top_fraction)
        if not self.log.has_candidates or len(filtered) < 2:
            if not self.log.has_candidates and not self._warned_bound:
                logger.warning("Trace '%s' carries no candidates, regret bound is unavailable", self.objective.task)
                self._warned_bound = True
            return None
        dim = len(self.space)
        gp = self._gp(filtered.points(dim), filtered.values)
        return regret_upper_bound(
            gp,
            self.space,
            self.log.points(dim),
            t,
            self.schedule,
            search_budget=self.options.bound_budget,
            stream=self.streams[STREAM_BOUND],
            pool=self.domain,
            polish_steps=self.options.polish_steps,
        )

    def max_acq(self, t: int) -> Optional[float]:
        kind = self.criterion.acquisition_kind
        if not self.log.has_candidates or self.proposal_gp() is None:
            return None
        candidate, value = self._propose(kind)
        reuse = (
            self.proposer.kind is ProposerKind.GPBO
            and self.proposer.acquisition is kind
            and not self.objective.fixed_sequence
            and t >= self.options.init_points
        )
        if reuse:
            self._pending = candidate
        return value

    def step(self, t: int) -> RunRow:
        try:
            candidate = self.next_candidate(t)
            evaluation = evaluate(self.objective, self.space, candidate, t)
        except ReplayExhausted as error:
            error.record = self.record
            raise
        except ObjectiveError as error:
            raise ObjectiveFailure(t, error, record=self.record) from error
        observation = Observation(
            iteration=t,
            candidate=candidate,
            y=evaluation.y,
            fold_values=evaluation.fold_values,
            eval_seconds=evaluation.eval_seconds,
            test_metric=evaluation.test_metric,
        )
        self.log.append(observation)
        self.update_incumbent(observation)

        bound = self.bound(t) if self.criterion.needs_bound else None
        max_acq = self.max_acq(t) if self.criterion.acquisition_kind else None
        inputs = StopInputs(
            t=t,
            r_bar=bound.r_bar if bound else math.inf,
            cv_var_at_incumbent=self.incumbent.cv_corrected_variance,
            best_history=self.log.best_history(),
            max_acq=math.inf if max_acq is None else max_acq,
        )
        if self.cv_unavailable():
            decision = StopDecision(False, self.criterion.name, _finite_or_none(inputs.r_bar), None, t)
        else:
            decision = check(self.criterion, self.state, inputs)
        first_stop = decision.should_stop and self.record.summary.stop_iteration is None
        if first_stop:
            self.record.summary.stop_iteration = t

        previous = self.record.rows[-1].cum_seconds if self.record.rows else 0.0
        regret = None
        if self.incumbent.candidate is not None:
            try:
                regret = true_regret(self.objective, self.incumbent.candidate)
            except NotAvailable:
                regret = None
        row = RunRow(
            t=t,
            candidate=None if candidate is None else self._external(candidate),
            y=float(evaluation.y),
            incumbent_value=float(self.incumbent.value),
            incumbent_test=_finite_or_none(self.incumbent.test_metric),
            r_bar=_finite_or_none(bound.r_bar) if bound else None,
            beta_t=bound.beta_t if bound else None,
            stop_statistic=_finite_or_none(decision.statistic),
            stop_threshold=_finite_or_none(decision.threshold),
            stopped=first_stop,
            eval_seconds=float(evaluation.eval_seconds),
            cum_seconds=previous + float(evaluation.eval_seconds),
            max_acq=_finite_or_none(max_acq),
            true_regret=regret,
        )
        self.record.rows.append(row)
        logger.debug("Iteration %d: y=%g, incumbent=%g, r_bar=%s", t, row.y, row.incumbent_value, row.r_bar)
        return row

    def _external(self, candidate: Candidate) -> Dict[str, float]:
        return {dim.name: float(value) for dim, value in zip(self.space.dims, self.space.from_internal(candidate))}

    def execute(self, continue_after_stop: bool = False) -> RunRecord:
        logger.info(
            "Run started: task=%s criterion=%s proposer=%s seed=%s",
            self.objective.task,
            self.criterion.name,
            self.proposer.name,
            self.seed,
        )
        self.objective.start(self.space, self.seed)
        summary = self.record.summary
        summary.reason = "budget"
        for t in range(1, self.max_iters + 1):
            row = self.step(t)
            if row.stopped and not continue_after_stop:
                summary.reason = "criterion"
                break
        summary.iterations = len(self.record.rows)
        summary.final_incumbent = float(self.incumbent.value)
        summary.final_test = _finite_or_none(self.incumbent.test_metric)
        logger.info(
            "Run finished: %d iterations, stop at %s, incumbent %g",
            summary.iterations,
            summary.stop_iteration,
            summary.final_incumbent,
        )
        return self.record


def run(
    space: SearchSpace,
    objective: ObjectiveAdapter,
    proposer: Union[Proposer, str, dict],
    criterion: Union[CriterionConfig, str, dict],
    max_iters: int,
    seed: int,
    options: Optional[EngineOptions] = None,
    continue_after_stop: bool = False,
) -> RunRecord:
    """
    Выполнить один прогон оптимизации.

    :param space: Пространство поиска.
    :param objective: Адаптер целевой функции (экземпляр на один прогон).
    :param proposer: GP-BO с функцией приобретения или случайный поиск.
    :param criterion: Критерий остановки.
    :param max_iters: Максимальное число итераций.
    :param seed: Зерно; прогон полностью определяется им.
    :param continue_after_stop: Продолжать до `max_iters`, отмечая только первую остановку.
    """
    if max_iters < 1:
        raise InvalidArgument(f"max_iters must be positive, got {max_iters}")
    state = RunState(
        space,
        objective,
        Proposer.from_config(proposer),
        CriterionConfig.from_config(criterion),
        max_iters,
        seed,
        options or EngineOptions(),
    )
    return state.execute(continue_after_stop=continue_after_stop)


def selection_gap_check(f_values: Sequence[float], fhat_values: Sequence[float], t_index: int) -> dict:
    """
    Проверка неравенства f(γ*_t) − f(γ*) ≤ 2‖f̂ − f‖∞ + r̂_t на конечной области.

    :param f_values: Значения истинной функции f на всех точках области.
    :param fhat_values: Значения оценки f̂ на тех же точках.
    :param t_index: Число первых точек, среди которых выбирается γ*_t = argmin f̂.
    """
    f_values = np.asarray(f_values, dtype=float)
    fhat_values = np.asarray(fhat_values, dtype=float)
    if f_values.shape != fhat_values.shape:
        raise LengthMismatch(f"f has {f_values.size} values, f̂ has {fhat_values.size}")
    if not 1 <= t_index <= len(f_values):
        raise InvalidArgument(f"t_index must lie in [1, {len(f_values)}], got {t_index}")
    reported = int(np.argmin(fhat_values[:t_index]))
    lhs = float(f_values[reported] - np.min(f_values))
    epsilon = float(np.max(np.abs(fhat_values - f_values)))
    rhs = 2.0 * epsilon + float(fhat_values[reported] - np.min(fhat_values))
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + 1e-12}
