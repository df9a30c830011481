"""
Адаптеры целевой функции: синтетические функции с известным минимумом,
внешний процесс и воспроизведение записанной трассы.
"""
import abc
import itertools
import json
import logging
import math
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exception import (
    ConfigError,
    InvalidArgument,
    NotAvailable,
    ObjectiveError,
    ReplayExhausted,
    ReplayMismatch,
    SubprocessError,
)
from .gp import KernelParams, factorize, matern52
from .records import TraceRow, read_trace
from .space import Candidate, LinearDimension, SearchSpace

logger = logging.getLogger(__name__)

STREAM_OBJECTIVE = 4
CANDIDATE_TOLERANCE = 1e-9
BRANIN_MINIMUM = 5.0 / (4.0 * math.pi)


@dataclass(frozen=True)
class Evaluation:
    y: float
    fold_values: Optional[Tuple[float, ...]] = None
    eval_seconds: float = 0.0
    test_metric: Optional[float] = None


@dataclass(frozen=True, eq=False)
class SyntheticFunction:
    """
    Целевая функция в замкнутой форме с зарегистрированным минимумом.
    Функция принимает внешние координаты (в единицах пространства).
    """

    name: str
    space: SearchSpace
    function: Callable[[np.ndarray], float]
    optimum_value: float
    optimizers: Tuple[Tuple[float, ...], ...] = ()
    domain: Optional[np.ndarray] = None
    kernel: Optional[KernelParams] = None

    def __call__(self, external: np.ndarray) -> float:
        return float(self.function(np.asarray(external, dtype=float)))


def _unit_space(dim: int, lower: float = 0.0, upper: float = 1.0) -> SearchSpace:
    return SearchSpace(dims=tuple(LinearDimension(f"x{j}", lower, upper) for j in range(dim)))


def sphere(dim: int = 2, lower: float = -1.0, upper: float = 1.0) -> SyntheticFunction:
    return SyntheticFunction(
        name="sphere",
        space=_unit_space(dim, lower, upper),
        function=lambda x: float(np.sum(x**2)),
        optimum_value=0.0,
        optimizers=(tuple([0.0] * dim),),
    )


def _branin(x: np.ndarray) -> float:
    x1, x2 = x
    b, c, r, s, t = 5.1 / (4 * math.pi**2), 5 / math.pi, 6.0, 10.0, 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * math.cos(x1) + s


def branin() -> SyntheticFunction:
    """Функция Бранина, приведенная к масштабу порядка единицы: (f - 54.81) / 51.95."""
    space = SearchSpace(dims=(LinearDimension("x0", -5.0, 10.0), LinearDimension("x1", 0.0, 15.0)))
    return SyntheticFunction(
        name="branin",
        space=space,
        function=lambda x: (_branin(x) - 54.81) / 51.95,
        optimum_value=(BRANIN_MINIMUM - 54.81) / 51.95,
        optimizers=((-math.pi, 12.275), (math.pi, 2.275), (9.42478, 2.475)),
    )


def gp_sample(
    dim: int = 1, points: int = 100, lengthscale: float = 0.1, seed: int = 0, signal_variance: float = 1.0
) -> SyntheticFunction:
    """
    Реализация гауссовского процесса с ядром Матерна 5/2 на регулярной сетке.
    Область определения функции - узлы сетки, минимум известен точно.

    :param points: Число узлов (для dim > 1 округляется до side ** dim).
    :param seed: Зерно реализации.
    """
    side = points if dim == 1 else max(2, int(round(points ** (1.0 / dim))))
    axis = np.linspace(0.0, 1.0, side)
    grid = np.array(list(itertools.product(*([axis] * dim))), dtype=float)
    kernel = KernelParams(signal_variance, tuple([lengthscale] * dim), noise_variance=1e-6)
    covariance = matern52(grid, grid, kernel.signal_variance, kernel.lengthscales)
    covariance[np.diag_indices_from(covariance)] += kernel.noise_variance
    lower, _ = factorize(covariance)
    values = lower @ np.random.default_rng(seed).standard_normal(len(grid))

    def lookup(x):
        distances = np.sum((grid - x) ** 2, axis=1)
        index = int(np.argmin(distances))
        if distances[index] > CANDIDATE_TOLERANCE:
            raise InvalidArgument(f"Point {x!r} does not belong to the sampled grid")
        return float(values[index])

    best = int(np.argmin(values))
    return SyntheticFunction(
        name=f"gp_sample_{dim}d_{seed}",
        space=_unit_space(dim),
        function=lookup,
        optimum_value=float(values[best]),
        optimizers=(tuple(grid[best]),),
        domain=grid,
        kernel=kernel,
    )


SYNTHETIC_FUNCTIONS: Dict[str, Callable[..., SyntheticFunction]] = {
    "sphere": sphere,
    "branin": branin,
    "gp_sample": gp_sample,
}


class ObjectiveAdapter(abc.ABC):
    kind = None
    fixed_sequence = False

    def __init__(self, task: str = ""):
        self.task = task or self.kind

    @property
    def domain(self) -> Optional[np.ndarray]:
        """Конечная область Γ во внутренних координатах, если она есть."""
        return None

    def start(self, space: SearchSpace, seed: int):
        """Подготовить адаптер к новому прогону."""

    def next_candidate(self, space: SearchSpace) -> Optional[Candidate]:
        raise NotAvailable(f"Objective '{self.kind}' does not dictate candidates")

    @abc.abstractmethod
    def evaluate(self, space: SearchSpace, candidate: Optional[Candidate], iteration: int = 0) -> Evaluation:
        raise NotImplementedError

    def true_regret(self, candidate: Candidate) -> float:
        raise NotAvailable(f"True regret is not available for '{self.kind}' objectives")


class Synthetic(ObjectiveAdapter):
    kind = "synthetic"

    def __init__(
        self,
        function: SyntheticFunction,
        noise_std: float = 0.0,
        folds: Optional[int] = None,
        eval_seconds: float = 1.0,
        task: str = "",
    ):
        super().__init__(task or function.name)
        if noise_std < 0:
            raise InvalidArgument(f"noise_std must be non-negative, got {noise_std!r}")
        if folds is not None and folds < 2:
            raise InvalidArgument(f"folds must be at least 2, got {folds!r}")
        if eval_seconds < 0:
            raise InvalidArgument(f"eval_seconds must be non-negative, got {eval_seconds!r}")
        self.function = function
        self.noise_std = noise_std
        self.folds = folds
        self.eval_seconds = eval_seconds
        self._stream = np.random.default_rng(0)

    @property
    def space(self) -> SearchSpace:
        return self.function.space

    @property
    def domain(self):
        return self.function.domain

    def start(self, space, seed):
        self._stream = space.stream(seed, STREAM_OBJECTIVE)

    def value(self, candidate: Candidate) -> float:
        return self.function(self.space.from_internal(candidate))

    def evaluate(self, space, candidate, iteration=0):
        if candidate is None:
            raise InvalidArgument("Synthetic objectives require a candidate")
        value = self.value(candidate)
        regret = max(value - self.function.optimum_value, 0.0)
        if self.folds:
            noise = np.zeros(self.folds)
            if self.noise_std:
                noise = self._stream.normal(0.0, self.noise_std, size=self.folds)
            fold_values = tuple(float(item) for item in value + noise)
            return Evaluation(
                y=math.fsum(fold_values) / self.folds,
                fold_values=fold_values,
                eval_seconds=self.eval_seconds,
                test_metric=regret,
            )
        noise = float(self._stream.normal(0.0, self.noise_std)) if self.noise_std else 0.0
        return Evaluation(y=value + noise, eval_seconds=self.eval_seconds, test_metric=regret)

    def true_regret(self, candidate):
        return max(self.value(candidate) - self.function.optimum_value, 0.0)


class Subprocess(ObjectiveAdapter):
    """
    Вычисление во внешнем процессе.
    В stdin процесса пишется одна JSON-строка с кандидатом (имя -> значение),
    зерном и описанием фолдов; из stdout читается одна JSON-строка
    `{"y": ..., "fold_values": [...], "eval_seconds": ..., "test_metric": ...}`.
    """

    kind = "subprocess"

    def __init__(self, command: Sequence[str], folds: Optional[int] = None, timeout: Optional[float] = None, task=""):
        super().__init__(task)
        if not command:
            raise ConfigError("Subprocess objective requires a non-empty 'command'")
        self.command = [str(part) for part in command]
        self.folds = folds
        self.timeout = timeout
        self._seed = 0

    def start(self, space, seed):
        self._seed = int(seed)

    def payload(self, space: SearchSpace, candidate: Candidate, iteration: int) -> str:
        data = {"candidate": space.to_objective(candidate), "iteration": iteration, "seed": self._seed}
        if self.folds:
            data["folds"] = {"k": self.folds, "seed": self._seed}
        return json.dumps(data, sort_keys=True)

    def evaluate(self, space, candidate, iteration=0):
        if candidate is None:
            raise InvalidArgument("Subprocess objectives require a candidate")
        started = time.perf_counter()
        try:
            completed = subprocess.run(
                self.command,
                input=self.payload(space, candidate, iteration) + "\n",
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as error:
            raise ObjectiveError(f"Cannot run objective command {self.command!r}: {error}")
        elapsed = time.perf_counter() - started
        if completed.returncode != 0:
            raise SubprocessError(completed.returncode, completed.stderr)
        return parse_response(completed.stdout, elapsed)


def parse_response(stdout: str, elapsed: float = 0.0) -> Evaluation:
    line = next((item for item in stdout.splitlines() if item.strip()), "")
    try:
        data = json.loads(line)
        fold_values = data.get("fold_values")
        return Evaluation(
            y=float(data["y"]),
            fold_values=None if fold_values is None else tuple(float(value) for value in fold_values),
            eval_seconds=float(data.get("eval_seconds", elapsed)),
            test_metric=None if data.get("test_metric") is None else float(data["test_metric"]),
        )
    except (ValueError, KeyError, TypeError, AttributeError) as error:
        raise ObjectiveError(f"Malformed objective response {line[:200]!r}: {error}")


class Replay(ObjectiveAdapter):
    """
    Воспроизведение записанной трассы оптимизатора.
    Последовательность кандидатов задается трассой; движок лишь проверяет
    критерии остановки.
    """

    kind = "replay"
    fixed_sequence = True

    def __init__(self, rows: List[TraceRow], task: str = ""):
        super().__init__(task)
        self.rows = list(rows)
        self._cursor = 0

    @classmethod
    def from_file(cls, path: Union[str, Path], task: str = "") -> "Replay":
        return cls(read_trace(path), task=task or Path(path).stem)

    def __len__(self):
        return len(self.rows)

    def start(self, space, seed):
        self._cursor = 0

    def _current(self) -> TraceRow:
        if self._cursor >= len(self.rows):
            raise ReplayExhausted(f"Trace '{self.task}' is exhausted after {len(self.rows)} rows")
        return self.rows[self._cursor]

    def next_candidate(self, space):
        row = self._current()
        if row.candidate is None:
            return None
        return space.from_objective(row.candidate)

    def evaluate(self, space, candidate, iteration=0):
        row = self._current()
        if candidate is not None and row.candidate is not None:
            expected = space.from_objective(row.candidate).array
            if np.max(np.abs(expected - candidate.array)) > CANDIDATE_TOLERANCE:
                raise ReplayMismatch(f"Candidate at trace row {row.iteration} does not match the requested one")
        self._cursor += 1
        return Evaluation(
            y=row.y,
            fold_values=row.fold_metrics,
            eval_seconds=row.eval_seconds,
            test_metric=row.test_metric,
        )


def true_regret(objective: ObjectiveAdapter, candidate: Candidate) -> float:
    return objective.true_regret(candidate)


def evaluate(objective: ObjectiveAdapter, space: SearchSpace, candidate: Optional[Candidate], iteration=0):
    return objective.evaluate(space, candidate, iteration)


@dataclass
class ObjectiveFactory:
    """
    Создание адаптера по описанию из конфигурации эксперимента.
    Каждый прогон получает собственный экземпляр адаптера.
    """

    config: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def kind(self) -> str:
        return self.config.get("type", "")

    def resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def validate(self):
        self.create()

    def create(self) -> ObjectiveAdapter:
        config = dict(self.config)
        kind = config.pop("type", None)
        task = config.pop("task", "")
        if kind == Synthetic.kind:
            name = config.pop("name", None)
            if name not in SYNTHETIC_FUNCTIONS:
                raise ConfigError(
                    f"Unknown synthetic function '{name}'. Expected one of: {', '.join(SYNTHETIC_FUNCTIONS)}"
                )
            try:
                function = SYNTHETIC_FUNCTIONS[name](**config.pop("params", {}))
                return Synthetic(function, task=task, **config)
            except TypeError as error:
                raise ConfigError(f"Malformed synthetic objective: {error}")
        if kind == Subprocess.kind:
            command = config.pop("command", None)
            if isinstance(command, str):
                command = command.split()
            try:
                return Subprocess(command, task=task, **config)
            except TypeError as error:
                raise ConfigError(f"Malformed subprocess objective: {error}")
        if kind == Replay.kind:
            trace = config.pop("trace", None)
            if not trace:
                raise ConfigError("Replay objective requires 'trace'")
            path = self.resolve(trace)
            if not path.exists():
                raise ConfigError(f"Trace file '{path}' does not exist")
            return Replay.from_file(path, task=task)
        raise ConfigError(f"Unknown objective type '{kind}'. Expected one of: synthetic, subprocess, replay")
