import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from .exception import ConfigError, InvalidArgument, LengthMismatch, OutOfBounds

PRESETS_DIR = Path(__file__).resolve().parent.parent / "spaces"
PRESET_PREFIX = "preset:"


class Dimension:
    """
    Одна размерность пространства поиска.
    Внешнее значение (в единицах гиперпараметра) переводится во внутреннюю
    координату на отрезке [0, 1] и обратно. Конкретное преобразование
    определяется подклассом по атрибуту `scale`.
    """

    scale = None

    def __init__(self, name: str, lower: float, upper: float, integer: bool = False):
        self.name = name
        self.lower = float(lower)
        self.upper = float(upper)
        self.integer = integer
        if not self.lower < self.upper:
            raise InvalidArgument(f"Dimension '{name}': lower bound must be less than upper ({lower!r} >= {upper!r})")

    def __repr__(self):
        return f"<{self.__class__.__name__}: {self.name} [{self.lower}, {self.upper}]>"

    def __eq__(self, other):
        return isinstance(other, Dimension) and self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash((self.name, self.lower, self.upper, self.scale, self.integer))

    def _forward(self, value: float) -> float:
        raise NotImplementedError

    def _backward(self, coord: float) -> float:
        raise NotImplementedError

    def check(self, value: float):
        if not self.lower <= value <= self.upper:
            raise OutOfBounds(self.name, value, self.lower, self.upper)

    def to_internal(self, value: float) -> float:
        self.check(value)
        return min(max(self._forward(float(value)), 0.0), 1.0)

    def from_internal(self, coord: float) -> float:
        return min(max(self._backward(float(coord)), self.lower), self.upper)

    def to_objective(self, coord: float) -> Union[int, float]:
        """
        Значение для передачи в целевую функцию.
        Целочисленные гиперпараметры округляются только здесь, модель
        работает с непрерывной координатой.
        """
        value = self.from_internal(coord)
        if self.integer:
            return int(round(value))
        return value

    def as_dict(self) -> dict:
        data = {"name": self.name, "lower": self.lower, "upper": self.upper, "scale": self.scale}
        if self.integer:
            data["integer"] = True
        return data


class LinearDimension(Dimension):
    scale = "linear"

    def _forward(self, value):
        return (value - self.lower) / (self.upper - self.lower)

    def _backward(self, coord):
        return self.lower + coord * (self.upper - self.lower)


class LogDimension(Dimension):
    scale = "log"

    def __init__(self, name, lower, upper, integer=False):
        super().__init__(name, lower, upper, integer=integer)
        if self.lower <= 0:
            raise InvalidArgument(f"Dimension '{name}': log scale requires a positive lower bound")
        self._log_lower = math.log(self.lower)
        self._log_span = math.log(self.upper) - self._log_lower

    def _forward(self, value):
        return (math.log(value) - self._log_lower) / self._log_span

    def _backward(self, coord):
        return math.exp(self._log_lower + coord * self._log_span)


SCALES = {
    LinearDimension.scale: LinearDimension,
    LogDimension.scale: LogDimension,
}


def make_dimension(name: str, lower: float, upper: float, scale: str = "linear", integer: bool = False) -> Dimension:
    try:
        dimension_class = SCALES[scale]
    except KeyError:
        raise InvalidArgument(f"Unknown scale '{scale}' for dimension '{name}'. Expected one of: {', '.join(SCALES)}")
    return dimension_class(name, lower, upper, integer=integer)


@dataclass(frozen=True)
class Candidate:
    """Точка во внутренних координатах единичного куба."""

    coords: Tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(value) for value in self.coords)
        for value in coords:
            if not 0.0 <= value <= 1.0:
                raise InvalidArgument(f"Candidate coordinate {value!r} is outside of [0, 1]")
        object.__setattr__(self, "coords", coords)

    def __len__(self):
        return len(self.coords)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "Candidate":
        return cls(tuple(np.clip(np.asarray(values, dtype=float), 0.0, 1.0)))


PointsLike = Union[np.ndarray, Sequence[Candidate]]


def as_matrix(points: PointsLike, dim: Optional[int] = None) -> np.ndarray:
    """
    Привести набор кандидатов к матрице (n, d).

    :param points: Список `Candidate` или массив координат.
    :param dim: Ожидаемая размерность для пустого набора.
    """
    if isinstance(points, np.ndarray):
        matrix = np.atleast_2d(np.asarray(points, dtype=float))
        if points.size == 0:
            return np.zeros((0, dim or 0))
        return matrix
    points = list(points)
    if not points:
        return np.zeros((0, dim or 0))
    return np.array([point.coords for point in points], dtype=float)


@dataclass(frozen=True)
class SearchSpace:
    dims: Tuple[Dimension, ...]
    seed_salt: int = 0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise InvalidArgument("Search space must contain at least one dimension")
        names = [dim.name for dim in self.dims]
        if len(set(names)) != len(names):
            raise InvalidArgument(f"Dimension names must be unique: {', '.join(names)}")
        if self.seed_salt < 0:
            raise InvalidArgument("seed_salt must be an unsigned integer")

    def __len__(self):
        return len(self.dims)

    @property
    def names(self) -> List[str]:
        return [dim.name for dim in self.dims]

    def to_internal(self, external: Sequence[float]) -> Candidate:
        if len(external) != len(self.dims):
            raise LengthMismatch(f"Expected {len(self.dims)} values, got {len(external)}")
        return Candidate(tuple(dim.to_internal(value) for dim, value in zip(self.dims, external)))

    def from_internal(self, candidate: Candidate) -> np.ndarray:
        if len(candidate) != len(self.dims):
            raise LengthMismatch(f"Expected {len(self.dims)} coordinates, got {len(candidate)}")
        return np.array([dim.from_internal(coord) for dim, coord in zip(self.dims, candidate.coords)])

    def to_objective(self, candidate: Candidate) -> Dict[str, Union[int, float]]:
        """Словарь имя -> значение для внешней целевой функции."""
        return {dim.name: dim.to_objective(coord) for dim, coord in zip(self.dims, candidate.coords)}

    def from_objective(self, values: Dict[str, float]) -> Candidate:
        missing = [name for name in self.names if name not in values]
        if missing:
            raise LengthMismatch(f"Missing values for dimensions: {', '.join(missing)}")
        return self.to_internal([values[name] for name in self.names])

    def stream(self, seed: int, *keys: int) -> np.random.Generator:
        """
        Детерминированный генератор для пары (seed_salt, seed).
        Дополнительные ключи отделяют независимые потоки внутри одного прогона.
        """
        return np.random.default_rng(np.random.SeedSequence([self.seed_salt, int(seed), *keys]))

    def sample_candidates(self, n: int, stream: np.random.Generator) -> List[Candidate]:
        return [Candidate(tuple(row)) for row in self.sample_array(n, stream)]

    def sample_array(self, n: int, stream: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise InvalidArgument(f"Number of candidates must be positive, got {n}")
        return stream.random((n, len(self.dims)))

    def sobol_array(self, n: int, stream: np.random.Generator) -> np.ndarray:
        """Квазислучайная выборка Соболя, скремблированная потоком `stream`."""
        if n < 1:
            raise InvalidArgument(f"Number of candidates must be positive, got {n}")
        sampler = qmc.Sobol(d=len(self.dims), scramble=True, seed=stream)
        with warnings.catch_warnings():
            # баланс последовательности для n, не равного степени двойки, не требуется
            warnings.simplefilter("ignore", UserWarning)
            return sampler.random(n)

    def as_dict(self) -> dict:
        return {"seed_salt": self.seed_salt, "dimensions": [dim.as_dict() for dim in self.dims]}

    @classmethod
    def from_config(cls, config: dict, name: str = "") -> "SearchSpace":
        try:
            dims = [
                make_dimension(
                    item["name"],
                    item["lower"],
                    item["upper"],
                    scale=item.get("scale", "linear"),
                    integer=bool(item.get("integer", False)),
                )
                for item in config["dimensions"]
            ]
        except (KeyError, TypeError) as error:
            raise ConfigError(f"Malformed search space definition: missing {error}")
        return cls(dims=tuple(dims), seed_salt=int(config.get("seed_salt", 0)), name=name)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SearchSpace":
        """
        Загрузить пространство из JSON-файла или встроенного пресета.
        Пресеты указываются в виде `preset:<имя>`, например `preset:xgboost`.
        """
        path = str(path)
        if path.startswith(PRESET_PREFIX):
            name = path[len(PRESET_PREFIX) :]
            file_path = PRESETS_DIR / f"{name}.json"
            if not file_path.exists():
                raise ConfigError(f"Unknown search space preset '{name}'")
        else:
            file_path = Path(path)
            name = file_path.stem
        try:
            with open(file_path, encoding="utf-8") as stream:
                config = json.load(stream)
        except (OSError, json.JSONDecodeError) as error:
            raise ConfigError(f"Cannot read search space '{path}': {error}")
        return cls.from_config(config, name=name)


def to_internal(space: SearchSpace, external: Sequence[float]) -> Candidate:
    return space.to_internal(external)


def from_internal(space: SearchSpace, candidate: Candidate) -> np.ndarray:
    return space.from_internal(candidate)


def sample_candidates(space: SearchSpace, n: int, stream: np.random.Generator) -> List[Candidate]:
    return space.sample_candidates(n, stream)
