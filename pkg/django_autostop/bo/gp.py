"""
Регрессия на гауссовских процессах с ядром Матерна 5/2 (ARD).

Апостериорное распределение считается точно, через разложение Холецкого
матрицы K + σ²I. Гиперпараметры ядра подбираются максимизацией
логарифма маргинального правдоподобия (type II MLE) по стандартизованным
значениям; в `GPPosterior` они хранятся уже в исходных единицах.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .exception import DimensionMismatch, FactorizationFailure, InvalidArgument, LengthMismatch
from .space import Candidate, PointsLike, SearchSpace, as_matrix

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
LOG_2PI = math.log(2.0 * math.pi)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-6, 1e3)
NOISE_BOUNDS = (1e-8, 1.0)

DEGENERATE_SIGNAL = 1e-12
DEFAULT_RESTARTS = 5
MAX_ITERATIONS = 200
GRADIENT_TOLERANCE = 1e-6
FAILED_OBJECTIVE = 1e25


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    lengthscales: Tuple[float, ...]
    noise_variance: float = 0.0
    mean_const: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(value) for value in np.ravel(self.lengthscales)))
        if not self.signal_variance > 0:
            raise InvalidArgument(f"signal_variance must be positive, got {self.signal_variance!r}")
        if not self.lengthscales or not all(value > 0 for value in self.lengthscales):
            raise InvalidArgument(f"All lengthscales must be positive, got {self.lengthscales!r}")
        if not self.noise_variance >= 0:
            raise InvalidArgument(f"noise_variance must be non-negative, got {self.noise_variance!r}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_vector(self) -> np.ndarray:
        """
        Вектор параметров оптимизации:
        [log σ_f², log ℓ_1, ..., log ℓ_d, log σ_ε², μ].
        """
        return np.array(
            [
                math.log(self.signal_variance),
                *np.log(self.lengthscales),
                math.log(max(self.noise_variance, NOISE_BOUNDS[0] * 1e-4)),
                self.mean_const,
            ]
        )

    @classmethod
    def from_vector(cls, theta: Sequence[float]) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(
            signal_variance=float(np.exp(theta[0])),
            lengthscales=tuple(np.exp(theta[1:-2])),
            noise_variance=float(np.exp(theta[-2])),
            mean_const=float(theta[-1]),
        )

    def rescaled(self, shift: float, scale: float) -> "KernelParams":
        """Перевести параметры из стандартизованных единиц y в исходные."""
        return KernelParams(
            signal_variance=self.signal_variance * scale**2,
            lengthscales=self.lengthscales,
            noise_variance=self.noise_variance * scale**2,
            mean_const=shift + scale * self.mean_const,
        )


def matern52(a: np.ndarray, b: np.ndarray, signal_variance: float, lengthscales: Sequence[float]) -> np.ndarray:
    scale = np.asarray(lengthscales, dtype=float)
    scaled_r = SQRT5 * cdist(a / scale, b / scale)
    return signal_variance * (1.0 + scaled_r + scaled_r**2 / 3.0) * np.exp(-scaled_r)


def _check_dim(params: KernelParams, points: np.ndarray):
    if points.shape[1] != params.dim:
        raise DimensionMismatch(f"Points have {points.shape[1]} dimensions, kernel expects {params.dim}")


def kernel_eval(params: KernelParams, a: Candidate, b: Candidate) -> float:
    if len(a) != params.dim or len(b) != params.dim:
        raise DimensionMismatch(f"Candidates of lengths {len(a)} and {len(b)} for a {params.dim}-d kernel")
    return float(matern52(a.array[None, :], b.array[None, :], params.signal_variance, params.lengthscales)[0, 0])


def factorize(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Разложение Холецкого с лестницей регуляризации 1e-10 -> 1e-4.
    Возвращает нижнетреугольный множитель и добавленную к диагонали величину.
    """
    identity = np.eye(len(matrix))
    for jitter in JITTER_LADDER:
        try:
            return linalg.cholesky(matrix + jitter * identity, lower=True), jitter
        except linalg.LinAlgError:
            logger.debug("Cholesky failed with jitter %g", jitter)
    raise FactorizationFailure(f"Covariance matrix of size {len(matrix)} is not positive definite")


@dataclass(frozen=True, eq=False)
class GPPosterior:
    params: KernelParams
    train_points: np.ndarray
    train_values: np.ndarray
    factorization: np.ndarray
    solved_alpha: np.ndarray
    jitter: float = 0.0

    @classmethod
    def condition(cls, params: KernelParams, points: PointsLike, values: Sequence[float]) -> "GPPosterior":
        """
        Построить апостериорное распределение при заданных параметрах ядра.

        :param params: Параметры ядра в единицах y.
        :param points: Обучающие кандидаты (могут отсутствовать - тогда это априорное распределение).
        :param values: Наблюдения y_{1:t}.
        """
        matrix = as_matrix(points, params.dim)
        values = np.asarray(values, dtype=float).ravel()
        if len(matrix) != len(values):
            raise LengthMismatch(f"{len(matrix)} points but {len(values)} values")
        if len(matrix) == 0:
            empty = np.zeros((0, 0))
            return cls(params, np.zeros((0, params.dim)), values, empty, np.zeros(0))
        _check_dim(params, matrix)
        covariance = matern52(matrix, matrix, params.signal_variance, params.lengthscales)
        covariance[np.diag_indices_from(covariance)] += params.noise_variance
        lower, jitter = factorize(covariance)
        alpha = linalg.cho_solve((lower, True), values - params.mean_const)
        return cls(params, matrix, values, lower, alpha, jitter)

    @property
    def train_candidates(self):
        return [Candidate(tuple(row)) for row in self.train_points]

    def predict(self, points: PointsLike, clamp: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        query = as_matrix(points, self.params.dim)
        if len(query) == 0:
            return np.zeros(0), np.zeros(0)
        _check_dim(self.params, query)
        if len(self.train_points) == 0:
            return (
                np.full(len(query), self.params.mean_const),
                np.full(len(query), self.params.signal_variance),
            )
        cross = matern52(query, self.train_points, self.params.signal_variance, self.params.lengthscales)
        means = self.params.mean_const + cross @ self.solved_alpha
        projected = linalg.solve_triangular(self.factorization, cross.T, lower=True)
        variances = self.params.signal_variance - np.sum(projected**2, axis=0)
        if clamp:
            variances = np.maximum(variances, 0.0)
        return means, variances


def predict(gp: GPPosterior, points: PointsLike) -> Tuple[np.ndarray, np.ndarray]:
    return gp.predict(points)


def log_marginal_likelihood(params: KernelParams, points: PointsLike, values: Sequence[float], with_gradient=False):
    """
    Логарифм маргинального правдоподобия
    −½ rᵀ(K+σ²I)⁻¹r − ½ log det(K+σ²I) − (n/2) log 2π, где r = y − μ.

    При `with_gradient=True` дополнительно возвращается градиент по вектору
    `KernelParams.to_vector()` (логарифмы параметров и μ).
    """
    matrix = as_matrix(points, params.dim)
    values = np.asarray(values, dtype=float).ravel()
    if len(matrix) != len(values):
        raise LengthMismatch(f"{len(matrix)} points but {len(values)} values")
    _check_dim(params, matrix)
    n = len(values)
    kernel = matern52(matrix, matrix, params.signal_variance, params.lengthscales)
    covariance = kernel.copy()
    covariance[np.diag_indices_from(covariance)] += params.noise_variance
    lower, _ = factorize(covariance)
    residual = values - params.mean_const
    alpha = linalg.cho_solve((lower, True), residual)
    value = -0.5 * residual @ alpha - np.sum(np.log(np.diag(lower))) - 0.5 * n * LOG_2PI
    if not with_gradient:
        return float(value)

    inverse = linalg.cho_solve((lower, True), np.eye(n))
    weights = np.outer(alpha, alpha) - inverse
    gradient = np.empty(params.dim + 3)
    gradient[0] = 0.5 * np.sum(weights * kernel)
    scaled_r = SQRT5 * cdist(matrix / params.lengthscales, matrix / params.lengthscales)
    radial = params.signal_variance * (5.0 / 3.0) * (1.0 + scaled_r) * np.exp(-scaled_r)
    for j, lengthscale in enumerate(params.lengthscales):
        squared = ((matrix[:, j, None] - matrix[None, :, j]) / lengthscale) ** 2
        gradient[1 + j] = 0.5 * np.sum(weights * radial * squared)
    gradient[-2] = 0.5 * params.noise_variance * np.trace(weights)
    gradient[-1] = np.sum(alpha)
    return float(value), gradient


def _bounds(dim: int):
    return (
        [tuple(np.log(SIGNAL_BOUNDS))]
        + [tuple(np.log(LENGTHSCALE_BOUNDS))] * dim
        + [tuple(np.log(NOISE_BOUNDS)), (None, None)]
    )


def _initial_vectors(dim: int, restarts: int, stream: np.random.Generator) -> np.ndarray:
    first = np.concatenate([[0.0], np.full(dim, math.log(0.5)), [math.log(1e-3)], [0.0]])
    vectors = [first]
    for _ in range(restarts - 1):
        vectors.append(
            np.concatenate(
                [
                    [stream.uniform(math.log(0.1), math.log(10.0))],
                    stream.uniform(math.log(1e-2), math.log(10.0), size=dim),
                    [stream.uniform(math.log(1e-6), math.log(1e-1))],
                    [stream.normal(0.0, 0.5)],
                ]
            )
        )
    return np.array(vectors)


def _negative_objective(theta: np.ndarray, points: np.ndarray, values: np.ndarray):
    try:
        value, gradient = log_marginal_likelihood(KernelParams.from_vector(theta), points, values, with_gradient=True)
    except (FactorizationFailure, InvalidArgument):
        return FAILED_OBJECTIVE, np.zeros_like(theta)
    if not np.isfinite(value) or not np.all(np.isfinite(gradient)):
        return FAILED_OBJECTIVE, np.zeros_like(theta)
    return -value, -gradient


def fit(
    space: SearchSpace,
    points: PointsLike,
    values: Sequence[float],
    restarts: int = DEFAULT_RESTARTS,
    stream: Optional[np.random.Generator] = None,
) -> GPPosterior:
    """
    Подбор гиперпараметров ядра (type II MLE) с несколькими стартами.
    Из всех стартов выбирается наибольшее правдоподобие, при равенстве -
    старт с меньшим номером.

    :param space: Пространство поиска (определяет размерность).
    :param points: Обучающие кандидаты.
    :param values: Значения целевой функции.
    :param restarts: Число стартов локального оптимизатора.
    :param stream: Генератор случайных чисел для начальных точек.
    """
    matrix = as_matrix(points, len(space))
    values = np.asarray(values, dtype=float).ravel()
    if len(matrix) != len(values):
        raise LengthMismatch(f"{len(matrix)} points but {len(values)} values")
    if len(values) < 2:
        raise InvalidArgument(f"At least 2 observations are required to fit a GP, got {len(values)}")
    if not np.all(np.isfinite(values)):
        raise InvalidArgument("Observed values must be finite")
    if matrix.shape[1] != len(space):
        raise DimensionMismatch(f"Points have {matrix.shape[1]} dimensions, space has {len(space)}")
    if restarts < 1:
        raise InvalidArgument(f"restarts must be positive, got {restarts}")
    stream = stream if stream is not None else np.random.default_rng(0)

    shift = float(np.mean(values))
    scale = float(np.std(values))
    if scale <= 1e-12 * max(1.0, abs(shift)):
        logger.warning("Observed values are constant (%r), fitting a degenerate GP", shift)
        params = KernelParams(
            signal_variance=DEGENERATE_SIGNAL,
            lengthscales=tuple(np.ones(len(space))),
            noise_variance=DEGENERATE_SIGNAL,
            mean_const=shift,
        )
        return GPPosterior.condition(params, matrix, values)

    standardized = (values - shift) / scale
    bounds = _bounds(len(space))
    best_value, best_theta = -np.inf, None
    for index, theta0 in enumerate(_initial_vectors(len(space), restarts, stream)):
        result = optimize.minimize(
            _negative_objective,
            theta0,
            args=(matrix, standardized),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": MAX_ITERATIONS, "gtol": GRADIENT_TOLERANCE},
        )
        value = -float(result.fun)
        logger.debug("Restart %d: log marginal likelihood %.6g (%s)", index, value, result.message)
        if result.fun < FAILED_OBJECTIVE and value > best_value:
            best_value, best_theta = value, result.x
    if best_theta is None:
        raise FactorizationFailure("All MLE restarts failed to factorize the covariance matrix")

    params = KernelParams.from_vector(best_theta).rescaled(shift, scale)
    return GPPosterior.condition(params, matrix, values)
