"""
Конфигурация эксперимента: пространство, целевая функция, способ выбора
кандидатов, критерии остановки, зерна и бюджет.
"""
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

from django_autostop.bo.engine import EngineOptions, Proposer
from django_autostop.bo.exception import ConfigError
from django_autostop.bo.objectives import ObjectiveAdapter, ObjectiveFactory, Replay, Synthetic
from django_autostop.bo.space import SearchSpace
from django_autostop.bo.stop import CriterionConfig, criterion_suite
from django_autostop.conf import engine_options, get_setting


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def parse_seeds(value: Union[str, Sequence[int]]) -> List[int]:
    try:
        if isinstance(value, str):
            return [int(item) for item in value.split(",") if item.strip()]
        return [int(item) for item in value]
    except (TypeError, ValueError):
        raise ConfigError(f"Malformed 'seeds': {value!r}")


@dataclass
class ExperimentConfig:
    space: SearchSpace
    objective: ObjectiveFactory
    proposer: Proposer
    criteria: List[CriterionConfig]
    seeds: List[int]
    max_iters: int
    output: Path
    options: EngineOptions = field(default_factory=EngineOptions)
    config_hash: str = ""

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("'seeds' must not be empty")
        if not self.criteria:
            raise ConfigError("At least one criterion is required in 'criteria'")
        if self.max_iters < 1:
            raise ConfigError(f"'max_iters' must be positive, got {self.max_iters}")
        names = [criterion.name for criterion in self.criteria]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ConfigError(f"Duplicate criteria in 'criteria': {', '.join(duplicates)}")

    def create_objective(self) -> ObjectiveAdapter:
        """Новый экземпляр адаптера для одного прогона."""
        return self.objective.create()

    def jobs(self):
        for criterion in self.criteria:
            for seed in self.seeds:
                yield criterion, seed

    @staticmethod
    def record_name(criterion: CriterionConfig, seed: int) -> str:
        return f"{criterion.name}__seed{seed}.jsonl"

    @classmethod
    def from_file(
        cls,
        path: Union[str, Path],
        seeds: Optional[str] = None,
        max_iters: Optional[int] = None,
        criteria: Optional[Sequence[str]] = None,
        suite: Optional[str] = None,
        output: Optional[str] = None,
    ) -> "ExperimentConfig":
        """
        Загрузить конфигурацию из JSON-файла.
        Аргументы переопределяют соответствующие поля файла; относительные пути
        разрешаются от каталога конфигурации.
        """
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as stream:
                data = json.load(stream)
        except (OSError, json.JSONDecodeError) as error:
            raise ConfigError(f"Cannot read experiment config '{path}': {error}")
        if not isinstance(data, dict):
            raise ConfigError(f"Experiment config '{path}' must be a JSON object")
        return cls.from_config(
            data, path.parent, seeds=seeds, max_iters=max_iters, criteria=criteria, suite=suite, output=output
        )

    @classmethod
    def from_config(
        cls, data: dict, base_dir: Path, seeds=None, max_iters=None, criteria=None, suite=None, output=None
    ) -> "ExperimentConfig":
        objective_config = dict(data.get("objective") or {})
        if not objective_config:
            raise ConfigError("Experiment config requires 'objective'")
        if objective_config.get("type") == Synthetic.kind:
            objective_config.setdefault("eval_seconds", get_setting("SYNTHETIC_EVAL_SECONDS"))
        factory = ObjectiveFactory(objective_config, base_dir=base_dir)
        sample = factory.create()

        space = cls._space(data.get("space"), sample, base_dir)
        criteria = list(criteria or [])
        suite = suite or data.get("criterion_suite")
        if not criteria and not suite:
            criteria = list(data.get("criteria") or [])
        parsed = [CriterionConfig.from_config(item) for item in criteria]
        if suite:
            parsed.extend(criterion_suite(suite))

        max_iters = int(max_iters or data.get("max_iters", 0))
        if isinstance(sample, Replay):
            max_iters = min(max_iters, len(sample)) if max_iters else len(sample)

        options = dict(data.get("options") or {})
        matched_kernel = options.pop("matched_kernel", False)
        try:
            engine = engine_options(**options)
        except TypeError as error:
            raise ConfigError(f"Malformed 'options': {error}")
        if matched_kernel:
            if not isinstance(sample, Synthetic) or sample.function.kernel is None:
                raise ConfigError("'matched_kernel' requires a synthetic objective with a known kernel")
            engine = replace(engine, kernel=sample.function.kernel)

        return cls(
            space=space,
            objective=factory,
            proposer=Proposer.from_config(data.get("proposer", "gpbo")),
            criteria=parsed,
            seeds=parse_seeds(seeds if seeds is not None else data.get("seeds", [0])),
            max_iters=max_iters,
            output=cls._resolve(output or data.get("output", "out"), base_dir),
            options=engine,
            config_hash=config_hash(data),
        )

    @staticmethod
    def _resolve(value: str, base_dir: Path) -> Path:
        path = Path(value)
        return path if path.is_absolute() else base_dir / path

    @classmethod
    def _space(cls, value, sample: ObjectiveAdapter, base_dir: Path) -> SearchSpace:
        if isinstance(sample, Synthetic):
            if value is not None:
                raise ConfigError("Synthetic objectives define their own search space, remove 'space'")
            return sample.space
        if value is None:
            raise ConfigError(f"Objective '{sample.kind}' requires 'space'")
        if isinstance(value, dict):
            return SearchSpace.from_config(value)
        if str(value).startswith("preset:"):
            return SearchSpace.from_file(value)
        return SearchSpace.from_file(cls._resolve(value, base_dir))
