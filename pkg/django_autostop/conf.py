import os

from django.conf import settings

from django_autostop.bo.engine import EngineOptions

DEFAULTS = {
    "WORKERS": 1,
    "REGISTER_RUNS": False,
    "GP_RESTARTS": 5,
    "ACQ_BUDGET": 2048,
    "BOUND_BUDGET": 2048,
    "POLISH_STEPS": 50,
    "INIT_POINTS": 3,
    "SYNTHETIC_EVAL_SECONDS": 1.0,
}

WORKERS_ENV = "AUTOSTOP_WORKERS"


def get_setting(name: str):
    """
    Значение из словаря настроек `AUTOSTOP` с подстановкой значения по умолчанию.
    Число потоков может быть переопределено переменной окружения.
    """
    if name == "WORKERS" and os.environ.get(WORKERS_ENV):
        return max(int(os.environ[WORKERS_ENV]), 1)
    return getattr(settings, "AUTOSTOP", {}).get(name, DEFAULTS[name])


def engine_options(**overrides) -> EngineOptions:
    options = {
        "gp_restarts": get_setting("GP_RESTARTS"),
        "acq_budget": get_setting("ACQ_BUDGET"),
        "bound_budget": get_setting("BOUND_BUDGET"),
        "polish_steps": get_setting("POLISH_STEPS"),
        "init_points": get_setting("INIT_POINTS"),
    }
    options.update(overrides)
    return EngineOptions(**options)
