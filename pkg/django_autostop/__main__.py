"""
Запуск команд без проекта Django: `python -m django_autostop autostop_run --config ...`.
"""
import os
import sys

import django
from django.conf import settings
from django.core.management import execute_from_command_line

COMMANDS = ("autostop_run", "autostop_score", "autostop_diagnose")
LEVELS = {"0": "ERROR", "1": "WARNING", "2": "INFO", "3": "DEBUG"}


def verbosity(argv) -> str:
    for index, item in enumerate(argv):
        if item in ("-v", "--verbosity") and index + 1 < len(argv):
            return argv[index + 1]
        if item.startswith("--verbosity="):
            return item.split("=", 1)[1]
    return "1"


def configure(argv):
    if settings.configured or os.environ.get("DJANGO_SETTINGS_MODULE"):
        return
    level = LEVELS.get(verbosity(argv), "WARNING")
    settings.configure(
        INSTALLED_APPS=["django_autostop"],
        DATABASES={"default": {"ENGINE": "django.db.backends.sqlite3", "NAME": ":memory:"}},
        AUTOSTOP={},
        LOGGING={
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {"simple": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"}},
            "handlers": {"console": {"class": "logging.StreamHandler", "formatter": "simple"}},
            "loggers": {"django_autostop": {"handlers": ["console"], "level": level}},
        },
    )
    django.setup()


def main(argv=None):
    argv = list(sys.argv if argv is None else argv)
    configure(argv)
    if len(argv) < 2 or argv[1] not in COMMANDS:
        sys.stderr.write(f"Usage: {os.path.basename(argv[0])} {{{','.join(COMMANDS)}}} [options]\n")
        return 1
    execute_from_command_line(argv)
    return 0


if __name__ == "__main__":
    sys.exit(main())
