from django.apps import AppConfig


class AutoStopConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "django_autostop"
    verbose_name = "BO automatic termination"
