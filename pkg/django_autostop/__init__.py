default_app_config = "django_autostop.apps.AutoStopConfig"
