from django.contrib import admin, messages
from django.utils.translation import gettext as _

from django_autostop import models
from django_autostop.registry import refresh_run

REFRESH_FIELDS = ["iterations", "stop_iteration", "final_incumbent", "updated_at"]
RESCORE_FIELDS = REFRESH_FIELDS + ["ryc", "rtc"]


class RunsAdmin(admin.ModelAdmin):
    list_display = ("task", "criterion", "seed", "iterations", "stop_iteration", "ryc", "rtc", "updated_at")
    list_filter = ("task", "criterion")
    readonly_fields = (
        "experiment",
        "task",
        "criterion",
        "seed",
        "record_path",
        "iterations",
        "stop_iteration",
        "final_incumbent",
        "ryc",
        "rtc",
        "updated_at",
    )
    actions = ("rescore_runs", "refresh_runs")

    def has_add_permission(self, request) -> bool:
        return False

    def has_change_permission(self, request, obj=...) -> bool:
        return False

    def has_delete_permission(self, request, obj=...) -> bool:
        return False

    def _refresh(self, queryset, rescore: bool):
        runs = list(queryset)
        for run in runs:
            refresh_run(run, rescore=rescore)
        models.Run.objects.bulk_update(runs, RESCORE_FIELDS if rescore else REFRESH_FIELDS)

    @admin.action(description=_("Rescore selected runs"))
    def rescore_runs(self, request, queryset):
        try:
            self._refresh(queryset, rescore=True)
            messages.add_message(request=request, level=messages.INFO, message=_("Successfully rescored"))
        except Exception as error:
            error_msg = _("Rescoring error occured")
            messages.add_message(request=request, level=messages.ERROR, message=f"{error_msg}: {error}")

    @admin.action(description=_("Refresh selected runs"))
    def refresh_runs(self, request, queryset):
        try:
            self._refresh(queryset, rescore=False)
            messages.add_message(request=request, level=messages.INFO, message=_("Successfully refreshed"))
        except Exception as error:
            error_msg = _("Refreshing error occured")
            messages.add_message(request=request, level=messages.ERROR, message=f"{error_msg}: {error}")


if admin.site.is_registered(models.Run):
    admin.site.unregister(models.Run)
admin.site.register(models.Run, RunsAdmin)
