import uuid

from django.db import models
from django.utils.translation import gettext_lazy as _


class Run(models.Model):
    guid = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    experiment = models.CharField(_("Experiment config hash"), max_length=64, db_index=True, editable=False)
    task = models.CharField(_("Task"), max_length=255, db_index=True, editable=False)
    criterion = models.CharField(_("Stopping criterion"), max_length=255, db_index=True, editable=False)
    seed = models.IntegerField(_("Seed"), editable=False)
    record_path = models.CharField(_("Record file"), max_length=1024, editable=False)
    iterations = models.PositiveIntegerField(_("Iterations"), default=0, editable=False)
    stop_iteration = models.PositiveIntegerField(_("Stop iteration"), null=True, blank=True, editable=False)
    final_incumbent = models.FloatField(_("Final incumbent value"), null=True, blank=True, editable=False)
    ryc = models.FloatField(_("Relative test error change"), null=True, blank=True, editable=False)
    rtc = models.FloatField(_("Relative time change"), null=True, blank=True, editable=False)
    updated_at = models.DateTimeField(_("Date and time of last update"), null=True, blank=True, editable=False)

    def __str__(self):
        return f"<{self.task}/{self.criterion}: seed {self.seed}>"

    class Meta:
        verbose_name = _("Run")
        verbose_name_plural = _("Runs")
        unique_together = (("experiment", "criterion", "seed"),)
