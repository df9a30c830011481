import uuid

from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="Run",
            fields=[
                ("guid", models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                (
                    "experiment",
                    models.CharField(
                        db_index=True, editable=False, max_length=64, verbose_name="Experiment config hash"
                    ),
                ),
                ("task", models.CharField(db_index=True, editable=False, max_length=255, verbose_name="Task")),
                (
                    "criterion",
                    models.CharField(db_index=True, editable=False, max_length=255, verbose_name="Stopping criterion"),
                ),
                ("seed", models.IntegerField(editable=False, verbose_name="Seed")),
                ("record_path", models.CharField(editable=False, max_length=1024, verbose_name="Record file")),
                ("iterations", models.PositiveIntegerField(default=0, editable=False, verbose_name="Iterations")),
                (
                    "stop_iteration",
                    models.PositiveIntegerField(blank=True, editable=False, null=True, verbose_name="Stop iteration"),
                ),
                (
                    "final_incumbent",
                    models.FloatField(blank=True, editable=False, null=True, verbose_name="Final incumbent value"),
                ),
                (
                    "ryc",
                    models.FloatField(blank=True, editable=False, null=True, verbose_name="Relative test error change"),
                ),
                (
                    "rtc",
                    models.FloatField(blank=True, editable=False, null=True, verbose_name="Relative time change"),
                ),
                (
                    "updated_at",
                    models.DateTimeField(
                        blank=True, editable=False, null=True, verbose_name="Date and time of last update"
                    ),
                ),
            ],
            options={
                "verbose_name": "Run",
                "verbose_name_plural": "Runs",
                "unique_together": {("experiment", "criterion", "seed")},
            },
        ),
    ]
