# Generated by Django 4.2.23 on 2026-10-19 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="SimulationRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("config", models.JSONField()),
                ("seed", models.BigIntegerField()),
                ("out_dir", models.CharField(max_length=500)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "Running"),
                            ("completed", "Completed"),
                            ("failed", "Failed"),
                        ],
                        default="running",
                        max_length=20,
                    ),
                ),
                ("artifacts", models.JSONField(blank=True, default=dict)),
                ("error", models.TextField(blank=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("updated_at", models.DateTimeField(auto_now=True)),
            ],
            options={
                "ordering": ["-created_at"],
            },
        ),
        migrations.CreateModel(
            name="RoundResult",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("client_count", models.PositiveIntegerField()),
                ("round", models.PositiveIntegerField()),
                ("average_local_accuracy", models.FloatField()),
                ("global_accuracy", models.FloatField()),
                ("local_accuracies", models.JSONField(default=dict)),
                ("factors", models.JSONField(default=dict)),
                ("rejected", models.PositiveIntegerField(default=0)),
                ("chain_length", models.PositiveIntegerField()),
                ("heterogeneity", models.FloatField(blank=True, null=True)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="rounds",
                        to="core.simulationrun",
                    ),
                ),
            ],
            options={
                "ordering": ["client_count", "round"],
                "unique_together": {("run", "client_count", "round")},
            },
        ),
    ]
