from django.db import models


class SimulationRun(models.Model):
    """One `simulate` invocation with its resolved configuration and run-meta"""
    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    config = models.JSONField()
    seed = models.BigIntegerField()
    out_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    artifacts = models.JSONField(default=dict, blank=True)
    error = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"Run {self.pk} seed={self.seed} ({self.status})"


class RoundResult(models.Model):
    """Metrics of one federated round for one sweep entry"""
    run = models.ForeignKey(SimulationRun, on_delete=models.CASCADE, related_name='rounds')
    client_count = models.PositiveIntegerField()
    round = models.PositiveIntegerField()

    average_local_accuracy = models.FloatField()
    global_accuracy = models.FloatField()
    local_accuracies = models.JSONField(default=dict)
    factors = models.JSONField(default=dict)

    rejected = models.PositiveIntegerField(default=0)
    chain_length = models.PositiveIntegerField()
    heterogeneity = models.FloatField(null=True, blank=True)

    class Meta:
        unique_together = ('run', 'client_count', 'round')
        ordering = ['client_count', 'round']

    def __str__(self):
        return f"Run {self.run_id} N={self.client_count} round {self.round}"

    @property
    def accuracy_gap(self):
        """Global minus average local accuracy"""
        return self.global_accuracy - self.average_local_accuracy
