"""certify/models.py"""

from django.db import models

from core.jsonio import digest


class CertificateRecord(models.Model):
    METRIC_CHOICES = [
        ("RISE", "Relative integral square error"),
        ("SSE", "Supreme square error"),
    ]

    scenario = models.CharField(max_length=100)
    metric = models.CharField(max_length=4, choices=METRIC_CHOICES)
    channel = models.CharField(max_length=50, blank=True)
    level = models.FloatField()
    factor = models.FloatField(null=True, blank=True, help_text="2 level / (1 - level) when level < 1")
    vertices = models.PositiveIntegerField()
    seed = models.IntegerField(null=True, blank=True)
    weights_digest = models.CharField(max_length=64, blank=True, help_text="SHA-256 of the certified network")
    epsilon = models.JSONField(default=dict, blank=True, help_text="Training-error bound the level relies on")
    epsilon_digest = models.CharField(max_length=64, blank=True)
    payload = models.JSONField(help_text="Certificate document as written to disk")
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at", "-id"]
        indexes = [
            models.Index(fields=["scenario", "metric", "channel", "weights_digest"], name="certificate_lookup_idx"),
        ]

    def __str__(self):
        label = f"{self.scenario}/{self.channel}" if self.channel else self.scenario
        return f"{label} {self.metric} {self.level:.6g}"

    @classmethod
    def from_certificate(cls, scenario, cert, *, weights_digest="", epsilon=None, seed=None):
        epsilon = epsilon or {}
        return cls.objects.create(
            scenario=scenario,
            metric=cert.metric,
            channel=cert.channel,
            level=cert.level,
            factor=cert.factor,
            vertices=cert.vertices,
            seed=seed,
            weights_digest=weights_digest,
            epsilon=epsilon,
            epsilon_digest=digest(epsilon) if epsilon else "",
            payload=cert.to_dict(),
        )

    @classmethod
    def latest(cls, scenario, metric, channel, weights_digest=None, epsilon=None):
        """Newest record for the channel, restricted to one network and bound when given."""
        records = cls.objects.filter(scenario=scenario, metric=metric, channel=channel)
        if weights_digest is not None:
            records = records.filter(weights_digest=weights_digest)
        if epsilon is not None:
            records = records.filter(epsilon_digest=digest(epsilon))
        return records.first()
