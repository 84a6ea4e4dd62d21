"""Digital-evolution simulator for quorum-sensing suicidal altruism."""

__version__ = "0.1.0"
