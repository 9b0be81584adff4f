"""Causal-graph construction, validation, and root-cause localization for
model-serving telemetry."""

__version__ = "0.1.0"
