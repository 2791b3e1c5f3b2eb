"""Focused-feedback review pipeline: plan, investigate, review, evaluate."""

__version__ = "0.1.0"
