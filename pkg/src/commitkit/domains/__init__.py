"""Seeded generators for the evaluation domains."""

from .synthetic import gen_synthetic_provider
from .walk import gen_walk_recipient, walk_recipient

__all__ = ["gen_synthetic_provider", "gen_walk_recipient", "walk_recipient"]
