"""Auditable orchestration engine for staged discovery pipelines.

Library surface: domain model, prompt templates, structured-output
parsers, agent gateway, pairwise tournament ranking, trajectory
consensus, and the resumable orchestrator plus its HTTP service.
"""

__version__ = "0.1.0"
