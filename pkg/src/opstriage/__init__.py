"""opstriage: agentic alert-triage engine with deterministic incident replay."""

__version__ = "0.1.0"
