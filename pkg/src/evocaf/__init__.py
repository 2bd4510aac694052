"""Cost-aware Bayesian optimization with LLM-evolved acquisition functions."""

__version__ = "0.1.0"
