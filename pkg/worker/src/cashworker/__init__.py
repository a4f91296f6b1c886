"""cash-eval-worker: reference external evaluator for the cashtree protocol."""

__version__ = "0.1.0"
