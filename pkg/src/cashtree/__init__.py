"""cashtree: combined algorithm selection and hyperparameter optimization
via Monte Carlo tree search, Gaussian-process surrogates and an LLM proposer."""

from ._core import BACKEND as KERNEL_BACKEND
from .engine import RunConfig, RunResult, ensemble_select, prediction_diversity, run
from .llm_client import HttpLlmClient, LlmConfig, MockLlmClient
from .objective import EvalResult, ExternalEvaluator, synth_cash
from .proposer_llm import TaskContext
from .space import (
    Configuration,
    EncodedConfig,
    ParamSpec,
    SearchSpace,
    load_space,
    parse_space,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "RunConfig",
    "RunResult",
    "run",
    "ensemble_select",
    "prediction_diversity",
    "HttpLlmClient",
    "LlmConfig",
    "MockLlmClient",
    "EvalResult",
    "ExternalEvaluator",
    "synth_cash",
    "TaskContext",
    "Configuration",
    "EncodedConfig",
    "ParamSpec",
    "SearchSpace",
    "load_space",
    "parse_space",
]
