"""Dynamic proposer selection: one BO-probability per algorithm.

Each algorithm starts fully LLM-driven (p_bo = 0). Every five new
observations the surrogate's cross-validated Kendall tau is rescaled to a
probability, floored at epsilon so Bayesian optimization always stays
active once known to be minimally reliable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, NumericalFailure
from .surrogate import AlgoDataset, KernelParams, cv_kendall_tau

UPDATE_PERIOD = 5
MIN_DATA_FOR_UPDATE = 10   # 5 folds each holding >= 2 points
CV_FOLDS = 5


@dataclass
class ProposerState:
    epsilon: float = 0.05
    p_bo: dict[str, float] = field(default_factory=dict)
    since_update: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")

    def probability(self, algorithm_id: str) -> float:
        return self.p_bo.get(algorithm_id, 0.0)

    def record_observation(self, algorithm_id: str) -> None:
        self.since_update[algorithm_id] = self.since_update.get(algorithm_id, 0) + 1


def update_p_bo(tau: float, epsilon: float) -> float:
    """Rescale tau from [-1, 1] to a probability, floored at epsilon."""
    return max(epsilon, (tau + 1.0) / 2.0)


def maybe_update(state: ProposerState, algorithm_id: str, data: AlgoDataset,
                 cv_seed: int = 0, warm_params: KernelParams | None = None,
                 cv_max_rows: int | None = None) -> bool:
    """Run the tau update once five new observations have accumulated.

    The counter resets on every period boundary; the probability only moves
    when enough data exists for meaningful folds, and surrogate failures
    leave it unchanged.
    """
    if state.since_update.get(algorithm_id, 0) < UPDATE_PERIOD:
        return False
    state.since_update[algorithm_id] = 0
    if len(data) < MIN_DATA_FOR_UPDATE:
        return False
    try:
        tau = cv_kendall_tau(data, CV_FOLDS, seed=cv_seed,
                             restarts=1 if warm_params is not None else 2,
                             warm_params=warm_params, max_rows=cv_max_rows)
    except (InsufficientData, NumericalFailure):
        return False
    state.p_bo[algorithm_id] = update_p_bo(tau, state.epsilon)
    return True


def choose_proposer(state: ProposerState, algorithm_id: str,
                    rng: np.random.Generator) -> str:
    """Bernoulli draw: 'bo' with probability p_bo, else 'llm'."""
    return "bo" if rng.random() < state.probability(algorithm_id) else "llm"
