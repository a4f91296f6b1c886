"""Candidate-pool Bayesian-optimization proposer.

Pools mix uniform random draws (initialization actions, attached to the algo
node) with local perturbations of every evaluated configuration in the
subtree (optimization actions, attached to the perturbed node). A fitted
surrogate ranks the pool by Expected Improvement; without one the proposer
falls back to a random-pool draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyPool
from .space import (
    Configuration,
    EncodedConfig,
    SearchSpace,
    batch_sample_encoded,
    decode_batch,
    encode,
    perturb_encoded_rows,
)
from .surrogate import GpModel, expected_improvement
from .tree import Tree, TreeNode

N_RANDOM = 50          # random candidates per pool
N_LOCAL_PER_NODE = 5   # perturbations per evaluated configuration
MAX_POOL = 500         # hard cap; the local portion is uniformly subsampled


@dataclass(frozen=True)
class Candidate:
    config: Configuration
    source: str                      # "random" | "local"
    parent_node: int                 # algo node for random, perturbed hp node for local
    enc: EncodedConfig | None = None


def generate_candidates(tree: Tree, algo_node: TreeNode, space: SearchSpace,
                        rng: np.random.Generator) -> list[Candidate]:
    """Build the candidate pool for one algorithm subtree (batched draws)."""
    aid = algo_node.algorithm_id
    hp_nodes = tree.hp_nodes_under(algo_node.id)
    total_local = N_LOCAL_PER_NODE * len(hp_nodes)
    budget = MAX_POOL - N_RANDOM
    if total_local > budget:
        # pick surviving slots up front instead of generating and discarding
        keep = np.sort(rng.choice(total_local, size=budget, replace=False))
        per_node = np.bincount(keep // N_LOCAL_PER_NODE, minlength=len(hp_nodes))
    else:
        per_node = np.full(len(hp_nodes), N_LOCAL_PER_NODE, dtype=np.int64)

    blocks = [(batch_sample_encoded(space, aid, N_RANDOM, rng), "random",
               np.full(N_RANDOM, algo_node.id))]
    contributing = [(node, int(c)) for node, c in zip(hp_nodes, per_node) if c]
    if contributing:
        encs = [encode(node.config, space) for node, _ in contributing]
        counts = [c for _, c in contributing]
        xc_base = np.repeat(np.stack([e.cont for e in encs]), counts, axis=0)
        xk_base = np.repeat(np.stack([e.cat for e in encs]), counts, axis=0)
        parents = np.repeat([node.id for node, _ in contributing], counts)
        blocks.append((perturb_encoded_rows(xc_base, xk_base, space, aid, rng),
                       "local", parents))

    pool = []
    for (xc, xk), source, parents in blocks:
        configs = decode_batch(xc, xk, space, aid)
        for config, cont, cat, parent in zip(configs, xc, xk, parents):
            pool.append(Candidate(config, source, int(parent), EncodedConfig(cont, cat)))
    return pool


def propose(pool: list[Candidate], model: GpModel | None, best_y_algo: float,
            rng: np.random.Generator) -> Candidate:
    """Highest-EI pool member (lowest index on ties); random member of the
    random-source subset while no surrogate exists."""
    if not pool:
        raise EmptyPool("candidate pool is empty")
    if model is None:
        randoms = [c for c in pool if c.source == "random"] or pool
        return randoms[int(rng.integers(len(randoms)))]
    xc = np.stack([c.enc.cont for c in pool])
    xk = np.stack([c.enc.cat for c in pool])
    means, variances = model.predict_batch(xc, xk)
    ei = expected_improvement(means, variances, best_y_algo)
    return pool[int(np.argmax(ei))]
