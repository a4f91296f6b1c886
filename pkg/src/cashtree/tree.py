"""Search tree over the CASH hierarchy.

Three node kinds: the root (one per run), one algo node per algorithm, and
hp nodes holding concrete configurations. Each node tracks a visit count, a
cumulative binary reward and the best metric value seen in its subtree.
Selection at both levels uses PUCT; the reward is 1 exactly when a playout
improves on the global incumbent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import AlgorithmMismatch, NoLeaf
from .space import Configuration, SearchSpace

CASH_ROOT = "cash_root"
ALGO = "algo"
HP = "hp"

DIRECTIVE_LABELS = {"llm_exploration": "exploration", "llm_exploitation": "exploitation"}
INIT_LABELS = {"llm_warmup", "bo_random"}
ACTION_LABELS = {"llm_warmup", "llm_exploration", "llm_exploitation", "bo_random", "bo_local"}


@dataclass
class TreeNode:
    id: int
    kind: str
    algorithm_id: str | None = None
    config: Configuration | None = None
    y: float | None = None
    reflection: str | None = None
    visits: int = 0                       # N_s
    reward_sum: int = 0                   # R_s
    best_subtree_y: float = -math.inf     # y_max over the subtree
    children: list[int] = field(default_factory=list)
    parent: int | None = None
    directives_done: set[str] = field(default_factory=set)   # hp nodes
    warmup_count: int = 0                                     # algo nodes
    action_label: str | None = None                           # hp nodes

    def mean_reward(self) -> float:
        return self.reward_sum / self.visits if self.visits else 0.0


class Tree:
    """Arena of nodes; the root always has exactly one algo child per algorithm."""

    def __init__(self, space: SearchSpace, n_warmup: int = 3):
        self.n_warmup = n_warmup
        self.nodes: list[TreeNode] = [TreeNode(0, CASH_ROOT)]
        for aid in space.algorithm_ids:
            node = TreeNode(len(self.nodes), ALGO, algorithm_id=aid, parent=0)
            self.nodes.append(node)
            self.root.children.append(node.id)

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def algo_node(self, algorithm_id: str) -> TreeNode:
        for nid in self.root.children:
            if self.nodes[nid].algorithm_id == algorithm_id:
                return self.nodes[nid]
        raise KeyError(algorithm_id)

    def path_from_root(self, node_id: int) -> list[int]:
        path = []
        cur: int | None = node_id
        while cur is not None:
            path.append(cur)
            cur = self.nodes[cur].parent
        return path[::-1]

    def hp_nodes_under(self, node_id: int) -> list[TreeNode]:
        """All hp descendants, in creation (id) order."""
        out, stack = [], [node_id]
        while stack:
            n = self.nodes[stack.pop()]
            if n.kind == HP:
                out.append(n)
            stack.extend(n.children)
        out.sort(key=lambda n: n.id)
        return out

    def add_child(self, parent_id: int, config: Configuration, action_label: str) -> TreeNode:
        """Append a fresh hp node; y and reflection are attached after evaluation."""
        parent = self.nodes[parent_id]
        if parent.kind not in (ALGO, HP):
            raise AlgorithmMismatch("hp nodes descend only from algo or hp nodes")
        if action_label not in ACTION_LABELS:
            raise ValueError(f"unknown action label {action_label!r}")
        if config.algorithm_id != parent.algorithm_id:
            raise AlgorithmMismatch(
                f"config for {config.algorithm_id!r} under {parent.algorithm_id!r} subtree"
            )
        node = TreeNode(len(self.nodes), HP, algorithm_id=parent.algorithm_id,
                        config=config, parent=parent_id, action_label=action_label)
        self.nodes.append(node)
        parent.children.append(node.id)
        if parent.kind == ALGO and action_label in INIT_LABELS:
            parent.warmup_count += 1
        if parent.kind == HP and action_label in DIRECTIVE_LABELS:
            parent.directives_done.add(DIRECTIVE_LABELS[action_label])
        return node

    def dump_jsonl(self, path) -> None:
        """One node per line with all fields; -inf is serialized as null."""
        with open(path, "w", encoding="utf-8") as fh:
            for n in self.nodes:
                fh.write(json.dumps(node_to_dict(n), sort_keys=True) + "\n")


def node_to_dict(n: TreeNode) -> dict:
    return {
        "id": n.id,
        "kind": n.kind,
        "algorithm_id": n.algorithm_id,
        "config": dict(n.config.values) if n.config else None,
        "y": n.y,
        "reflection": n.reflection,
        "visits": n.visits,
        "reward_sum": n.reward_sum,
        "best_subtree_y": None if n.best_subtree_y == -math.inf else n.best_subtree_y,
        "children": list(n.children),
        "parent": n.parent,
        "directives_done": sorted(n.directives_done),
        "warmup_count": n.warmup_count,
        "action_label": n.action_label,
    }


def puct_score(parent: TreeNode, child: TreeNode, prior: float, c_puct: float,
               q: float | None = None) -> float:
    """Q(child) + c_puct * P * sqrt(N_parent) / (1 + N_child).

    Q defaults to the child's mean reward (0 when unvisited); algorithm-level
    callers pass q_algo explicitly. An unvisited parent contributes a unit
    factor so priors still break the cold-start tie.
    """
    if q is None:
        q = child.mean_reward()
    explore = math.sqrt(parent.visits) if parent.visits else 1.0
    return q + c_puct * prior * explore / (1 + child.visits)


def q_algo(node: TreeNode, global_min: float, global_max: float) -> float:
    """Mean reward plus the subtree best normalized to the global metric range."""
    if node.visits == 0:
        return 0.0
    q = node.reward_sum / node.visits
    if node.best_subtree_y != -math.inf and global_max > global_min:
        q += (node.best_subtree_y - global_min) / (global_max - global_min)
    return q


def select_algorithm(tree: Tree, priors, c_puct: float,
                     global_min: float, global_max: float) -> TreeNode:
    """PUCT over the root's algo children; ties break to the lowest child index."""
    root = tree.root
    best, best_score = None, -math.inf
    for prior, nid in zip(priors, root.children):
        child = tree.node(nid)
        score = puct_score(root, child, float(prior), c_puct,
                           q=q_algo(child, global_min, global_max))
        if score > best_score:
            best, best_score = child, score
    return best


def is_llm_leaf(node: TreeNode, n_warmup: int) -> bool:
    """Leaf for the LLM proposer: an algo node still collecting its initial
    configurations, or an hp node with an unexecuted directive."""
    if node.kind == ALGO:
        return node.warmup_count < n_warmup
    if node.kind == HP:
        return node.directives_done != {"exploration", "exploitation"}
    return False


def _subtree_has_leaf(tree: Tree, node: TreeNode, n_warmup: int) -> bool:
    stack = [node.id]
    while stack:
        n = tree.node(stack.pop())
        if is_llm_leaf(n, n_warmup):
            return True
        stack.extend(n.children)
    return False


def select_hp_leaf(tree: Tree, algo_node: TreeNode, c_puct: float,
                   n_warmup: int | None = None) -> TreeNode:
    """Descend by PUCT (uniform prior over existing children) to a leaf.

    Dead branches (fully expanded, no open descendant) are excluded from the
    descent; raises NoLeaf when the whole subtree is fully expanded.
    """
    if n_warmup is None:
        n_warmup = tree.n_warmup
    node = algo_node
    while True:
        if is_llm_leaf(node, n_warmup):
            return node
        if not node.children:
            raise NoLeaf(f"subtree of node {algo_node.id} is fully expanded")
        prior = 1.0 / len(node.children)
        best, best_score = None, -math.inf
        for nid in node.children:
            child = tree.node(nid)
            if not _subtree_has_leaf(tree, child, n_warmup):
                continue
            score = puct_score(node, child, prior, c_puct)
            if score > best_score:
                best, best_score = child, score
        if best is None:
            raise NoLeaf(f"subtree of node {algo_node.id} is fully expanded")
        node = best


def compute_reward(y_new: float, root_best: float) -> int:
    """1 exactly when the new metric strictly improves on the global incumbent."""
    return 1 if y_new > root_best else 0


def backpropagate(tree: Tree, node_id: int, reward: int, y_new: float) -> None:
    """Update visits, cumulative reward and subtree best along root -> node."""
    for nid in tree.path_from_root(node_id):
        n = tree.node(nid)
        n.visits += 1
        n.reward_sum += reward
        if y_new > n.best_subtree_y:
            n.best_subtree_y = y_new
