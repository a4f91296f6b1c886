"""The optimization loop, trial history, and post-hoc ensemble selection.

Each iteration: PUCT picks an algorithm (prior from surrogate rollouts), the
per-algorithm switch picks a proposer, the proposer yields a configuration
(BO: EI over a candidate pool; LLM: PUCT descent to a leaf, directive,
prompt, parse), the evaluator scores it, a reflection is attached (verbal
for LLM expansions, templated for BO ones), and the result backpropagates
through the tree. LLM transport or parse failures fall back to the BO
proposer so every iteration stays productive.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    EvalCrash,
    EvalTimeout,
    FullyExpanded,
    InsufficientData,
    LlmError,
    LlmUnavailable,
    NoLeaf,
    NumericalFailure,
    ParseFailure,
    ShapeMismatch,
)
from .llm_client import ChatMessage
from .proposer_bo import generate_candidates, propose
from .proposer_llm import (
    Directive,
    Episode,
    TaskContext,
    build_reflection_prompt,
    build_tuning_prompt,
    choose_directive,
    parse_reflection_response,
    parse_tuning_response,
    select_memory,
    synthesize_bo_summary,
)
from .selector import ProposerState, choose_proposer, maybe_update
from .space import Configuration, SearchSpace, encode, sample_random, space_to_dict
from .surrogate import (
    AlgoDataset,
    algorithm_prior,
    default_params,
    extend_model,
    fit,
    fit_with_params,
)
from .tree import HP, Tree, backpropagate, compute_reward, select_algorithm, select_hp_leaf

# The covariance factorization is refreshed on every new observation so the
# posterior always sees the full dataset; the (expensive) hyperparameter
# search reruns densely early, then on a cadence that stretches with size,
# warm started and row-capped.
HYPEROPT_DENSE_UNTIL = 50
HYPEROPT_PERIOD = 5
HYPEROPT_SLOW_FROM = 200
HYPEROPT_SLOW_PERIOD = 20
COLD_RESTARTS = 8
WARM_RESTARTS = 2
OPT_ROW_CAP = 128
CV_ROW_CAP = 150

MODES = ("hybrid", "bo_only", "llm_only", "fixed")

FORMAT_REMINDER = (
    "\n\nReminder: reply with 'Thought:' followed by 'Action:' and a single valid "
    "JSON object containing every hyperparameter exactly as named in the search space."
)


def _approx_tokens(text: str) -> int:
    return max(1, len(text) // 4)


@dataclass
class RunConfig:
    budget: int = 300
    c_puct: float = math.sqrt(2.0)
    n_s: int = 100
    epsilon: float = 0.05
    n_warmup: int = 3
    seed: int = 0
    mode: str = "hybrid"
    fixed_p: float = 0.5
    llm_parse_retries: int = 2
    eval_timeout: float = 300.0
    record_timing: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= self.fixed_p <= 1.0:
            raise ValueError("fixed_p must lie in [0, 1]")


@dataclass
class TrialRecord:
    iteration: int
    algorithm: str
    config: dict
    y: float
    proposer: str
    action: str
    parent_node: int
    p_bo: float
    reward: int
    fallback: bool
    prompt_tokens: int
    completion_tokens: int
    elapsed_s: float | None = None
    aux: dict | None = None

    def to_json(self) -> str:
        row = asdict(self)
        for key in ("elapsed_s", "aux"):
            if row[key] is None:
                del row[key]
        return json.dumps(row, sort_keys=True)


class RunHistory:
    """Ordered successful trials; the incumbent never decreases."""

    def __init__(self):
        self.records: list[TrialRecord] = []

    def append(self, record: TrialRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def best_so_far(self) -> list[float]:
        out, best = [], -math.inf
        for r in self.records:
            best = max(best, r.y)
            out.append(best)
        return out

    def allocation_ratios(self) -> dict[str, float]:
        counts: dict[str, int] = {}
        for r in self.records:
            counts[r.algorithm] = counts.get(r.algorithm, 0) + 1
        total = max(len(self.records), 1)
        return {aid: c / total for aid, c in counts.items()}


@dataclass
class RunResult:
    best_algorithm: str
    best_config: Configuration
    best_y: float
    history: RunHistory
    tree: Tree
    summary: dict


class Engine:
    def __init__(self, space: SearchSpace, evaluator, llm, run_config: RunConfig,
                 task_context: TaskContext | None = None, history_path=None):
        self.space = space
        self.evaluator = evaluator
        self.llm = llm
        self.cfg = run_config
        self.ctx = task_context or TaskContext(
            dataset_description="(no dataset description provided)",
            metric_name=space.metric, task_kind=space.task)
        self.rng = np.random.default_rng(run_config.seed)
        self.tree = Tree(space, n_warmup=run_config.n_warmup)
        self.datasets = {aid: AlgoDataset(aid) for aid in space.algorithm_ids}
        self.models = {aid: None for aid in space.algorithm_ids}
        self.episodes: dict[str, list[Episode]] = {aid: [] for aid in space.algorithm_ids}
        self.state = ProposerState(epsilon=run_config.epsilon)
        self.history = RunHistory()
        self.y_min = math.inf
        self.y_max = -math.inf
        self.eval_failures = 0
        self.llm_fallbacks = 0
        self.best: tuple[str, Configuration, float] | None = None
        self._history_fh = open(history_path, "w", encoding="utf-8") if history_path else None

    # -- helpers ------------------------------------------------------------

    def _kernel_params(self, aid: str):
        model = self.models[aid]
        if model is not None:
            return model.params
        return default_params(len(self.space.numeric_params(aid)))

    def _choose_proposer(self, aid: str) -> tuple[str, float]:
        mode = self.cfg.mode
        if mode == "bo_only":
            return "bo", 1.0
        if mode == "llm_only":
            return "llm", 0.0
        if mode == "fixed":
            p = self.cfg.fixed_p
            return ("bo" if self.rng.random() < p else "llm"), p
        p = self.state.probability(aid)
        return choose_proposer(self.state, aid, self.rng), p

    def _bo_proposal(self, algo_node):
        aid = algo_node.algorithm_id
        pool = generate_candidates(self.tree, algo_node, self.space, self.rng)
        data = self.datasets[aid]
        best_y = data.best_y() if len(data) else -math.inf
        cand = propose(pool, self.models[aid], best_y, self.rng)
        base = None
        if cand.source == "local":
            parent = self.tree.node(cand.parent_node)
            base = (parent.config, parent.y)
        return cand.config, cand.parent_node, f"bo_{cand.source}", base

    def _llm_proposal(self, algo_node):
        """Returns (config, parent, action, base, memory, thought, tokens) or None
        on fallback (after exhausting parse retries or a transport failure)."""
        aid = algo_node.algorithm_id
        leaf = select_hp_leaf(self.tree, algo_node, self.cfg.c_puct, self.cfg.n_warmup)
        directive = choose_directive(leaf, self.cfg.n_warmup)
        if directive is Directive.WARMUP:
            base_cfg, memory = None, None
        else:
            base_cfg = leaf.config
            path_hp = [nid for nid in self.tree.path_from_root(leaf.id)
                       if self.tree.node(nid).kind == HP]
            memory = select_memory(self.episodes[aid], base_cfg,
                                   self._kernel_params(aid), self.space, path_hp)
        messages = build_tuning_prompt(self.ctx, self.space, aid, memory, base_cfg, directive)
        tokens = [0, 0]
        proposal = None
        for attempt in range(self.cfg.llm_parse_retries + 1):
            msgs = messages if attempt == 0 else [
                messages[0], ChatMessage("user", messages[1].content + FORMAT_REMINDER)]
            try:
                text = self.llm.chat(msgs, "tuning")
            except LlmError:
                if self.cfg.mode == "llm_only":
                    raise
                return None
            tokens[0] += sum(_approx_tokens(m.content) for m in msgs)
            tokens[1] += _approx_tokens(text)
            try:
                proposal = parse_tuning_response(text, self.space, aid)
                break
            except ParseFailure:
                continue
        if proposal is None:
            if self.cfg.mode == "llm_only":
                raise LlmUnavailable("response unparseable after retries")
            return None
        base = (leaf.config, leaf.y) if leaf.kind == HP else None
        action = f"llm_{directive.value}"
        return proposal.config, leaf.id, action, base, memory, proposal.thought, tokens

    def _reflect(self, proposer: str, memory, base, config, y, aid, thought, tokens) -> str:
        if proposer == "llm":
            data = self.datasets[aid]
            position = 1 + sum(1 for _, yi in data.rows if yi > y)
            total = len(data) + 1
            msgs = build_reflection_prompt(self.ctx, memory, base, (config, y),
                                           (position, total), rationale=thought)
            try:
                text = self.llm.chat(msgs, "reflection")
            except LlmError:
                # transport failure: fall back to the templated summary so the
                # episode still carries usable guidance
                return synthesize_bo_summary(base, (config, y), self.space.metric)
            tokens[0] += sum(_approx_tokens(m.content) for m in msgs)
            tokens[1] += _approx_tokens(text)
            _, summary = parse_reflection_response(text)
            return summary if summary else "no reflection"
        return synthesize_bo_summary(base, (config, y), self.space.metric)

    def _hyperopt_due(self, n: int) -> bool:
        if n <= HYPEROPT_DENSE_UNTIL:
            return True
        if n <= HYPEROPT_SLOW_FROM:
            return n % HYPEROPT_PERIOD == 0
        return n % HYPEROPT_SLOW_PERIOD == 0

    def _refit(self, aid: str, new_enc, new_y: float):
        data = self.datasets[aid]
        n = len(data)
        if n < 2:
            return
        model = self.models[aid]
        try:
            if model is None or self._hyperopt_due(n):
                warm = model.params if model else None
                restarts = COLD_RESTARTS if model is None else WARM_RESTARTS
                self.models[aid] = fit(data, restarts=restarts, rng=self.rng,
                                       warm_params=warm, max_opt_rows=OPT_ROW_CAP)
            elif model.n == n - 1:
                try:
                    self.models[aid] = extend_model(model, new_enc, new_y)
                except NumericalFailure:
                    self.models[aid] = fit_with_params(data, model.params)
            else:
                self.models[aid] = fit_with_params(data, model.params)
        except (InsufficientData, NumericalFailure):
            pass   # keep the previous surrogate

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        try:
            for t in range(self.cfg.budget):
                self._iterate(t)
        finally:
            if self._history_fh:
                self._history_fh.close()
                self._history_fh = None
        if self.best is None:
            raise EvalCrash("no successful evaluation within the budget")
        aid, config, y = self.best
        return RunResult(aid, config, y, self.history, self.tree, self._summary())

    def _iterate(self, t: int):
        started = time.monotonic()
        priors = algorithm_prior(self.models, self.space, self.cfg.n_s, self.rng)
        gmin = self.y_min if self.y_min != math.inf else 0.0
        gmax = self.y_max if self.y_max != -math.inf else 0.0
        algo_node = select_algorithm(self.tree, priors, self.cfg.c_puct, gmin, gmax)
        aid = algo_node.algorithm_id

        proposer, p_snapshot = self._choose_proposer(aid)
        fallback = False
        memory = thought = None
        tokens = [0, 0]
        if proposer == "llm":
            try:
                out = self._llm_proposal(algo_node)
            except (NoLeaf, FullyExpanded):
                out = "exhausted"
            if out is None:
                proposer, fallback = "bo", True
                self.llm_fallbacks += 1
                config, parent_id, action, base = self._bo_proposal(algo_node)
            elif out == "exhausted":
                # fully expanded subtree: substitute one BO random draw
                proposer, fallback = "bo", True
                config = sample_random(self.space, aid, self.rng)
                parent_id, action, base = algo_node.id, "bo_random", None
            else:
                config, parent_id, action, base, memory, thought, tokens = out
        else:
            config, parent_id, action, base = self._bo_proposal(algo_node)

        try:
            result = self.evaluator.evaluate(config)
        except (EvalTimeout, EvalCrash):
            self.eval_failures += 1
            return
        y = float(result.y)
        if not math.isfinite(y):
            self.eval_failures += 1
            return

        summary = self._reflect(proposer, memory, base, config, y, aid, thought or "", tokens)

        node = self.tree.add_child(parent_id, config, action)
        node.y = y
        node.reflection = summary
        self.episodes[aid].append(Episode(
            parent_config=base[0] if base else None,
            parent_y=base[1] if base else None,
            child_config=config, child_y=y, reflection=summary,
            child_node=node.id, action_label=action))
        enc = encode(config, self.space)
        self.datasets[aid].append(enc, y)
        self.state.record_observation(aid)
        self._refit(aid, enc, y)
        if self.cfg.mode == "hybrid":
            warm = self.models[aid].params if self.models[aid] else None
            maybe_update(self.state, aid, self.datasets[aid],
                         cv_seed=self.cfg.seed & 0x7FFFFFFF,
                         warm_params=warm, cv_max_rows=CV_ROW_CAP)

        reward = compute_reward(y, self.tree.root.best_subtree_y)
        backpropagate(self.tree, node.id, reward, y)
        self.y_min = min(self.y_min, y)
        self.y_max = max(self.y_max, y)
        if self.best is None or y > self.best[2]:
            self.best = (aid, config, y)

        record = TrialRecord(
            iteration=t, algorithm=aid, config=dict(config.values), y=y,
            proposer=proposer, action=action, parent_node=parent_id,
            p_bo=p_snapshot, reward=reward, fallback=fallback,
            prompt_tokens=tokens[0], completion_tokens=tokens[1],
            elapsed_s=(time.monotonic() - started) if self.cfg.record_timing else None,
            aux=result.aux)
        self.history.append(record)
        if self._history_fh:
            self._history_fh.write(record.to_json() + "\n")
            self._history_fh.flush()

    def _summary(self) -> dict:
        aid, config, y = self.best
        trajectories: dict[str, list] = {}
        last: dict[str, float] = {}
        for r in self.history:
            if r.algorithm not in last or r.p_bo != last[r.algorithm]:
                trajectories.setdefault(r.algorithm, []).append([r.iteration, r.p_bo])
                last[r.algorithm] = r.p_bo
        summary = {
            "best": {"algorithm": aid, "config": dict(config.values), "y": y},
            "iterations": len(self.history),
            "budget": self.cfg.budget,
            "mode": self.cfg.mode,
            "seed": self.cfg.seed,
            "eval_failures": self.eval_failures,
            "llm_fallbacks": self.llm_fallbacks,
            "allocation": self.history.allocation_ratios(),
            "p_bo_final": dict(self.state.p_bo),
            "p_bo_trajectory": trajectories,   # change points per algorithm
            "space": space_to_dict(self.space),
        }
        info = getattr(self.evaluator, "worker_info", None)
        if info:
            summary["worker_info"] = info
        return summary


def run(space: SearchSpace, evaluator, llm, run_config: RunConfig,
        task_context: TaskContext | None = None, out_dir=None) -> RunResult:
    """Execute one optimization run; optionally persist history/summary/tree."""
    history_path = None
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        history_path = os.path.join(out_dir, "history.jsonl")
    engine = Engine(space, evaluator, llm, run_config, task_context, history_path)
    result = engine.run()
    if out_dir is not None:
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(result.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        result.tree.dump_jsonl(os.path.join(out_dir, "tree.jsonl"))
    return result


# -- post-hoc ensemble ---------------------------------------------------------

def _balanced_accuracy(targets: np.ndarray, probs: np.ndarray) -> float:
    pred = np.argmax(probs, axis=1)
    recalls = [float(np.mean(pred[targets == c] == c)) for c in np.unique(targets)]
    return float(np.mean(recalls))


def _neg_mse(targets: np.ndarray, values: np.ndarray) -> float:
    return -float(np.mean((values - targets) ** 2))


def ensemble_select(predictions, val_targets, max_rounds: int = 25,
                    metric=None) -> np.ndarray:
    """Greedy forward selection with replacement; returns normalized weights.

    predictions: (models, samples) regression values or
    (models, samples, classes) probability vectors, aligned with val_targets.
    """
    preds = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(val_targets)
    if preds.ndim not in (2, 3) or preds.shape[0] < 1 or preds.shape[1] != targets.shape[0]:
        raise ShapeMismatch(f"predictions {preds.shape} vs targets {targets.shape}")
    if metric is None:
        metric = _balanced_accuracy if preds.ndim == 3 else _neg_mse
    m = preds.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    total = np.zeros_like(preds[0])
    best_score = -math.inf
    for k in range(max_rounds):
        scores = np.array([metric(targets, (total + preds[j]) / (k + 1)) for j in range(m)])
        j = int(np.argmax(scores))
        if k > 0 and scores[j] <= best_score:
            break
        counts[j] += 1
        total += preds[j]
        best_score = float(scores[j])
    return counts / counts.sum()


def prediction_diversity(pred_i, pred_j) -> float:
    """sqrt(2)/2 times the mean Euclidean distance between per-sample predictions."""
    a = np.asarray(pred_i, dtype=np.float64)
    b = np.asarray(pred_j, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return float(math.sqrt(2.0) / 2.0 * np.mean(np.linalg.norm(a - b, axis=1)))
