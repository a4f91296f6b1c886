"""LLM proposer: tuning memory, directives, prompt construction and parsing.

Memory retrieval keeps two views per algorithm: the Pareto frontier of past
attempts under (kernel similarity to the base configuration, achieved
metric), and the ancestral trajectory leading to the base node. Prompts are
rendered from the text templates in cashtree/prompts; responses are parsed
back into validated configurations with out-of-range values clipped rather
than rejected.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from string import Template
from typing import Sequence

from .errors import FullyExpanded, ParseFailure
from .llm_client import ChatMessage
from .space import CAT, INT, Configuration, ParamSpec, SearchSpace, encode
from .surrogate import KernelParams, kernel
from .tree import ALGO, HP, TreeNode

GLOBAL_MEMORY_CAP = 10


def _template(name: str) -> Template:
    text = resources.files("cashtree.prompts").joinpath(name).read_text(encoding="utf-8")
    return Template(text)


class Directive(str, Enum):
    WARMUP = "warmup"
    EXPLORATION = "exploration"
    EXPLOITATION = "exploitation"


@dataclass(frozen=True)
class Episode:
    """One optimization attempt: a parent -> child transition with outcomes."""

    parent_config: Configuration | None
    parent_y: float | None
    child_config: Configuration
    child_y: float
    reflection: str
    child_node: int
    action_label: str | None = None


@dataclass(frozen=True)
class Memory:
    global_entries: tuple[Episode, ...]
    local_entries: tuple[Episode, ...]


@dataclass(frozen=True)
class LlmProposal:
    thought: str
    config: Configuration
    raw: str


@dataclass(frozen=True)
class TaskContext:
    dataset_description: str
    metric_name: str
    task_kind: str
    n_samples: int | None = None
    n_features: int | None = None
    class_distribution: str | None = None

    def __post_init__(self):
        if not self.dataset_description:
            raise ValueError("dataset_description must be non-empty")


def pareto_front(points: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of the non-dominated points, maximizing both coordinates."""
    order = sorted(range(len(points)), key=lambda i: (-points[i][0], -points[i][1]))
    front: list[int] = []
    best_higher_sim = -float("inf")
    i = 0
    while i < len(order):
        sim = points[order[i]][0]
        group = []
        while i < len(order) and points[order[i]][0] == sim:
            group.append(order[i])
            i += 1
        group_max = max(points[g][1] for g in group)
        if group_max > best_higher_sim:
            front.extend(g for g in group if points[g][1] == group_max)
            best_higher_sim = group_max
    return front


def select_memory(episodes: Sequence[Episode], base: Configuration,
                  model_params: KernelParams, space: SearchSpace,
                  path_node_ids: Sequence[int] = ()) -> Memory:
    """Pareto-selected global entries plus the ancestral-path local entries.

    Similarity uses the current kernel hyperparameters with unit signal; an
    initialization episode (no parent) is scored by its child configuration.
    """
    base_enc = encode(base, space)
    unit = KernelParams(model_params.cont_lengthscales, model_params.cat_lengthscale,
                        1.0, model_params.noise_variance)
    sims = []
    for e in episodes:
        anchor = e.parent_config if e.parent_config is not None else e.child_config
        sims.append(kernel(encode(anchor, space), base_enc, unit))
    idx = pareto_front([(s, e.child_y) for s, e in zip(sims, episodes)])
    idx.sort(key=lambda i: -sims[i])
    global_entries = tuple(episodes[i] for i in idx[:GLOBAL_MEMORY_CAP])

    by_node = {e.child_node: e for e in episodes}
    local_entries = tuple(by_node[nid] for nid in path_node_ids if nid in by_node)
    return Memory(global_entries, local_entries)


def choose_directive(leaf: TreeNode, n_warmup: int = 3) -> Directive:
    """Warmup on algo leaves; exploration before exploitation on hp leaves."""
    if leaf.kind == ALGO:
        if leaf.warmup_count < n_warmup:
            return Directive.WARMUP
        raise FullyExpanded(f"algo node {leaf.id} has all warmups")
    if leaf.kind == HP:
        if "exploration" not in leaf.directives_done:
            return Directive.EXPLORATION
        if "exploitation" not in leaf.directives_done:
            return Directive.EXPLOITATION
    raise FullyExpanded(f"node {leaf.id} has no open directive slot")


# -- rendering ----------------------------------------------------------------

def _fmt_num(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, int):
        return str(v)
    return f"{v:.6g}"


def render_search_space(params: Sequence[ParamSpec]) -> str:
    lines = []
    for p in params:
        if p.kind == CAT:
            lines.append(f"- {p.name}: Categorical, {{{', '.join(p.choices)}}}")
        else:
            label = "Integer" if p.kind == INT else "Float"
            scale = " (Log-Scale)" if p.log else ""
            lines.append(f"- {p.name}: {label}, Range=[{_fmt_num(p.low)}, {_fmt_num(p.high)}]{scale}")
    return "\n".join(lines)


def render_config(config: Configuration) -> str:
    return json.dumps(dict(config.values))


def _render_dataset_context(ctx: TaskContext) -> str:
    lines = [
        f"The target task is a {ctx.task_kind} problem evaluated on the provided dataset. "
        f"The primary optimization metric is {ctx.metric_name}, where a higher value "
        f"indicates superior performance.",
        ctx.dataset_description,
    ]
    if ctx.n_samples is not None and ctx.n_features is not None:
        lines.append(f"The dataset consists of {ctx.n_samples} samples and "
                     f"{ctx.n_features} total features.")
    if ctx.class_distribution:
        lines.append(f"The target classes are distributed as {ctx.class_distribution}.")
    return "\n".join(lines)


def _render_trial(e: Episode) -> str:
    entry = {"performance": e.child_y, "configuration": dict(e.child_config.values)}
    if e.reflection:
        entry["reflection"] = e.reflection
    return json.dumps(entry)


def _proposer_label(e: Episode) -> str:
    return {
        "bo_random": "BO random search",
        "bo_local": "BO local search",
        "llm_warmup": "LLM warmup",
        "llm_exploration": "LLM exploration",
        "llm_exploitation": "LLM exploitation",
    }.get(e.action_label or "", "unknown proposer")


def _render_memory(memory: Memory | None) -> str:
    if memory is None or (not memory.global_entries and not memory.local_entries):
        return "(No prior trials for this algorithm yet.)"
    parts = ["This component integrates historical trajectories and high-performing "
             "trials to inform the current optimization step.", ""]
    parts.append("Optimization Trajectory Context:")
    if memory.local_entries:
        parts.append("This sequence preserves the ancestral path from the algorithm "
                     "root, providing trajectory awareness:")
        for i, e in enumerate(memory.local_entries):
            label = "Current Basic Node" if i == len(memory.local_entries) - 1 else f"Step {i + 1}"
            parts.append(f"- {label}: {_render_trial(e)}")
    else:
        parts.append("(empty)")
    parts.append("")
    parts.append("Informative Historical Trials:")
    if memory.global_entries:
        parts.append("The following trials represent top-performing historical attempts "
                     "that are most similar to the current configuration:")
        for i, e in enumerate(memory.global_entries):
            parts.append(f"Historical Trial {chr(65 + i)} (proposed by {_proposer_label(e)}):")
            if e.parent_config is not None:
                parts.append(f"- Parent: "
                             f'{json.dumps({"performance": e.parent_y, "configuration": dict(e.parent_config.values)})}')
            parts.append(f"- Child: "
                         f'{json.dumps({"performance": e.child_y, "configuration": dict(e.child_config.values)})}')
            if e.reflection:
                parts.append(f'- Reflection: "{e.reflection}"')
    else:
        parts.append("(empty)")
    return "\n".join(parts)


def build_tuning_prompt(ctx: TaskContext, space: SearchSpace, algorithm_id: str,
                        memory: Memory | None, base: Configuration | None,
                        directive: Directive) -> list[ChatMessage]:
    """Render the tuning conversation; base and memory are empty iff warmup."""
    if (base is None) != (directive is Directive.WARMUP):
        raise ValueError("base must be None exactly for warmup expansions")
    if directive is Directive.WARMUP:
        basic_section = "\n"
        memory_body = _render_memory(None)
    else:
        basic_section = (
            "\nThe Basic Configuration to Build Upon:\n"
            "This configuration is derived from previous trials and represents a "
            "promising starting point:\n"
            f"{render_config(base)}\n"
        )
        memory_body = _render_memory(memory)
    instruction = _template(f"directive_{directive.value}.txt").template.strip()
    user = _template("tuning_user.txt").substitute(
        TASK_KIND=ctx.task_kind,
        ALGORITHM=algorithm_id,
        SEARCH_SPACE=render_search_space(space.params(algorithm_id)),
        BASIC_SECTION=basic_section,
        MODE=directive.value.capitalize(),
        INSTRUCTION=instruction,
        DATASET_CONTEXT=_render_dataset_context(ctx),
        MEMORY_BODY=memory_body,
    )
    system = _template("tuning_system.txt").template.strip()
    return [ChatMessage("system", system), ChatMessage("user", user)]


# -- response parsing ----------------------------------------------------------

def _scan_json_objects(text: str) -> list[dict]:
    """Balanced-brace scan for JSON objects, outermost first."""
    out = []
    i, n = 0, len(text)
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        depth, j, in_str, esc = 0, i, False, False
        while j < n:
            ch = text[j]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    break
            j += 1
        if j >= n:
            break
        try:
            obj = json.loads(text[i:j + 1])
        except json.JSONDecodeError:
            i += 1
            continue
        if isinstance(obj, dict):
            out.append(obj)
            i = j + 1
        else:
            i += 1
    return out


def coerce_config(obj: dict, space: SearchSpace, algorithm_id: str) -> Configuration:
    """Clip numerics into range, round integers, validate categoricals."""
    values = {}
    for p in space.params(algorithm_id):
        if p.name not in obj:
            raise ParseFailure(f"missing parameter {p.name!r}")
        raw = obj[p.name]
        if p.kind == CAT:
            if not isinstance(raw, str) or raw not in p.choices:
                raise ParseFailure(f"{p.name}: invalid categorical value {raw!r}")
            values[p.name] = raw
        else:
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise ParseFailure(f"{p.name}: non-numeric value {raw!r}") from None
            v = min(p.high, max(p.low, v))
            values[p.name] = int(min(p.high, max(p.low, round(v)))) if p.kind == INT else v
    return Configuration(algorithm_id, values)


def parse_tuning_response(text: str, space: SearchSpace, algorithm_id: str) -> LlmProposal:
    """Last JSON object after the final 'Action' marker (whole text as fallback)."""
    action_at = text.rfind("Action")
    region = text[action_at:] if action_at >= 0 else text
    objects = _scan_json_objects(region) or _scan_json_objects(text)
    if not objects:
        raise ParseFailure("no JSON object found in response")
    config = coerce_config(objects[-1], space, algorithm_id)
    thought = ""
    m = re.search(r"Thought\s*:?(.*?)(?:Action\b|$)", text, re.DOTALL)
    if m:
        thought = m.group(1).strip().strip("*").strip()
    return LlmProposal(thought=thought, config=config, raw=text)


# -- reflection ----------------------------------------------------------------

def format_percent_change(old: float, new: float) -> str:
    if new == old:
        return "0.00%"
    if old == 0:
        return "n/a"
    return f"{(new - old) / abs(old) * 100.0:+.2f}%"


def build_reflection_prompt(ctx: TaskContext, memory: Memory | None,
                            base: tuple[Configuration, float] | None,
                            new: tuple[Configuration, float],
                            rank: tuple[int, int],
                            rationale: str = "") -> list[ChatMessage]:
    """Render the analysis conversation for one finished trial."""
    new_config, new_y = new
    lines = []
    if base is not None:
        base_config, base_y = base
        lines.append(f"- Basic Configuration: {render_config(base_config)}")
        lines.append(f"- Basic Performance: {base_y}")
        if rationale:
            lines.append(f"- Original Rationale: {rationale}")
        change = format_percent_change(base_y, new_y)
        lines.append(f"- Resulting Configuration: {render_config(new_config)}")
        lines.append(f"- Resulting Performance: {new_y} ({change} relative to basic)")
    else:
        if rationale:
            lines.append(f"- Original Rationale: {rationale}")
        lines.append(f"- Resulting Configuration: {render_config(new_config)}")
        lines.append(f"- Resulting Performance: {new_y} (initial configuration for "
                     f"this trajectory; no basic configuration to compare against)")
    position, total = rank
    lines.append(f"- Global Ranking: {position} out of {total} trials of "
                 f"'{new_config.algorithm_id}'")
    user = _template("reflection_user.txt").substitute(
        TASK_KIND=ctx.task_kind,
        ALGORITHM=new_config.algorithm_id,
        TRIAL_SECTION="\n".join(lines),
        DATASET_CONTEXT=_render_dataset_context(ctx),
        MEMORY_BODY=_render_memory(memory),
    )
    system = _template("reflection_system.txt").template.strip()
    return [ChatMessage("system", system), ChatMessage("user", user)]


def parse_reflection_response(text: str) -> tuple[str, str]:
    """Split on the 'Reflection Summary' marker; only the summary is memorized."""
    matches = list(re.finditer(r"reflection\s+summary\s*:?", text, re.IGNORECASE))
    if not matches:
        return "", text.strip()
    last = matches[-1]
    reflection = text[:last.start()]
    reflection = re.sub(r"^\s*(?:\*\*)?reflection(?:\*\*)?\s*:?", "", reflection,
                        flags=re.IGNORECASE).strip()
    summary = text[last.end():].strip().lstrip(":*").strip()
    return reflection, summary


def synthesize_bo_summary(parent: tuple[Configuration, float] | None,
                          child: tuple[Configuration, float],
                          metric_name: str = "performance") -> str:
    """Heuristic reflection for BO expansions: changed parameters plus the delta."""
    child_config, child_y = child
    if parent is None:
        return f"Initial configuration achieved {metric_name}={_fmt_num(child_y)}."
    parent_config, parent_y = parent
    changes = []
    for name, new_v in child_config.values.items():
        old_v = parent_config.values.get(name)
        if old_v == new_v:
            continue
        if isinstance(new_v, str) or isinstance(old_v, str):
            changes.append(f"changing {name} from {old_v} to {new_v}")
        else:
            verb = "increasing" if new_v > old_v else "decreasing"
            changes.append(f"{verb} {name} from {_fmt_num(old_v)} to {_fmt_num(new_v)}")
    delta = child_y - parent_y
    pct = format_percent_change(parent_y, child_y)
    if not changes:
        return f"No parameter changes; {metric_name} delta {delta:+.6g} ({pct})."
    head = " and ".join(changes)
    head = head[0].upper() + head[1:]
    if delta > 0:
        return f"{head} improved {metric_name} by {pct.lstrip('+')} ({delta:+.6g})."
    if delta < 0:
        return f"{head} reduced {metric_name} by {pct.lstrip('-')} ({delta:+.6g})."
    return f"{head} left {metric_name} unchanged."
