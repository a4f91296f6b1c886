import json

import pytest

from cashtree.errors import FullyExpanded, ParseFailure
from cashtree.proposer_llm import (
    Directive,
    Episode,
    Memory,
    TaskContext,
    build_reflection_prompt,
    build_tuning_prompt,
    choose_directive,
    format_percent_change,
    parse_reflection_response,
    parse_tuning_response,
    pareto_front,
    select_memory,
    synthesize_bo_summary,
)
from cashtree.space import Configuration, sample_random
from cashtree.surrogate import default_params
from cashtree.tree import TreeNode


@pytest.fixture
def ctx():
    return TaskContext(
        dataset_description="A three-class tabular benchmark with 1178 rows.",
        metric_name="balanced accuracy", task_kind="classification",
        n_samples=1178, n_features=9,
        class_distribution="42.7% class 1, 34.7% class 3, 22.6% class 2")


def episode(aid, y, node_id, parent=None, parent_y=None, reflection="keep depth at 5",
            action="llm_exploration"):
    return Episode(parent_config=parent, parent_y=parent_y,
                   child_config=Configuration(aid, {"x1": y, "x2": 0.5}),
                   child_y=y, reflection=reflection, child_node=node_id,
                   action_label=action)


def oracle_pareto(points):
    """O(n^2) dominance oracle."""
    keep = []
    for i, (si, yi) in enumerate(points):
        dominated = any(
            (sj >= si and yj >= yi and (sj > si or yj > yi))
            for j, (sj, yj) in enumerate(points) if j != i)
        if not dominated:
            keep.append(i)
    return keep


# -- pareto / memory -------------------------------------------------------------

def test_pareto_worked_example():
    pts = [(0.9, 0.5), (0.5, 0.9), (0.4, 0.4)]
    assert sorted(pareto_front(pts)) == [0, 1] == sorted(oracle_pareto(pts))


def test_pareto_singleton():
    assert pareto_front([(0.2, 0.1)]) == [0]


def test_pareto_matches_oracle_random(rng):
    for _ in range(30):
        pts = [(float(a), float(b))
               for a, b in zip(rng.integers(0, 5, 15) / 4, rng.integers(0, 5, 15) / 4)]
        assert sorted(pareto_front(pts)) == sorted(oracle_pareto(pts))


def test_select_memory_frontier_and_local(synth_space):
    params = default_params(2)
    base = Configuration("algoB", {"x1": 0.5, "x2": 0.5})
    episodes = [episode("algoB", y, node_id=i + 10) for i, y in enumerate((0.2, 0.6, 0.9))]
    mem = select_memory(episodes, base, params, synth_space, path_node_ids=[10, 12])
    assert [e.child_node for e in mem.local_entries] == [10, 12]
    got = {e.child_node for e in mem.global_entries}
    # every frontier member must be undominated in (similarity, child_y)
    from cashtree.space import encode
    from cashtree.surrogate import KernelParams, kernel

    unit = KernelParams(params.cont_lengthscales, params.cat_lengthscale, 1.0,
                        params.noise_variance)
    pts = [(kernel(encode(e.child_config, synth_space), encode(base, synth_space), unit),
            e.child_y) for e in episodes]
    assert got == {episodes[i].child_node for i in oracle_pareto(pts)}


def test_select_memory_base_direct_child_path_length_one(synth_space):
    params = default_params(2)
    base = Configuration("algoB", {"x1": 0.1, "x2": 0.2})
    episodes = [episode("algoB", 0.5, node_id=4)]
    mem = select_memory(episodes, base, params, synth_space, path_node_ids=[4])
    assert len(mem.local_entries) == 1
    assert len(mem.global_entries) == 1   # singleton is non-dominated


def test_select_memory_caps_global_entries(synth_space):
    params = default_params(2)
    base = Configuration("algoB", {"x1": 0.5, "x2": 0.5})
    # identical child_y, increasing distance: all mutually non-dominated
    episodes = [Episode(None, None, Configuration("algoB", {"x1": i / 40, "x2": 0.5}),
                        0.9 - i * 0.01, "", i, "bo_random") for i in range(15)]
    mem = select_memory(episodes, base, params, synth_space, path_node_ids=[])
    assert len(mem.global_entries) == 10
    # capped by descending similarity: nearest x1 to 0.5 first
    sims = [abs(e.child_config.values["x1"] - 0.5) for e in mem.global_entries]
    assert sims == sorted(sims)


# -- directives ---------------------------------------------------------------------

def test_choose_directive_warmup():
    node = TreeNode(1, "algo", algorithm_id="a", warmup_count=1)
    assert choose_directive(node, 3) is Directive.WARMUP


def test_choose_directive_exploration_first():
    node = TreeNode(2, "hp", algorithm_id="a")
    assert choose_directive(node) is Directive.EXPLORATION


def test_choose_directive_exploitation_second():
    node = TreeNode(2, "hp", algorithm_id="a", directives_done={"exploration"})
    assert choose_directive(node) is Directive.EXPLOITATION


def test_choose_directive_fully_expanded():
    node = TreeNode(2, "hp", algorithm_id="a",
                    directives_done={"exploration", "exploitation"})
    with pytest.raises(FullyExpanded):
        choose_directive(node)


# -- tuning prompt ---------------------------------------------------------------------

SECTION_HEADERS = ["Task Description", "Dataset Context", "Selective Tuning Memory",
                   "Required Output Format"]


def test_tuning_prompt_sections_and_exploration_wording(ctx, tiny_space):
    base = Configuration("alpha", {"lr": 0.045, "depth": 5, "units": 0.3, "kind": "SAMME"})
    mem = Memory((), (episode("alpha", 0.5, 3),))
    msgs = build_tuning_prompt(ctx, tiny_space, "alpha", mem, base, Directive.EXPLORATION)
    assert msgs[0].role == "system" and "Hyperparameter Tuner" in msgs[0].content
    user = msgs[1].content
    for header in SECTION_HEADERS:
        assert f"{header}:" in user
    assert "explore new areas" in user
    assert "bold adjustments" in user
    assert "'alpha' has been selected" in user


def test_tuning_prompt_exploitation_wording(ctx, tiny_space):
    base = Configuration("alpha", {"lr": 0.045, "depth": 5, "units": 0.3, "kind": "SAMME"})
    msgs = build_tuning_prompt(ctx, tiny_space, "alpha", None, base, Directive.EXPLOITATION)
    assert "minor, incremental adjustments" in msgs[1].content


def test_warmup_prompt_has_no_base_and_no_memory(ctx, tiny_space):
    msgs = build_tuning_prompt(ctx, tiny_space, "alpha", None, None, Directive.WARMUP)
    user = msgs[1].content
    assert "Basic Configuration to Build Upon" not in user
    assert "proposed by" not in user          # no rendered memory entries
    assert '"performance"' not in user
    assert "No prior trials" in user
    for header in SECTION_HEADERS:
        assert f"{header}:" in user
    assert "from scratch" in user


def test_warmup_requires_no_base(ctx, tiny_space):
    base = Configuration("alpha", {"lr": 0.045, "depth": 5, "units": 0.3, "kind": "SAMME"})
    with pytest.raises(ValueError):
        build_tuning_prompt(ctx, tiny_space, "alpha", None, base, Directive.WARMUP)
    with pytest.raises(ValueError):
        build_tuning_prompt(ctx, tiny_space, "alpha", None, None, Directive.EXPLORATION)


def test_prompt_renders_all_memory_entries(ctx, tiny_space):
    base = Configuration("alpha", {"lr": 0.045, "depth": 5, "units": 0.3, "kind": "SAMME"})
    globals_ = tuple(episode("alpha", 0.5 + i / 10, i, action="bo_local") for i in range(2))
    locals_ = tuple(episode("alpha", 0.4 + i / 10, 20 + i) for i in range(3))
    import re

    msgs = build_tuning_prompt(ctx, tiny_space, "alpha", Memory(globals_, locals_),
                               base, Directive.EXPLOITATION)
    user = msgs[1].content
    assert len(re.findall(r"Historical Trial [A-Z] \(proposed by", user)) == 2
    assert "proposed by BO local search" in user
    trajectory = user.split("Optimization Trajectory Context:")[1] \
                     .split("Informative Historical Trials:")[0]
    assert trajectory.count('"performance"') == 3
    assert "Current Basic Node" in trajectory


def test_prompt_search_space_lines(ctx, tiny_space):
    msgs = build_tuning_prompt(ctx, tiny_space, "alpha", None, None, Directive.WARMUP)
    user = msgs[1].content
    assert "- lr: Float, Range=[0.01, 2] (Log-Scale)" in user
    assert "- depth: Integer, Range=[2, 8]" in user
    assert "- kind: Categorical, {SAMME.R, SAMME}" in user


# -- response parsing ---------------------------------------------------------------------

def test_parse_action_block(tiny_space):
    text = ('Thought: lowering the rate stabilizes boosting.\n\n'
            'Action:\n{"lr": 0.038, "depth": 5, "units": 0.25, "kind": "SAMME"}')
    proposal = parse_tuning_response(text, tiny_space, "alpha")
    assert proposal.config.values["lr"] == pytest.approx(0.038)
    assert proposal.config.values["depth"] == 5
    assert "stabilizes boosting" in proposal.thought


def test_parse_clips_out_of_range(tiny_space):
    text = 'Action: {"lr": 5.0, "depth": 99, "units": -3, "kind": "SAMME"}'
    cfg = parse_tuning_response(text, tiny_space, "alpha").config
    assert cfg.values["lr"] == pytest.approx(2.0)
    assert cfg.values["depth"] == 8
    assert cfg.values["units"] == 0.0


def test_parse_prose_only_fails(tiny_space):
    with pytest.raises(ParseFailure):
        parse_tuning_response("I would pick a smaller learning rate.", tiny_space, "alpha")


def test_parse_missing_parameter_fails(tiny_space):
    with pytest.raises(ParseFailure):
        parse_tuning_response('Action: {"lr": 0.1, "depth": 4}', tiny_space, "alpha")


def test_parse_unknown_categorical_fails(tiny_space):
    with pytest.raises(ParseFailure):
        parse_tuning_response(
            'Action: {"lr": 0.1, "depth": 4, "units": 0.5, "kind": "SAMMER"}',
            tiny_space, "alpha")


def test_parse_drops_unknown_keys_and_uses_last_object(tiny_space):
    text = ('Thought: first draft {"lr": 1.9, "depth": 2, "units": 1.0, "kind": "SAMME"}\n'
            'Action: {"lr": 0.1, "depth": 4, "units": 0.5, "kind": "SAMME.R", "bogus": 1}')
    cfg = parse_tuning_response(text, tiny_space, "alpha").config
    assert cfg.values["lr"] == pytest.approx(0.1)
    assert "bogus" not in cfg.values


def test_parse_roundtrips_rendered_config(tiny_space, rng):
    for _ in range(50):
        cfg = sample_random(tiny_space, "alpha", rng)
        text = f"Thought: echo.\n\nAction:\n{json.dumps(dict(cfg.values))}\n"
        back = parse_tuning_response(text, tiny_space, "alpha").config
        assert back.values == cfg.values


# -- reflection ---------------------------------------------------------------------------

def test_reflection_prompt_percent_and_rank(ctx, tiny_space):
    base_cfg = Configuration("alpha", {"lr": 0.045, "depth": 5, "units": 0.3, "kind": "SAMME"})
    new_cfg = Configuration("alpha", {"lr": 0.038, "depth": 5, "units": 0.3, "kind": "SAMME"})
    msgs = build_reflection_prompt(ctx, None, (base_cfg, 0.5747), (new_cfg, 0.5924),
                                   rank=(1, 219))
    assert msgs[0].role == "system" and "Performance Analyst" in msgs[0].content
    user = msgs[1].content
    assert "+3.08%" in user or "+3.09%" in user
    assert "1 out of 219" in user
    assert "Reflect on Trial Performance" in user


def test_percent_change_formatting():
    assert format_percent_change(0.57471745, 0.59244859) == "+3.09%"
    assert format_percent_change(0.5, 0.5) == "0.00%"
    assert format_percent_change(0.5, 0.45) == "-10.00%"
    assert format_percent_change(0.0, 0.3) == "n/a"


def test_reflection_prompt_initialization_phrasing(ctx, tiny_space):
    new_cfg = Configuration("alpha", {"lr": 0.1, "depth": 3, "units": 0.5, "kind": "SAMME"})
    msgs = build_reflection_prompt(ctx, None, None, (new_cfg, 0.81), rank=(1, 1))
    user = msgs[1].content
    assert "initial configuration" in user
    assert "Basic Performance" not in user


def test_parse_reflection_two_sections():
    text = ("Reflection:\nThe drop came from the higher rate.\n\n"
            "Reflection Summary:\nKeep the rate near 0.04 when scaling estimators.")
    reflection, summary = parse_reflection_response(text)
    assert "higher rate" in reflection
    assert summary.startswith("Keep the rate")


def test_parse_reflection_without_marker():
    reflection, summary = parse_reflection_response("just one blob of text")
    assert reflection == ""
    assert summary == "just one blob of text"


def test_parse_reflection_empty():
    assert parse_reflection_response("") == ("", "")


# -- BO summaries ----------------------------------------------------------------------------

def test_bo_summary_increase_pattern():
    parent = (Configuration("a", {"depth": 4, "lr": 0.1}), 0.575)
    child = (Configuration("a", {"depth": 6, "lr": 0.1}), 0.575 * 1.012)
    text = synthesize_bo_summary(parent, child, metric_name="accuracy")
    assert "Increasing depth from 4 to 6" in text
    assert "improved accuracy by 1.20%" in text


def test_bo_summary_no_changes():
    parent = (Configuration("a", {"depth": 4}), 0.5)
    child = (Configuration("a", {"depth": 4}), 0.52)
    text = synthesize_bo_summary(parent, child)
    assert text.startswith("No parameter changes")
    assert "+0.02" in text


def test_bo_summary_initialization():
    text = synthesize_bo_summary(None, (Configuration("a", {"depth": 4}), 0.8123),
                                 metric_name="accuracy")
    assert text.startswith("Initial configuration achieved accuracy=0.8123")


def test_bo_summary_categorical_and_decrease():
    parent = (Configuration("a", {"kind": "x", "lr": 0.2}), 0.6)
    child = (Configuration("a", {"kind": "y", "lr": 0.1}), 0.55)
    text = synthesize_bo_summary(parent, child)
    assert "changing kind from x to y" in text.lower()
    assert "decreasing lr from 0.2 to 0.1" in text.lower()
    assert "reduced performance" in text
