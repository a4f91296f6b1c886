"""Command-line front end: run optimizations and report on finished runs.

    cashtree run --space synth3 --llm mock --budget 200 --seed 0 --out runs/a
    cashtree run --space spaces/clf8.json --objective external:"python -m cashworker ..." --llm mock
    cashtree report runs/a runs/b

Exit codes: 0 ok, 1 configuration error, 2 evaluator failure, 3 hard LLM
failure in llm-only mode.
"""

from __future__ import annotations

import argparse
import json
import math
import signal
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .engine import RunConfig, ensemble_select, run
from .errors import CashTreeError, EvalError, LlmError
from .llm_client import HttpLlmClient, LlmConfig, MockLlmClient
from .metrics import algorithm_diversity
from .objective import ExternalEvaluator, synth_cash
from .proposer_llm import TaskContext
from .space import Configuration, load_space, parse_space

BUILTIN_SPACES = ("clf8", "reg8")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cashtree")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="execute one optimization run")
    p_run.add_argument("--space", help="synth3, clf8, reg8, or a space JSON path")
    p_run.add_argument("--objective", help='synth3 or external:"<worker command>"')
    p_run.add_argument("--llm", choices=("mock", "http"), default="mock")
    p_run.add_argument("--model", default="gpt-4o-mini")
    p_run.add_argument("--endpoint", default="https://api.openai.com/v1")
    p_run.add_argument("--api-key-env", default="OPENAI_API_KEY")
    p_run.add_argument("--budget", type=int, default=300)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--mode", default="hybrid",
                       help="hybrid | bo | llm | fixed:<p>")
    p_run.add_argument("--out", help="output directory for history/summary/tree")
    p_run.add_argument("--desc", default="", help="dataset description for prompts")
    p_run.add_argument("--eval-timeout", type=float, default=300.0)
    p_run.add_argument("--timing", action="store_true",
                       help="record wall-clock fields (breaks run-to-run byte identity)")

    p_rep = sub.add_parser("report", help="summarize one or more finished runs")
    p_rep.add_argument("runs", nargs="+", help="run directories or history.jsonl files")
    return parser


def _parse_mode(text: str) -> tuple[str, float]:
    mapping = {"hybrid": "hybrid", "bo": "bo_only", "llm": "llm_only"}
    if text in mapping:
        return mapping[text], 0.5
    if text.startswith("fixed:"):
        p = float(text.split(":", 1)[1])
        return "fixed", p
    raise ValueError(f"unknown mode {text!r}")


def _resolve_space(name: str):
    if name == "synth3":
        return synth_cash("synth3")[0]
    if name in BUILTIN_SPACES:
        text = resources.files("cashtree.spaces").joinpath(f"{name}.json").read_text("utf-8")
        return parse_space(text)
    return load_space(name)


def cmd_run(args) -> int:
    parser_usage = "usage: cashtree run --space <synth3|clf8|reg8|path> [options]"
    if not args.space:
        print(parser_usage, file=sys.stderr)
        print("error: --space is required", file=sys.stderr)
        return 1
    try:
        space = _resolve_space(args.space)
        mode, fixed_p = _parse_mode(args.mode)
        objective = args.objective or ("synth3" if args.space == "synth3" else None)
        if objective == "synth3":
            if args.space != "synth3":
                raise ValueError("the synth3 objective requires --space synth3")
            evaluator = synth_cash("synth3")[1]
        elif objective and objective.startswith("external:"):
            evaluator = ExternalEvaluator(objective[len("external:"):], space,
                                          timeout=args.eval_timeout)
        else:
            raise ValueError('need --objective synth3 or external:"<command>"')
        rc = RunConfig(budget=args.budget, seed=args.seed, mode=mode, fixed_p=fixed_p,
                       eval_timeout=args.eval_timeout, record_timing=args.timing)
        if args.llm == "mock":
            llm = MockLlmClient(seed=args.seed)
        else:
            llm = HttpLlmClient(LlmConfig(endpoint=args.endpoint, model=args.model,
                                          api_key_env=args.api_key_env))
        ctx = TaskContext(
            dataset_description=args.desc or f"Search space '{args.space}' with "
                                             f"{space.k} candidate algorithms.",
            metric_name=space.metric, task_kind=space.task)
    except (CashTreeError, ValueError, OSError) as exc:
        print(parser_usage, file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        result = run(space, evaluator, llm, rc, task_context=ctx, out_dir=args.out)
    except LlmError as exc:
        print(f"LLM failure: {exc}", file=sys.stderr)
        return 3
    except EvalError as exc:
        print(f"evaluator failure: {exc}", file=sys.stderr)
        return 2
    finally:
        if hasattr(evaluator, "close"):
            evaluator.close()

    print(f"best: {result.best_algorithm} y={result.best_y:.6g}")
    print(f"config: {json.dumps(dict(result.best_config.values))}")
    if args.out:
        print(f"artifacts: {Path(args.out) / 'history.jsonl'}, summary.json, tree.jsonl")
    return 0


# -- reporting -----------------------------------------------------------------

def _load_run(path_str: str):
    path = Path(path_str)
    history_path = path / "history.jsonl" if path.is_dir() else path
    rows = []
    with open(history_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    summary = None
    summary_path = history_path.parent / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text("utf-8"))
    return rows, summary


def _best_so_far(rows) -> list[float]:
    out, best = [], -math.inf
    for r in rows:
        best = max(best, r["y"])
        out.append(best)
    return out


def _print_table(header, rows):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    line = "  ".join(str(h).ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for r in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))


def cmd_report(args) -> int:
    try:
        runs = [_load_run(p) for p in args.runs]
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: unreadable history: {exc}", file=sys.stderr)
        return 1
    if any(not rows for rows, _ in runs):
        print("error: empty history", file=sys.stderr)
        return 1

    curves = [_best_so_far(rows) for rows, _ in runs]
    horizon = max(len(c) for c in curves)
    print(f"== best-so-far vs iteration ({len(runs)} run(s)) ==")
    step = max(1, horizon // 20)
    header = ["iter"] + [f"run{i}" for i in range(len(runs))]
    if len(runs) > 1:
        header.append("mean")
    body = []
    for it in list(range(0, horizon, step)) + [horizon - 1]:
        vals = [c[min(it, len(c) - 1)] for c in curves]
        row = [it] + [f"{v:.4f}" for v in vals]
        if len(runs) > 1:
            row.append(f"{np.mean(vals):.4f}")
        body.append(row)
    _print_table(header, body)

    print("\n== allocation ratio per algorithm ==")
    algo_ids = sorted({r["algorithm"] for rows, _ in runs for r in rows})
    body = []
    for i, (rows, _) in enumerate(runs):
        total = len(rows)
        counts = {aid: 0 for aid in algo_ids}
        for r in rows:
            counts[r["algorithm"]] += 1
        body.append([f"run{i}"] + [f"{counts[aid] / total:.3f}" for aid in algo_ids])
    _print_table(["run"] + algo_ids, body)

    print("\n== p_bo trajectories (change points) ==")
    for i, (rows, _) in enumerate(runs):
        for aid in algo_ids:
            changes, last = [], None
            for r in rows:
                if r["algorithm"] != aid:
                    continue
                if r["p_bo"] != last:
                    changes.append(f"@{r['iteration']}:{r['p_bo']:.3f}")
                    last = r["p_bo"]
            if changes:
                print(f"run{i} {aid}: " + " ".join(changes))

    print("\n== configuration diversity per algorithm ==")
    for i, (rows, summary) in enumerate(runs):
        if not summary or "space" not in summary:
            print(f"run{i}: (no summary.json with the space; skipped)")
            continue
        space = parse_space(json.dumps(summary["space"]))
        body = []
        for aid in algo_ids:
            configs = [Configuration(aid, r["config"]) for r in rows if r["algorithm"] == aid]
            if len(configs) >= 1 and aid in space.algorithm_ids:
                body.append([aid, len(configs),
                             f"{algorithm_diversity(configs, space, aid):.4f}"])
        print(f"run{i}:")
        _print_table(["algorithm", "trials", "diversity"], body)

    for i, (rows, summary) in enumerate(runs):
        probas = [(r["y"], r["aux"]["proba"]) for r in rows
                  if isinstance(r.get("aux"), dict) and "proba" in r["aux"]]
        targets = (summary or {}).get("worker_info", {}).get("val_targets")
        if not probas or targets is None:
            continue
        print(f"\n== ensemble selection (run{i}) ==")
        preds = np.array([p for _, p in probas])
        weights = ensemble_select(preds, np.array(targets))
        from .engine import _balanced_accuracy

        pooled = np.tensordot(weights, preds, axes=1)
        score = _balanced_accuracy(np.array(targets), pooled)
        best_single = max(
            _balanced_accuracy(np.array(targets), preds[j]) for j in range(len(preds)))
        print(f"validation score: ensemble {score:.4f} vs best single {best_single:.4f}")
        chosen = [(j, w) for j, w in enumerate(weights) if w > 0]
        print("weights: " + ", ".join(f"model{j}={w:.3f}" for j, w in chosen))
    return 0


def main(argv=None) -> int:
    # SIGTERM becomes SystemExit so open artifacts flush via finally blocks;
    # the previous disposition is restored for in-process callers
    previous = signal.getsignal(signal.SIGTERM)
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(130))
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "report":
            return cmd_report(args)
        parser.print_usage(sys.stderr)
        return 1
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
