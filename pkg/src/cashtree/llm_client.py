"""Chat-completion clients: an OpenAI-compatible HTTP client and a
deterministic mock for offline runs and tests.

The mock reads the rendered prompt text itself (search-space bullets, the
basic configuration, the strategic goal) and answers with a parseable
Thought/Action response: the base configuration (or the space midpoint on
warmup) with one seeded numeric dimension nudged by 0.15 (warmup and
exploitation) or 0.45 (exploration) on the unit axis.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import AuthError, LlmTimeout, LlmUnavailable, MalformedPrompt
from .space import CAT, FLOAT, INT, ParamSpec

SHIFT_SMALL = 0.15   # warmup jitter and exploitation refinement
SHIFT_BOLD = 0.45    # exploration


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError("system/user content must be non-empty")


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    temperature_tuning: float = 0.7
    temperature_reflection: float = 0.2
    timeout: float = 60.0
    max_retries: int = 3
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class HttpLlmClient:
    """Blocking client for any /chat/completions-compatible endpoint.

    Retries transport failures, 429 and 5xx with exponential backoff
    (base 1 s, doubling, plus jitter). The api key is read from the
    configured environment variable and never logged.
    """

    def __init__(self, config: LlmConfig | None = None, session=None, sleep=time.sleep):
        self.config = config or LlmConfig()
        self._session = session or requests.Session()
        self._sleep = sleep
        self._jitter = random.Random(0)

    def chat(self, messages, kind: str) -> str:
        cfg = self.config
        temperature = cfg.temperature_tuning if kind == "tuning" else cfg.temperature_reflection
        body = {
            "model": cfg.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = cfg.endpoint.rstrip("/") + "/chat/completions"

        last_error: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = self._session.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except requests.Timeout as exc:
                last_error = LlmTimeout(str(exc))
            except requests.RequestException as exc:
                last_error = LlmUnavailable(str(exc))
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = LlmUnavailable(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise LlmUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError, ValueError) as exc:
                        raise LlmUnavailable(f"malformed completion payload: {exc}") from None
            if attempt < cfg.max_retries:
                self._sleep(2.0 ** attempt + self._jitter.uniform(0.0, 0.25))
        if isinstance(last_error, LlmTimeout):
            raise last_error
        raise LlmUnavailable(f"retries exhausted: {last_error}")


# -- deterministic mock --------------------------------------------------------

_PARAM_LINE = re.compile(
    r"^- ([A-Za-z0-9_.\-]+): (Float|Integer|Categorical), (.+?)\s*$", re.MULTILINE
)
_RANGE = re.compile(r"Range=\[\s*([^,\]]+)\s*,\s*([^\]]+?)\s*\](\s*\(Log-Scale\))?")
_GOAL = re.compile(r"Your current strategic goal is (Warmup|Exploration|Exploitation)")


def _parse_space_block(text: str) -> list[ParamSpec]:
    params = []
    for name, label, rest in _PARAM_LINE.findall(text):
        if label == "Categorical":
            m = re.search(r"\{(.+)\}", rest)
            if not m:
                continue
            params.append(ParamSpec(name, CAT, choices=tuple(c.strip() for c in m.group(1).split(","))))
        else:
            m = _RANGE.search(rest)
            if not m:
                continue
            params.append(ParamSpec(name, INT if label == "Integer" else FLOAT,
                                    low=float(m.group(1)), high=float(m.group(2)),
                                    log=bool(m.group(3))))
    return params


def _seed_from(messages, seed: int) -> int:
    digest = hashlib.sha256()
    digest.update(str(seed).encode())
    for m in messages:
        digest.update(m.role.encode())
        digest.update(m.content.encode())
    return int.from_bytes(digest.digest()[:8], "big")


def mock_respond(messages, seed: int) -> str:
    """Deterministic reply to a prompt rendered by the proposer templates."""
    user = next((m.content for m in messages if m.role == "user"), "")
    if "Reflect on Trial Performance" in user:
        return _mock_reflection(user, seed=_seed_from(messages, seed))
    if "propose a hyperparameter configuration" in user:
        return _mock_tuning(user, seed=_seed_from(messages, seed))
    raise MalformedPrompt("prompt is neither a tuning nor a reflection request")


def _mock_tuning(user: str, seed: int) -> str:
    params = _parse_space_block(user)
    goal = _GOAL.search(user)
    if not params or not goal:
        raise MalformedPrompt("missing search-space block or strategic goal")
    mode = goal.group(1).lower()
    rng = np.random.default_rng(seed)

    if mode == "warmup":
        base = {}
        for p in params:
            base[p.name] = p.choices[len(p.choices) // 2] if p.kind == CAT else p.from_unit(0.5)
    else:
        marker = "promising starting point:"
        at = user.find(marker)
        if at < 0:
            raise MalformedPrompt("missing basic configuration")
        json_line = user[at + len(marker):].strip().splitlines()[0]
        try:
            base = json.loads(json_line)
        except json.JSONDecodeError as exc:
            raise MalformedPrompt(f"unparseable basic configuration: {exc}") from None

    values = dict(base)
    numeric = [p for p in params if p.kind != CAT]
    magnitude = SHIFT_BOLD if mode == "exploration" else SHIFT_SMALL
    if numeric:
        p = numeric[int(rng.integers(len(numeric)))]
        u = p.to_unit(float(values[p.name]))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        shifted = u + sign * magnitude
        if not 0.0 <= shifted <= 1.0:
            shifted = u - sign * magnitude
        values[p.name] = p.from_unit(shifted)
    else:
        p = params[int(rng.integers(len(params)))]
        values[p.name] = p.choices[int(rng.integers(len(p.choices)))]

    thought = (f"Directive is {mode}: adjusting '{p.name}' relative to the basic "
               f"configuration while keeping every value inside the declared ranges.")
    return f"Thought: {thought}\n\nAction:\n{json.dumps(values)}\n"


def _mock_reflection(user: str, seed: int) -> str:
    rng = np.random.default_rng(seed)
    perf = re.search(r"Resulting Performance: ([-\deE.+]+)", user)
    rank = re.search(r"Global Ranking: (\d+) out of (\d+)", user)
    perf_s = perf.group(1) if perf else "unknown"
    rank_s = f"{rank.group(1)} of {rank.group(2)}" if rank else "unknown"
    tone = ["stable", "promising", "sensitive", "noisy"][int(rng.integers(4))]
    return (
        "Reflection:\n"
        f"1. Triage & Compare: the trial reached {perf_s}, ranking {rank_s} among this "
        "algorithm's trials.\n"
        "2. Attribute & Synthesize: the single adjusted parameter explains the delta; "
        f"the surrounding region looks {tone}.\n\n"
        "Reflection Summary:\n"
        f"Trial scored {perf_s} (rank {rank_s}); the adjusted region appears {tone}, "
        "and comparable settings should behave consistently.\n"
    )


class MockLlmClient:
    """Offline stand-in; a pure function of (seed, messages)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls: list[str] = []

    def chat(self, messages, kind: str) -> str:
        self.calls.append(kind)
        return mock_respond(messages, self.seed)
