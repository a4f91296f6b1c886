"""Black-box evaluation contract: synthetic benchmarks and the external
worker protocol.

Evaluators always maximize; loss-style metrics are negated on the evaluator
side. External evaluators are child processes speaking newline-delimited
JSON on stdin/stdout: a handshake pinning the search-space digest, then one
request/response pair at a time with strictly increasing ids.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass

from .errors import EvalCrash, EvalTimeout, ProtocolError
from .space import (
    Configuration,
    ParamSpec,
    SearchSpace,
    space_digest,
    validate,
)

DEFAULT_EVAL_TIMEOUT = 300.0


@dataclass(frozen=True)
class EvalResult:
    y: float
    wall_time: float = 0.0
    aux: dict | None = None


class SynthCashEvaluator:
    """Closed-form three-algorithm benchmark; the optimum is algoA at y = 1."""

    def __init__(self, space: SearchSpace):
        self.space = space

    def evaluate(self, config: Configuration) -> EvalResult:
        validate(config, self.space)
        v = config.values
        if config.algorithm_id == "algoA":
            y = 1.0 - ((v["x1"] - 0.7) ** 2 + (v["x2"] - 0.3) ** 2 + (v["x3"] - 0.5) ** 2) / 3.0
            y -= 0.1 if v["mode"] != "opt" else 0.0
        elif config.algorithm_id == "algoB":
            y = 0.8 - ((v["x1"] - 0.2) ** 2 + (v["x2"] - 0.9) ** 2) / 2.0
        else:
            y = 0.6 - (v["x1"] - 0.5) ** 2 - (0.05 if v["mode"] != "a" else 0.0)
        return EvalResult(y=y)


def synth_cash(space_id: str = "synth3") -> tuple[SearchSpace, SynthCashEvaluator]:
    """Desk-scale CASH benchmark with a known global optimum."""
    if space_id != "synth3":
        raise ValueError(f"unknown synthetic space {space_id!r}")
    unit = dict(low=0.0, high=1.0)
    space = SearchSpace(
        algorithms=(
            ("algoA", (ParamSpec("x1", "float", **unit), ParamSpec("x2", "float", **unit),
                       ParamSpec("x3", "float", **unit),
                       ParamSpec("mode", "cat", choices=("opt", "other1", "other2")))),
            ("algoB", (ParamSpec("x1", "float", **unit), ParamSpec("x2", "float", **unit))),
            ("algoC", (ParamSpec("x1", "float", **unit),
                       ParamSpec("mode", "cat", choices=("a", "b")))),
        ),
        task="classification",
        metric="score",
    )
    return space, SynthCashEvaluator(space)


class _Reader(threading.Thread):
    """Pumps worker stdout lines into a queue so reads can time out."""

    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.lines: queue.Queue = queue.Queue()
        self.start()

    def run(self):
        for line in self.stream:
            self.lines.put(line)
        self.lines.put(None)   # EOF sentinel


class ExternalEvaluator:
    """Manages an external worker child process over the NDJSON protocol.

    A crashed worker is restarted once per evaluation; the failed evaluation
    itself is reported as an error, never as a score.
    """

    def __init__(self, command: str | list, space: SearchSpace,
                 timeout: float = DEFAULT_EVAL_TIMEOUT):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.space = space
        self.timeout = timeout
        self.next_id = 0
        self.worker_info: dict = {}
        self._proc: subprocess.Popen | None = None
        self._reader: _Reader | None = None

    # -- process management ----------------------------------------------

    def _ensure_started(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1,
        )
        self._reader = _Reader(self._proc.stdout)
        self._send({"hello": {"space_digest": space_digest(self.space)}})
        reply = self._recv(self.timeout)
        if reply.get("ready") is not True:
            self.close()
            raise ProtocolError(f"worker refused handshake: {reply}")
        self.worker_info = reply.get("info", {}) or {}

    def _send(self, obj: dict):
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EvalCrash(f"worker pipe closed: {exc}") from None

    def _recv(self, timeout: float) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise EvalTimeout(f"no worker reply within {timeout}s")
            try:
                line = self._reader.lines.get(timeout=remaining)
            except queue.Empty:
                raise EvalTimeout(f"no worker reply within {timeout}s") from None
            if line is None:
                raise EvalCrash("worker closed its stdout")
            line = line.strip()
            if not line:
                continue
            try:
                return json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"undecodable worker line: {exc}") from None

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- evaluation --------------------------------------------------------

    def evaluate(self, config: Configuration) -> EvalResult:
        validate(config, self.space)
        try:
            self._ensure_started()
        except (EvalCrash, EvalTimeout):
            raise
        request_id = self.next_id
        self.next_id += 1
        request = {"id": request_id, "algorithm": config.algorithm_id,
                   "params": dict(config.values)}
        started = time.monotonic()
        try:
            self._send(request)
            reply = self._recv(self.timeout)
        except EvalTimeout:
            self.close()   # a wedged worker cannot be reused
            raise
        except EvalCrash:
            self.close()
            raise
        wall = time.monotonic() - started
        if reply.get("id") != request_id:
            self.close()
            raise ProtocolError(f"response id {reply.get('id')} != request id {request_id}")
        if reply.get("ok") is True:
            y = reply.get("y")
            if not isinstance(y, (int, float)) or not math.isfinite(float(y)):
                raise ProtocolError(f"non-finite or missing y in {reply}")
            return EvalResult(y=float(y), wall_time=wall, aux=reply.get("aux"))
        if reply.get("ok") is False:
            raise EvalCrash(str(reply.get("error", "worker reported failure")))
        raise ProtocolError(f"response missing 'ok': {reply}")
