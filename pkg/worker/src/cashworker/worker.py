"""NDJSON protocol loop.

stdin:  {"hello": {"space_digest": hex}}          -> {"ready": true, "info": {...}}
        {"id": n, "algorithm": a, "params": {..}} -> {"id": n, "ok": true, "y": f,
                                                      "aux": {..}}
                                                   | {"id": n, "ok": false, "error": s}

One request is outstanding at a time; ids must strictly increase. Scores
follow the maximize convention: balanced accuracy for classification,
negated mean squared error for regression. Protocol violations terminate
the process with a nonzero exit code.
"""

from __future__ import annotations

import hashlib
import json
import sys
import warnings

import numpy as np
from sklearn.metrics import balanced_accuracy_score, mean_squared_error

from .data import load_dataset, split_60_20_20
from .models import build_model

warnings.filterwarnings("ignore")   # convergence chatter must not reach the engine


class ProtocolViolation(Exception):
    pass


def canonical_space_digest(space_doc: dict) -> str:
    """Mirror of the engine's canonical space hash (docs/protocol.md)."""
    algos = []
    for algo in space_doc["algorithms"]:
        entries = []
        for p in algo["params"]:
            if p["type"] == "cat":
                entries.append({"name": p["name"], "type": "cat",
                                "choices": list(p["choices"])})
            else:
                entries.append({"name": p["name"], "type": p["type"],
                                "low": p["low"], "high": p["high"],
                                "log": bool(p.get("log", False))})
        algos.append({"name": algo["name"], "params": entries})
    payload = json.dumps({"task": space_doc["task"], "metric": space_doc["metric"],
                          "algorithms": algos}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Worker:
    def __init__(self, dataset: str, space_path: str, seed: int,
                 target_column: str | None = None, send_proba: bool = True):
        with open(space_path, encoding="utf-8") as fh:
            self.space_doc = json.load(fh)
        self.classification = self.space_doc["task"] == "classification"
        self.known = {a["name"] for a in self.space_doc["algorithms"]}
        self.seed = seed
        self.send_proba = send_proba
        X, y = load_dataset(dataset, target_column)
        (self.X_train, self.y_train), (self.X_val, self.y_val), _ = \
            split_60_20_20(X, y, seed, self.classification)

    # -- scoring ---------------------------------------------------------

    def evaluate(self, algorithm: str, params: dict) -> dict:
        if algorithm not in self.known:
            return {"ok": False, "error": f"unknown algorithm {algorithm!r}"}
        try:
            model = build_model(algorithm, params, self.seed, self.classification)
            model.fit(self.X_train, self.y_train)
            if self.classification:
                pred = model.predict(self.X_val)
                y = float(balanced_accuracy_score(self.y_val, pred))
            else:
                pred = model.predict(self.X_val)
                y = -float(mean_squared_error(self.y_val, pred))
        except KeyError as exc:
            return {"ok": False, "error": f"unknown algorithm {exc}"}
        except Exception as exc:   # training failures become reported errors
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        out = {"ok": True, "y": y}
        if self.send_proba:
            aux = {}
            if self.classification and hasattr(model, "predict_proba"):
                aux["proba"] = np.asarray(model.predict_proba(self.X_val)).tolist()
            elif not self.classification:
                aux["pred"] = np.asarray(pred).tolist()
            if aux:
                out["aux"] = aux
        return out

    def info(self) -> dict:
        return {
            "task": self.space_doc["task"],
            "n_samples": int(self.X_train.shape[0] + self.X_val.shape[0]),
            "n_features": int(self.X_train.shape[1]),
            "val_targets": np.asarray(self.y_val).tolist(),
        }

    # -- protocol ----------------------------------------------------------

    def serve(self, stdin=None, stdout=None) -> None:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout

        def send(obj):
            stdout.write(json.dumps(obj) + "\n")
            stdout.flush()

        line = stdin.readline()
        if not line:
            raise ProtocolViolation("no handshake")
        try:
            hello = json.loads(line)
            digest = hello["hello"]["space_digest"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ProtocolViolation(f"bad handshake: {exc}") from None
        ours = canonical_space_digest(self.space_doc)
        if digest != ours:
            send({"ready": False, "error": "space digest mismatch"})
            raise ProtocolViolation("space digest mismatch")
        send({"ready": True, "info": self.info()})

        last_id = -1
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line)
                rid = request["id"]
                algorithm = request["algorithm"]
                params = request["params"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ProtocolViolation(f"bad request: {exc}") from None
            if not isinstance(rid, int) or rid <= last_id:
                raise ProtocolViolation(f"ids must strictly increase, got {rid!r}")
            last_id = rid
            reply = self.evaluate(algorithm, params)
            reply["id"] = rid
            send(reply)
