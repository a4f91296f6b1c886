import json
import subprocess
import sys

import pytest

from cashworker.worker import Worker, canonical_space_digest

SPACE_DOC = {
    "task": "classification",
    "metric": "balanced_accuracy",
    "algorithms": [
        {"name": "adaboost", "params": [
            {"name": "algorithm", "type": "cat", "choices": ["SAMME.R", "SAMME"]},
            {"name": "learning_rate", "type": "float", "low": 0.01, "high": 2.0, "log": True},
            {"name": "max_depth", "type": "int", "low": 2, "high": 8},
            {"name": "n_estimators", "type": "int", "low": 10, "high": 60}]},
        {"name": "logistic_regression", "params": [
            {"name": "penalty", "type": "cat", "choices": ["l2", "l1"]},
            {"name": "solver", "type": "cat", "choices": ["liblinear", "saga"]},
            {"name": "C", "type": "float", "low": 0.0001, "high": 10000.0, "log": True},
            {"name": "max_iter", "type": "int", "low": 50, "high": 400}]},
    ],
}

ADA_PARAMS = {"algorithm": "SAMME", "learning_rate": 0.5, "max_depth": 3,
              "n_estimators": 25}
LR_PARAMS = {"penalty": "l2", "solver": "liblinear", "C": 1.0, "max_iter": 200}


@pytest.fixture(scope="module")
def space_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("space") / "space.json"
    path.write_text(json.dumps(SPACE_DOC))
    return str(path)


@pytest.fixture(scope="module")
def worker(space_file):
    return Worker("sklearn:wine", space_file, seed=0)


def test_evaluate_supported_algorithm(worker):
    reply = worker.evaluate("adaboost", ADA_PARAMS)
    assert reply["ok"] is True
    assert 0.0 <= reply["y"] <= 1.0
    assert len(reply["aux"]["proba"]) == len(worker.y_val)


def test_unknown_algorithm(worker):
    reply = worker.evaluate("quantum_forest", ADA_PARAMS)
    assert reply["ok"] is False
    assert "unknown algorithm" in reply["error"]


def test_seeded_determinism(worker):
    a = worker.evaluate("logistic_regression", LR_PARAMS)
    b = worker.evaluate("logistic_regression", LR_PARAMS)
    assert a["y"] == b["y"]


def test_training_failure_reported_not_raised(space_file):
    worker = Worker("sklearn:wine", space_file, seed=0)
    bad = dict(LR_PARAMS, solver="liblinear", penalty="l1", C=-1.0)   # invalid C
    reply = worker.evaluate("logistic_regression", bad)
    assert reply["ok"] is False and reply["error"]


def test_info_exposes_split(worker):
    info = worker.info()
    assert info["task"] == "classification"
    # 60/20/20 split of wine (178 rows): validation carries ~20%
    assert abs(len(info["val_targets"]) - 0.2 * 178) <= 2


# -- end-to-end over pipes ----------------------------------------------------------

def spawn(space_file, seed=0):
    return subprocess.Popen(
        [sys.executable, "-m", "cashworker", "--dataset", "sklearn:wine",
         "--space", space_file, "--seed", str(seed)],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1)


def test_protocol_roundtrip(space_file):
    proc = spawn(space_file)
    try:
        digest = canonical_space_digest(SPACE_DOC)
        proc.stdin.write(json.dumps({"hello": {"space_digest": digest}}) + "\n")
        proc.stdin.flush()
        ready = json.loads(proc.stdout.readline())
        assert ready["ready"] is True
        assert ready["info"]["n_features"] == 13

        for rid, (algo, params) in enumerate([("adaboost", ADA_PARAMS),
                                              ("logistic_regression", LR_PARAMS)]):
            proc.stdin.write(json.dumps(
                {"id": rid, "algorithm": algo, "params": params}) + "\n")
            proc.stdin.flush()
            reply = json.loads(proc.stdout.readline())
            assert reply["id"] == rid            # exactly one response per request
            assert reply["ok"] is True
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
    assert proc.returncode == 0


def test_digest_mismatch_refused(space_file):
    proc = spawn(space_file)
    try:
        proc.stdin.write(json.dumps({"hello": {"space_digest": "f00d"}}) + "\n")
        proc.stdin.flush()
        ready = json.loads(proc.stdout.readline())
        assert ready["ready"] is False
    finally:
        proc.stdin.close()
        proc.wait(timeout=10)
    assert proc.returncode != 0


def test_nonmonotone_ids_terminate(space_file):
    proc = spawn(space_file)
    try:
        digest = canonical_space_digest(SPACE_DOC)
        proc.stdin.write(json.dumps({"hello": {"space_digest": digest}}) + "\n")
        proc.stdin.write(json.dumps({"id": 5, "algorithm": "adaboost",
                                     "params": ADA_PARAMS}) + "\n")
        proc.stdin.write(json.dumps({"id": 4, "algorithm": "adaboost",
                                     "params": ADA_PARAMS}) + "\n")
        proc.stdin.flush()
        proc.stdout.readline()
        proc.stdout.readline()
        proc.stdin.close()
        proc.wait(timeout=30)
    finally:
        if proc.poll() is None:
            proc.kill()
    assert proc.returncode != 0


def test_regression_space_negates_mse(tmp_path):
    doc = {"task": "regression", "metric": "neg_mean_squared_error",
           "algorithms": [{"name": "ridge", "params": [
               {"name": "fit_intercept", "type": "cat", "choices": ["true", "false"]},
               {"name": "alpha", "type": "float", "low": 0.0001, "high": 100.0, "log": True},
               {"name": "max_iter", "type": "int", "low": 100, "high": 2000},
               {"name": "tol", "type": "float", "low": 1e-05, "high": 0.1, "log": True}]}]}
    path = tmp_path / "reg.json"
    path.write_text(json.dumps(doc))
    worker = Worker("sklearn:diabetes", str(path), seed=0)
    reply = worker.evaluate("ridge", {"fit_intercept": "true", "alpha": 1.0,
                                      "max_iter": 500, "tol": 1e-3})
    assert reply["ok"] is True
    assert reply["y"] < 0                      # negated MSE
    assert "pred" in reply["aux"]
