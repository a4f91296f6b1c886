import os

# single-threaded BLAS: the matrices here are small, and the acceptance
# batches fork two worker processes of their own (must precede numpy import)
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from cashtree.objective import synth_cash
from cashtree.space import Configuration, ParamSpec, SearchSpace


@pytest.fixture(scope="session")
def synth_space():
    return synth_cash("synth3")[0]


@pytest.fixture(scope="session")
def synth_evaluator():
    return synth_cash("synth3")[1]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_space():
    """One algorithm, mixed parameter kinds."""
    return SearchSpace(
        algorithms=(
            ("alpha", (
                ParamSpec("lr", "float", low=1e-2, high=2.0, log=True),
                ParamSpec("depth", "int", low=2, high=8),
                ParamSpec("units", "float", low=0.0, high=1.0),
                ParamSpec("kind", "cat", choices=("SAMME.R", "SAMME")),
            )),
        ),
        task="classification",
        metric="balanced_accuracy",
    )


def config_close(a: Configuration, b: Configuration, rel=1e-9) -> bool:
    if a.algorithm_id != b.algorithm_id or set(a.values) != set(b.values):
        return False
    for k, va in a.values.items():
        vb = b.values[k]
        if isinstance(va, str) or isinstance(vb, str):
            if va != vb:
                return False
        elif not np.isclose(float(va), float(vb), rtol=rel, atol=1e-12):
            return False
    return True
