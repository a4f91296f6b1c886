"""Hierarchical CASH search space: parsing, validation, encoding, sampling.

The space is a two-level hierarchy: a set of algorithms, each with a flat
list of typed hyperparameters. Numeric parameters (float and int) live on a
normalized [0, 1] axis (log-domain first when log-scaled); integers are
relaxed to that axis and rounded back at decode time. Categoricals are
encoded as choice indices.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    InvariantError,
    SchemaError,
    UnknownAlgorithm,
)

FLOAT = "float"
INT = "int"
CAT = "cat"

# local-perturbation law: Gaussian step in the unit encoding, seeded resample
# for categoricals (the fractions below are declared constants, see README)
PERTURB_SIGMA = 0.2
PERTURB_CAT_PROB = 0.2


@dataclass(frozen=True)
class ParamSpec:
    """One hyperparameter: a bounded numeric axis or a categorical choice set."""

    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    log: bool = False
    choices: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (FLOAT, INT, CAT):
            raise SchemaError(f"unknown parameter kind {self.kind!r}")
        if not self.name:
            raise SchemaError("parameter name must be non-empty")
        if self.kind == CAT:
            if len(self.choices) < 2 or len(set(self.choices)) != len(self.choices):
                raise InvariantError(f"{self.name}: need >= 2 distinct choices")
            if self.low is not None or self.high is not None:
                raise SchemaError(f"{self.name}: categorical takes no bounds")
        else:
            if self.low is None or self.high is None:
                raise SchemaError(f"{self.name}: numeric parameter needs low/high")
            if not (self.low < self.high):
                raise InvariantError(f"{self.name}: require low < high, got [{self.low}, {self.high}]")
            if self.log and self.low <= 0:
                raise InvariantError(f"{self.name}: log scale requires low > 0")
            if self.choices:
                raise SchemaError(f"{self.name}: numeric parameter takes no choices")

    @property
    def is_numeric(self) -> bool:
        return self.kind in (FLOAT, INT)

    def to_unit(self, value) -> float:
        """Map a value to the normalized [0, 1] axis (log-domain when log-scaled)."""
        v = float(value)
        if self.log:
            return (math.log(v) - math.log(self.low)) / (math.log(self.high) - math.log(self.low))
        return (v - self.low) / (self.high - self.low)

    def from_unit(self, u: float):
        """Inverse of to_unit; clips to [0, 1] and rounds integer parameters."""
        u = min(1.0, max(0.0, float(u)))
        if self.log:
            v = math.exp(math.log(self.low) + u * (math.log(self.high) - math.log(self.low)))
        else:
            v = self.low + u * (self.high - self.low)
        if self.kind == INT:
            return int(min(self.high, max(self.low, round(v))))
        return v

    def choice_index(self, value: str) -> int:
        try:
            return self.choices.index(value)
        except ValueError:
            raise InvariantError(f"{self.name}: {value!r} is not one of {self.choices}") from None

    def contains(self, value) -> bool:
        if self.kind == CAT:
            return value in self.choices
        try:
            v = float(value)
        except (TypeError, ValueError):
            return False
        return self.low - 1e-12 <= v <= self.high + 1e-12


@dataclass(frozen=True)
class SearchSpace:
    """K algorithms, each with its own flat hyperparameter subspace."""

    algorithms: tuple[tuple[str, tuple[ParamSpec, ...]], ...]
    task: str
    metric: str
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise SchemaError(f"unknown task kind {self.task!r}")
        if len(self.algorithms) < 1:
            raise InvariantError("need at least one algorithm")
        ids = [a for a, _ in self.algorithms]
        if len(set(ids)) != len(ids):
            raise InvariantError("algorithm ids must be unique")
        for aid, params in self.algorithms:
            names = [p.name for p in params]
            if len(set(names)) != len(names):
                raise InvariantError(f"{aid}: parameter names must be unique")
        object.__setattr__(self, "_index", {a: tuple(p) for a, p in self.algorithms})

    @property
    def k(self) -> int:
        return len(self.algorithms)

    @property
    def algorithm_ids(self) -> list[str]:
        return [a for a, _ in self.algorithms]

    def params(self, algorithm_id: str) -> tuple[ParamSpec, ...]:
        try:
            return self._index[algorithm_id]
        except KeyError:
            raise UnknownAlgorithm(algorithm_id) from None

    def numeric_params(self, algorithm_id: str) -> list[ParamSpec]:
        return [p for p in self.params(algorithm_id) if p.is_numeric]

    def cat_params(self, algorithm_id: str) -> list[ParamSpec]:
        return [p for p in self.params(algorithm_id) if p.kind == CAT]

    @property
    def total_params(self) -> int:
        return sum(len(p) for _, p in self.algorithms)


@dataclass(frozen=True)
class Configuration:
    """One algorithm plus a complete assignment of its hyperparameters."""

    algorithm_id: str
    values: Mapping[str, Any]


@dataclass(frozen=True)
class EncodedConfig:
    """Numeric dims on the unit axis plus categorical choice indices."""

    cont: np.ndarray
    cat: np.ndarray


def validate(config: Configuration, space: SearchSpace) -> None:
    """Raise unless the configuration covers exactly its algorithm's parameters."""
    params = space.params(config.algorithm_id)
    names = {p.name for p in params}
    got = set(config.values.keys())
    if got != names:
        raise InvariantError(
            f"{config.algorithm_id}: expected parameters {sorted(names)}, got {sorted(got)}"
        )
    for p in params:
        if not p.contains(config.values[p.name]):
            raise InvariantError(f"{p.name}: value {config.values[p.name]!r} out of range")


def parse_space(text: str) -> SearchSpace:
    """Parse the JSON search-space document (schema in docs/space_format.md)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    for key in ("task", "metric", "algorithms"):
        if key not in doc:
            raise SchemaError(f"missing top-level field {key!r}")
    algos = []
    if not isinstance(doc["algorithms"], list):
        raise SchemaError("'algorithms' must be a list")
    for entry in doc["algorithms"]:
        if not isinstance(entry, dict) or "name" not in entry or "params" not in entry:
            raise SchemaError("algorithm entries need 'name' and 'params'")
        params = []
        for pd in entry["params"]:
            if not isinstance(pd, dict) or "name" not in pd or "type" not in pd:
                raise SchemaError("param entries need 'name' and 'type'")
            kind = pd["type"]
            if kind == CAT:
                if "choices" not in pd:
                    raise SchemaError(f"{pd['name']}: categorical needs 'choices'")
                params.append(ParamSpec(pd["name"], CAT, choices=tuple(pd["choices"])))
            elif kind in (FLOAT, INT):
                if "low" not in pd or "high" not in pd:
                    raise SchemaError(f"{pd['name']}: numeric needs 'low' and 'high'")
                params.append(
                    ParamSpec(pd["name"], kind, low=pd["low"], high=pd["high"],
                              log=bool(pd.get("log", False)))
                )
            else:
                raise SchemaError(f"{pd['name']}: unknown type {kind!r}")
        algos.append((entry["name"], tuple(params)))
    return SearchSpace(tuple(algos), task=doc["task"], metric=doc["metric"])


def load_space(path) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return parse_space(fh.read())


def space_to_dict(space: SearchSpace) -> dict:
    """Canonical schema dict; inverse of parse_space."""
    algos = []
    for aid, params in space.algorithms:
        entries = []
        for p in params:
            if p.kind == CAT:
                entries.append({"name": p.name, "type": CAT, "choices": list(p.choices)})
            else:
                entries.append({"name": p.name, "type": p.kind, "low": p.low,
                                "high": p.high, "log": p.log})
        algos.append({"name": aid, "params": entries})
    return {"task": space.task, "metric": space.metric, "algorithms": algos}


def space_digest(space: SearchSpace) -> str:
    """Hex digest of the canonical space document (handshake identity)."""
    payload = json.dumps(space_to_dict(space), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def sample_random(space: SearchSpace, algorithm_id: str, rng: np.random.Generator) -> Configuration:
    """Uniform per dimension: log-domain for log scales, uniform over choices."""
    values = {}
    for p in space.params(algorithm_id):
        if p.kind == CAT:
            values[p.name] = p.choices[int(rng.integers(len(p.choices)))]
        elif p.kind == INT and not p.log:
            values[p.name] = int(rng.integers(int(p.low), int(p.high) + 1))
        else:
            values[p.name] = p.from_unit(rng.random())
    return Configuration(algorithm_id, values)


def perturb_local(base: Configuration, space: SearchSpace, rng: np.random.Generator) -> Configuration:
    """Small Gaussian step in the unit encoding; categorical dims resampled
    with probability PERTURB_CAT_PROB. Clipping keeps the result valid."""
    values = {}
    for p in space.params(base.algorithm_id):
        v = base.values[p.name]
        if p.kind == CAT:
            if rng.random() < PERTURB_CAT_PROB:
                v = p.choices[int(rng.integers(len(p.choices)))]
            values[p.name] = v
        else:
            u = p.to_unit(v) + PERTURB_SIGMA * rng.normal()
            values[p.name] = p.from_unit(u)
    return Configuration(base.algorithm_id, values)


def encode(config: Configuration, space: SearchSpace) -> EncodedConfig:
    """Normalize a configuration: numeric dims to [0, 1], categoricals to indices."""
    params = space.params(config.algorithm_id)
    cont = [p.to_unit(config.values[p.name]) for p in params if p.is_numeric]
    cat = [p.choice_index(config.values[p.name]) for p in params if p.kind == CAT]
    return EncodedConfig(np.asarray(cont, dtype=np.float64), np.asarray(cat, dtype=np.int64))


def batch_sample_encoded(space: SearchSpace, algorithm_id: str, n: int,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n uniform draws directly on the encoded axes (same law as sample_random:
    integer dims land on their grid, log dims are uniform in log-domain)."""
    numeric = space.numeric_params(algorithm_id)
    cats = space.cat_params(algorithm_id)
    xc = np.empty((n, len(numeric)))
    for j, p in enumerate(numeric):
        if p.kind == INT and not p.log:
            k = rng.integers(int(p.low), int(p.high) + 1, size=n)
            xc[:, j] = (k - p.low) / (p.high - p.low)
        else:
            u = rng.random(n)
            xc[:, j] = _snap_int_units(p, u) if p.kind == INT else u
    xk = np.empty((n, len(cats)), dtype=np.int64)
    for j, p in enumerate(cats):
        xk[:, j] = rng.integers(len(p.choices), size=n)
    return xc, xk


def batch_perturb_encoded(base: EncodedConfig, space: SearchSpace, algorithm_id: str,
                          n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n local perturbations of one encoded configuration (perturb_local's law,
    vectorized: unit-axis Gaussian with clipping, seeded categorical resampling)."""
    return perturb_encoded_rows(np.tile(base.cont, (n, 1)),
                                np.tile(base.cat, (n, 1)), space, algorithm_id, rng)


def perturb_encoded_rows(xc_base: np.ndarray, xk_base: np.ndarray, space: SearchSpace,
                         algorithm_id: str, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Perturb every row once (one fused draw for a whole candidate block)."""
    numeric = space.numeric_params(algorithm_id)
    cats = space.cat_params(algorithm_id)
    n = xc_base.shape[0]
    xc = np.clip(xc_base + PERTURB_SIGMA * rng.normal(size=(n, len(numeric))), 0.0, 1.0)
    for j, p in enumerate(numeric):
        if p.kind == INT:
            xc[:, j] = _snap_int_units(p, xc[:, j])
    if cats:
        resample = rng.random((n, len(cats))) < PERTURB_CAT_PROB
        fresh = np.column_stack([rng.integers(len(p.choices), size=n) for p in cats])
        xk = np.where(resample, fresh, xk_base).astype(np.int64)
    else:
        xk = np.zeros((n, 0), dtype=np.int64)
    return xc, xk


def _snap_int_units(p: ParamSpec, u: np.ndarray) -> np.ndarray:
    """Project unit coordinates onto the integer grid (round in value space)."""
    if p.log:
        v = np.exp(np.log(p.low) + u * (np.log(p.high) - np.log(p.low)))
        v = np.clip(np.rint(v), p.low, p.high)
        return (np.log(v) - np.log(p.low)) / (np.log(p.high) - np.log(p.low))
    v = np.clip(np.rint(p.low + u * (p.high - p.low)), p.low, p.high)
    return (v - p.low) / (p.high - p.low)


def decode_batch(xc: np.ndarray, xk: np.ndarray, space: SearchSpace,
                 algorithm_id: str) -> list[Configuration]:
    """Row-wise decode of encoded matrices (vector twin of decode)."""
    params = space.params(algorithm_id)
    numeric = [p for p in params if p.is_numeric]
    cats = [p for p in params if p.kind == CAT]
    if xc.shape[1] != len(numeric) or xk.shape[1] != len(cats):
        raise DimensionMismatch(
            f"{algorithm_id}: expected {len(numeric)} numeric + {len(cats)} categorical dims")
    cols: dict[str, list] = {}
    for j, p in enumerate(numeric):
        u = np.clip(xc[:, j], 0.0, 1.0)
        if p.log:
            v = np.exp(np.log(p.low) + u * (np.log(p.high) - np.log(p.low)))
        else:
            v = p.low + u * (p.high - p.low)
        if p.kind == INT:
            cols[p.name] = [int(x) for x in np.clip(np.rint(v), p.low, p.high)]
        else:
            cols[p.name] = [float(x) for x in v]
    for j, p in enumerate(cats):
        cols[p.name] = [p.choices[int(i)] for i in xk[:, j]]
    return [Configuration(algorithm_id, {p.name: cols[p.name][i] for p in params})
            for i in range(xc.shape[0])]


def decode(enc: EncodedConfig, space: SearchSpace, algorithm_id: str) -> Configuration:
    params = space.params(algorithm_id)
    numeric = [p for p in params if p.is_numeric]
    cats = [p for p in params if p.kind == CAT]
    if len(enc.cont) != len(numeric) or len(enc.cat) != len(cats):
        raise DimensionMismatch(
            f"{algorithm_id}: expected {len(numeric)} numeric + {len(cats)} categorical dims, "
            f"got {len(enc.cont)} + {len(enc.cat)}"
        )
    values = {}
    ci = ki = 0
    for p in params:
        if p.is_numeric:
            values[p.name] = p.from_unit(enc.cont[ci])
            ci += 1
        else:
            idx = int(enc.cat[ki])
            if not 0 <= idx < len(p.choices):
                raise DimensionMismatch(f"{p.name}: choice index {idx} out of range")
            values[p.name] = p.choices[idx]
            ki += 1
    return Configuration(algorithm_id, values)
