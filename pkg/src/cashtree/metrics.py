"""Standalone statistics: Kendall tau, min-max scaling, configuration diversity."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import _core
from .errors import AlgorithmMismatch, LengthMismatch, OutOfBounds
from .space import CAT, Configuration, ParamSpec, SearchSpace


def kendall_tau(a: Sequence[float], b: Sequence[float]) -> float:
    """Tau-a: (concordant - discordant) / (n(n-1)/2); tied pairs count as neither."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)}")
    if len(a) < 2:
        raise LengthMismatch("need at least 2 paired observations")
    n = len(a)
    conc, disc = _core.kendall_counts(np.asarray(a, float), np.asarray(b, float))
    return (conc - disc) / (n * (n - 1) / 2)


def minmax_normalize(values: Sequence[float]) -> np.ndarray:
    """(v - min) / (max - min); an all-equal input maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def diversity_numeric(samples: Sequence[float], spec: ParamSpec) -> float:
    """Population std of the unit-normalized samples (log-domain when log-scaled)."""
    for s in samples:
        if not spec.contains(s):
            raise OutOfBounds(f"{spec.name}: {s!r} outside [{spec.low}, {spec.high}]")
    units = np.asarray([spec.to_unit(s) for s in samples], dtype=np.float64)
    return float(np.std(units))


def diversity_categorical(counts: Sequence[float], k: int) -> float:
    """Normalized Shannon entropy of the empirical choice frequencies."""
    if k < 2:
        raise LengthMismatch("need k >= 2 categories")
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise LengthMismatch("counts must sum to >= 1")
    q = c / total
    nz = q[q > 0]
    return float(-(nz * np.log(nz)).sum() / math.log(k))


def algorithm_diversity(configs: Sequence[Configuration], space: SearchSpace,
                        algorithm_id: str) -> float:
    """Mean of the per-parameter diversity scores over one algorithm's trials."""
    for c in configs:
        if c.algorithm_id != algorithm_id:
            raise AlgorithmMismatch(f"expected {algorithm_id}, got {c.algorithm_id}")
    scores = []
    for p in space.params(algorithm_id):
        values = [c.values[p.name] for c in configs]
        if p.kind == CAT:
            counts = [sum(1 for v in values if v == choice) for choice in p.choices]
            scores.append(diversity_categorical(counts, len(p.choices)))
        else:
            scores.append(diversity_numeric(values, p))
    return float(np.mean(scores))
