"""Dataset loading and the fixed 60/20/20 split."""

from __future__ import annotations

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

SKLEARN_LOADERS = {
    "iris": "load_iris",
    "wine": "load_wine",
    "breast_cancer": "load_breast_cancer",
    "digits": "load_digits",
    "diabetes": "load_diabetes",
}


def load_dataset(source: str, target_column: str | None = None):
    """Return (X, y) from 'sklearn:<name>' or a CSV path.

    CSV: the target is `target_column` or the last column; non-numeric
    feature columns are label-encoded.
    """
    if source.startswith("sklearn:"):
        name = source.split(":", 1)[1]
        if name not in SKLEARN_LOADERS:
            raise ValueError(f"unknown sklearn dataset {name!r}; "
                             f"choose from {sorted(SKLEARN_LOADERS)}")
        from sklearn import datasets

        bunch = getattr(datasets, SKLEARN_LOADERS[name])()
        return np.asarray(bunch.data, dtype=float), np.asarray(bunch.target)

    frame = pd.read_csv(source)
    target = target_column or frame.columns[-1]
    y = frame[target].to_numpy()
    X = frame.drop(columns=[target])
    for col in X.columns:
        if not np.issubdtype(X[col].dtype, np.number):
            X[col] = pd.factorize(X[col])[0]
    if y.dtype == object:
        y = pd.factorize(y)[0]
    return X.to_numpy(dtype=float), y


def split_60_20_20(X, y, seed: int, classification: bool):
    """Deterministic train/validation/test split (stratified when classifying)."""
    strat = y if classification else None
    X_train, X_rest, y_train, y_rest = train_test_split(
        X, y, test_size=0.4, random_state=seed, stratify=strat)
    strat_rest = y_rest if classification else None
    X_val, X_test, y_val, y_test = train_test_split(
        X_rest, y_rest, test_size=0.5, random_state=seed, stratify=strat_rest)
    return (X_train, y_train), (X_val, y_val), (X_test, y_test)
