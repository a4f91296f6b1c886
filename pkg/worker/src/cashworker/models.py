"""Algorithm-family builders.

Eight families per task type. AdaBoost, the tree ensembles, gradient
boosting and the linear models use their native scikit-learn estimators.
The lightgbm/catboost/xgboost families are realized with scikit-learn's
histogram and classic gradient boosting; README.md documents the parameter
adaptation (and the handful of knobs those backends cannot express).
"""

from __future__ import annotations

from sklearn.ensemble import (
    AdaBoostClassifier,
    AdaBoostRegressor,
    ExtraTreesClassifier,
    ExtraTreesRegressor,
    GradientBoostingClassifier,
    GradientBoostingRegressor,
    HistGradientBoostingClassifier,
    HistGradientBoostingRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)
from sklearn.linear_model import LogisticRegression, Ridge
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor


def _bool(v) -> bool:
    return v is True or v == "true"


def build_classifier(family: str, p: dict, seed: int):
    if family == "adaboost":
        # the SAMME.R/SAMME switch is inert on modern scikit-learn (SAMME.R
        # was removed in 1.6); the value is accepted for space compatibility
        return AdaBoostClassifier(
            estimator=DecisionTreeClassifier(max_depth=int(p["max_depth"]),
                                             random_state=seed),
            n_estimators=int(p["n_estimators"]),
            learning_rate=float(p["learning_rate"]),
            random_state=seed)
    if family == "random_forest":
        return RandomForestClassifier(
            criterion=p["criterion"], bootstrap=_bool(p["bootstrap"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            min_samples_split=int(p["min_samples_split"]),
            random_state=seed, n_jobs=1)
    if family == "extra_trees":
        return ExtraTreesClassifier(
            criterion=p["criterion"], bootstrap=_bool(p["bootstrap"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            min_samples_leaf=int(p["min_samples_leaf"]),
            random_state=seed, n_jobs=1)
    if family == "gradient_boosting":
        return GradientBoostingClassifier(
            loss=p["loss"], learning_rate=float(p["learning_rate"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            subsample=float(p["subsample"]),
            min_samples_split=int(p["min_samples_split"]),
            max_features=float(p["max_features"]), random_state=seed)
    if family == "logistic_regression":
        return make_pipeline(
            StandardScaler(),
            LogisticRegression(penalty=p["penalty"], solver=p["solver"],
                               C=float(p["C"]), max_iter=int(p["max_iter"]),
                               random_state=seed))
    if family == "lightgbm":
        return HistGradientBoostingClassifier(
            learning_rate=float(p["learning_rate"]),
            max_iter=int(p["n_estimators"]),
            max_leaf_nodes=int(p["num_leaves"]), max_depth=int(p["max_depth"]),
            min_samples_leaf=int(p["min_child_samples"]),
            l2_regularization=float(p["reg_lambda"]) + float(p["reg_alpha"]),
            random_state=seed)
    if family == "catboost":
        return HistGradientBoostingClassifier(
            learning_rate=float(p["learning_rate"]), max_iter=int(p["iterations"]),
            max_depth=int(p["depth"]), l2_regularization=float(p["l2_leaf_reg"]),
            random_state=seed)
    if family == "xgboost":
        return GradientBoostingClassifier(
            learning_rate=float(p["learning_rate"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            subsample=float(p["subsample"]),
            max_features=float(p["colsample_bytree"]),
            min_samples_leaf=max(1, round(float(p["min_child_weight"]))),
            min_impurity_decrease=float(p["gamma"]),
            ccp_alpha=min(float(p["reg_alpha"]), 0.1),
            random_state=seed)
    raise KeyError(family)


def build_regressor(family: str, p: dict, seed: int):
    if family == "adaboost":
        return AdaBoostRegressor(
            estimator=DecisionTreeRegressor(max_depth=int(p["max_depth"]),
                                            random_state=seed),
            loss=p["loss"], n_estimators=int(p["n_estimators"]),
            learning_rate=float(p["learning_rate"]), random_state=seed)
    if family == "random_forest":
        return RandomForestRegressor(
            criterion=p["criterion"], bootstrap=_bool(p["bootstrap"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            min_samples_split=int(p["min_samples_split"]),
            random_state=seed, n_jobs=1)
    if family == "extra_trees":
        return ExtraTreesRegressor(
            criterion=p["criterion"], bootstrap=_bool(p["bootstrap"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            min_samples_leaf=int(p["min_samples_leaf"]),
            random_state=seed, n_jobs=1)
    if family == "gradient_boosting":
        return GradientBoostingRegressor(
            loss=p["loss"], learning_rate=float(p["learning_rate"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            subsample=float(p["subsample"]),
            min_samples_split=int(p["min_samples_split"]),
            max_features=float(p["max_features"]), random_state=seed)
    if family == "ridge":
        return make_pipeline(
            StandardScaler(),
            Ridge(alpha=float(p["alpha"]), fit_intercept=_bool(p["fit_intercept"]),
                  max_iter=int(p["max_iter"]), tol=float(p["tol"])))
    if family == "lightgbm":
        return HistGradientBoostingRegressor(
            learning_rate=float(p["learning_rate"]),
            max_iter=int(p["n_estimators"]),
            max_leaf_nodes=int(p["num_leaves"]), max_depth=int(p["max_depth"]),
            min_samples_leaf=int(p["min_child_samples"]),
            l2_regularization=float(p["reg_lambda"]) + float(p["reg_alpha"]),
            random_state=seed)
    if family == "catboost":
        return HistGradientBoostingRegressor(
            learning_rate=float(p["learning_rate"]), max_iter=int(p["iterations"]),
            max_depth=int(p["depth"]), l2_regularization=float(p["l2_leaf_reg"]),
            random_state=seed)
    if family == "xgboost":
        return GradientBoostingRegressor(
            learning_rate=float(p["learning_rate"]),
            n_estimators=int(p["n_estimators"]), max_depth=int(p["max_depth"]),
            subsample=float(p["subsample"]),
            max_features=float(p["colsample_bytree"]),
            min_samples_leaf=max(1, round(float(p["min_child_weight"]))),
            min_impurity_decrease=float(p["gamma"]),
            ccp_alpha=min(float(p["reg_alpha"]), 0.1),
            random_state=seed)
    raise KeyError(family)


def build_model(family: str, params: dict, seed: int, classification: bool):
    builder = build_classifier if classification else build_regressor
    return builder(family, params, seed)
