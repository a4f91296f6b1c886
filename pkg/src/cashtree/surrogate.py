"""Per-algorithm Gaussian-process surrogates.

Covariance = signal * Matern-5/2 (per-dimension lengthscales on the unit
encoding) * exp(-theta * hamming fraction) on categorical indices. Kernel
hyperparameters maximize the log marginal likelihood (analytic gradients,
multi-start L-BFGS-B on log parameters, targets standardized internally and
the fitted variances rescaled back to target units).

Also houses Expected Improvement, cross-validated Kendall tau for surrogate
reliability, and the softmax algorithm prior built from surrogate rollouts.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.special import ndtr

from . import _core
from .errors import DimensionMismatch, InsufficientData, NumericalFailure
from .metrics import kendall_tau, minmax_normalize
from .space import EncodedConfig, SearchSpace, batch_sample_encoded

SQRT5 = math.sqrt(5.0)

LS_BOUNDS = (1e-3, 1e3)          # lengthscales and the categorical scale
SIGNAL_BOUNDS = (1e-2, 1e2)      # on standardized targets
NOISE_BOUNDS = (1e-6, 1e-1)
JITTER_START, JITTER_MAX = 1e-10, 1e-4
DEFAULT_RESTARTS = 8


@dataclass(frozen=True)
class KernelParams:
    """Strictly positive kernel hyperparameters."""

    cont_lengthscales: np.ndarray
    cat_lengthscale: float
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.asarray(self.cont_lengthscales, dtype=np.float64)
        object.__setattr__(self, "cont_lengthscales", ls)
        if np.any(ls <= 0) or self.cat_lengthscale <= 0 or \
                self.signal_variance <= 0 or self.noise_variance <= 0:
            raise ValueError("kernel hyperparameters must be strictly positive")


def default_params(n_cont: int) -> KernelParams:
    """Fallback hyperparameters when nothing has been fitted yet."""
    return KernelParams(np.full(max(n_cont, 1), 0.5), 1.0, 1.0, 1e-3)


@dataclass
class AlgoDataset:
    """Evaluated configurations of one algorithm, in arrival order."""

    algorithm_id: str
    rows: list = field(default_factory=list)   # (EncodedConfig, y)

    def append(self, enc: EncodedConfig, y: float) -> None:
        if not np.isfinite(y):
            raise ValueError(f"non-finite target {y!r}")
        if self.rows:
            first = self.rows[0][0]
            if len(enc.cont) != len(first.cont) or len(enc.cat) != len(first.cat):
                raise DimensionMismatch("row dimensionality changed")
        self.rows.append((enc, float(y)))

    def __len__(self) -> int:
        return len(self.rows)

    def matrices(self):
        """(cont, cat, y) arrays; shapes (n, d_c), (n, d_k), (n,)."""
        n = len(self.rows)
        if n == 0:
            return np.zeros((0, 0)), np.zeros((0, 0), dtype=np.int64), np.zeros(0)
        dc = len(self.rows[0][0].cont)
        dk = len(self.rows[0][0].cat)
        xc = np.empty((n, dc))
        xk = np.empty((n, dk), dtype=np.int64)
        y = np.empty(n)
        for i, (enc, yi) in enumerate(self.rows):
            xc[i] = enc.cont
            xk[i] = enc.cat
            y[i] = yi
        return xc, xk, y

    def best_y(self) -> float:
        return max(y for _, y in self.rows)


def kernel(a: EncodedConfig, b: EncodedConfig, p: KernelParams) -> float:
    """Covariance between two encoded configurations."""
    if len(a.cont) != len(b.cont) or len(a.cat) != len(b.cat):
        raise DimensionMismatch("encoded configurations differ in dimensionality")
    return float(_core.kernel_cross(
        a.cont[None, :], a.cat[None, :], b.cont[None, :], b.cat[None, :],
        p.cont_lengthscales, p.cat_lengthscale, p.signal_variance,
    )[0, 0])


@dataclass
class GpModel:
    """Fitted surrogate: hyperparameters plus the factorized covariance state."""

    algorithm_id: str
    params: KernelParams
    x_cont: np.ndarray
    x_cat: np.ndarray
    y: np.ndarray
    mean_offset: float
    chol_lower: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def _check_dims(self, xc, xk):
        if xc.shape[1] != self.x_cont.shape[1] or xk.shape[1] != self.x_cat.shape[1]:
            raise DimensionMismatch("query dimensionality does not match training data")

    def predict(self, enc: EncodedConfig) -> tuple[float, float]:
        mean, var = self.predict_batch(enc.cont[None, :], enc.cat[None, :])
        return float(mean[0]), float(var[0])

    def predict_batch(self, xc: np.ndarray, xk: np.ndarray,
                      with_var: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
        """Posterior mean (and variance, clamped at 0) for a batch of queries."""
        xc = np.atleast_2d(np.asarray(xc, dtype=np.float64))
        xk = np.atleast_2d(np.asarray(xk, dtype=np.int64))
        self._check_dims(xc, xk)
        ks = _core.kernel_cross(xc, xk, self.x_cont, self.x_cat,
                                self.params.cont_lengthscales,
                                self.params.cat_lengthscale,
                                self.params.signal_variance)
        mean = self.mean_offset + ks @ self.alpha
        if not with_var:
            return mean, None
        v = solve_triangular(self.chol_lower, ks.T, lower=True)
        var = self.params.signal_variance - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)


def _hamming_matrix(xk: np.ndarray) -> np.ndarray:
    if xk.shape[1] == 0:
        return np.zeros((xk.shape[0], xk.shape[0]))
    return np.mean(xk[:, None, :] != xk[None, :, :], axis=2)


def _nlml_and_grad(log_params: np.ndarray, xc, h, y, n_cont, n_cat):
    """Negative log marginal likelihood and its gradient in log-parameter space."""
    n = y.shape[0]
    ls = np.exp(log_params[:n_cont])
    pos = n_cont
    theta = np.exp(log_params[pos]) if n_cat else 1.0
    if n_cat:
        pos += 1
    signal = np.exp(log_params[pos])
    noise = np.exp(log_params[pos + 1])

    # per-dimension scaled squared differences, kept for the gradient
    s = np.empty((n, n, n_cont)) if n_cont else np.zeros((n, n, 0))
    for d in range(n_cont):
        diff = (xc[:, d, None] - xc[None, :, d]) / ls[d]
        s[:, :, d] = diff * diff
    r2 = s.sum(axis=2)
    r = np.sqrt(r2)
    decay = np.exp(-SQRT5 * r)
    matern = (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * decay
    ham = np.exp(-theta * h) if n_cat else 1.0
    kf = signal * matern * ham
    kmat = kf + noise * np.eye(n)

    try:
        lower = cholesky(kmat, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(log_params)
    alpha = cho_solve((lower, True), y)
    nlml = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(lower)))) \
        + 0.5 * n * math.log(2.0 * math.pi)

    kinv = cho_solve((lower, True), np.eye(n))
    a = np.outer(alpha, alpha) - kinv
    grad = np.empty_like(log_params)
    if n_cont:
        b = a * (signal * (5.0 / 3.0) * (1.0 + SQRT5 * r) * decay *
                 (ham if n_cat else 1.0))
        grad[:n_cont] = -0.5 * np.einsum("ij,ijd->d", b, s)
    pos = n_cont
    if n_cat:
        grad[pos] = 0.5 * theta * float(np.sum(a * kf * h))
        pos += 1
    grad[pos] = -0.5 * float(np.sum(a * kf))
    grad[pos + 1] = -0.5 * noise * float(np.trace(a))
    return nlml, grad


def _factorize(xc, xk, y, params: KernelParams):
    """Cholesky of K + noise I with jitter escalation; raises NumericalFailure."""
    kmat = _core.kernel_gram(xc, xk, params.cont_lengthscales,
                             params.cat_lengthscale, params.signal_variance)
    n = y.shape[0]
    jitter = 0.0
    while True:
        try:
            lower = cholesky(kmat + (params.noise_variance + jitter) * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise NumericalFailure("covariance factorization failed") from None
    alpha = cho_solve((lower, True), y)
    return lower, alpha


def fit(data: AlgoDataset, restarts: int = DEFAULT_RESTARTS,
        rng: np.random.Generator | None = None,
        warm_params: KernelParams | None = None,
        max_opt_rows: int | None = None) -> GpModel:
    """Fit hyperparameters by multi-start likelihood maximization.

    max_opt_rows caps the rows used for the (cubic-cost) hyperparameter search;
    the returned factorization always uses the full dataset.
    """
    if len(data) < 2:
        raise InsufficientData(f"need >= 2 rows, have {len(data)}")
    rng = rng or np.random.default_rng(0)
    xc, xk, y = data.matrices()

    y_mean = float(np.mean(y))
    y_sd = float(np.std(y))
    if y_sd == 0.0:
        y_sd = 1.0
    ys = (y - y_mean) / y_sd

    oc, ok, oy = xc, xk, ys
    if max_opt_rows is not None and len(data) > max_opt_rows:
        idx = rng.choice(len(data), size=max_opt_rows, replace=False)
        idx.sort()
        oc, ok, oy = xc[idx], xk[idx], ys[idx]

    n_cont, n_cat = xc.shape[1], xk.shape[1]
    h = _hamming_matrix(ok)
    n_hyper = n_cont + (1 if n_cat else 0) + 2

    lo = np.empty(n_hyper)
    hi = np.empty(n_hyper)
    lo[:n_cont + (1 if n_cat else 0)] = math.log(LS_BOUNDS[0])
    hi[:n_cont + (1 if n_cat else 0)] = math.log(LS_BOUNDS[1])
    lo[-2], hi[-2] = math.log(SIGNAL_BOUNDS[0]), math.log(SIGNAL_BOUNDS[1])
    lo[-1], hi[-1] = math.log(NOISE_BOUNDS[0]), math.log(NOISE_BOUNDS[1])

    def pack(p: KernelParams) -> np.ndarray:
        parts = [np.log(p.cont_lengthscales[:n_cont])]
        if n_cat:
            parts.append([math.log(p.cat_lengthscale)])
        # warm-start variances are in target units; map back to standardized
        parts.append([math.log(max(p.signal_variance / y_sd**2, SIGNAL_BOUNDS[0]))])
        parts.append([math.log(max(p.noise_variance / y_sd**2, NOISE_BOUNDS[0]))])
        return np.clip(np.concatenate([np.atleast_1d(x) for x in parts]), lo, hi)

    heuristic = np.clip(np.concatenate([
        np.full(n_cont, math.log(0.5)),
        [0.0] if n_cat else [],
        [0.0, math.log(1e-2)],
    ]).astype(float), lo, hi)
    starts = [pack(warm_params)] if warm_params is not None else []
    starts.append(heuristic)
    while len(starts) < max(restarts, 1):
        starts.append(rng.uniform(lo, hi))
    starts = starts[:max(restarts, 1)]

    best_val, best_x = math.inf, starts[0]
    for x0 in starts:
        res = minimize(_nlml_and_grad, x0, args=(oc, h, oy, n_cont, n_cat),
                       method="L-BFGS-B", jac=True, bounds=list(zip(lo, hi)),
                       options={"maxiter": 100})
        if res.fun < best_val:
            best_val, best_x = float(res.fun), res.x

    ls = np.exp(best_x[:n_cont]) if n_cont else np.array([1.0])
    pos = n_cont
    theta = float(np.exp(best_x[pos])) if n_cat else 1.0
    if n_cat:
        pos += 1
    params = KernelParams(
        cont_lengthscales=ls,
        cat_lengthscale=theta,
        signal_variance=float(np.exp(best_x[pos])) * y_sd**2,
        noise_variance=float(np.exp(best_x[pos + 1])) * y_sd**2,
    )
    lower, alpha = _factorize(xc, xk, y - y_mean, params)
    return GpModel(data.algorithm_id, params, xc, xk, y, y_mean, lower, alpha)


def fit_with_params(data: AlgoDataset, params: KernelParams) -> GpModel:
    """Factorize with given hyperparameters (no likelihood optimization)."""
    if len(data) < 2:
        raise InsufficientData(f"need >= 2 rows, have {len(data)}")
    xc, xk, y = data.matrices()
    y_mean = float(np.mean(y))
    lower, alpha = _factorize(xc, xk, y - y_mean, params)
    return GpModel(data.algorithm_id, params, xc, xk, y, y_mean, lower, alpha)


def extend_model(model: GpModel, enc: EncodedConfig, y: float) -> GpModel:
    """Bordered-Cholesky append of one observation in O(n^2).

    Hyperparameters and the prior mean offset stay frozen until the next
    re-optimization; the posterior itself is exact for the grown dataset.
    Raises NumericalFailure when the bordered pivot degenerates (caller
    rebuilds from scratch, which escalates jitter).
    """
    p = model.params
    kvec = _core.kernel_cross(enc.cont[None, :], enc.cat[None, :],
                              model.x_cont, model.x_cat,
                              p.cont_lengthscales, p.cat_lengthscale,
                              p.signal_variance)[0]
    b = solve_triangular(model.chol_lower, kvec, lower=True)
    pivot = p.signal_variance + p.noise_variance - float(b @ b)
    if pivot <= 1e-12:
        raise NumericalFailure("bordered Cholesky pivot is not positive")
    n = model.n
    lower = np.zeros((n + 1, n + 1))
    lower[:n, :n] = model.chol_lower
    lower[n, :n] = b
    lower[n, n] = math.sqrt(pivot)
    x_cont = np.vstack([model.x_cont, enc.cont[None, :]])
    x_cat = np.vstack([model.x_cat, enc.cat[None, :]])
    y_all = np.append(model.y, y)
    alpha = cho_solve((lower, True), y_all - model.mean_offset)
    return GpModel(model.algorithm_id, p, x_cont, x_cat, y_all,
                   model.mean_offset, lower, alpha)


def expected_improvement(mean, variance, best_y):
    """EI under the maximize convention, no exploration jitter.

    Accepts scalars or arrays; sigma = 0 degenerates to max(mean - best, 0).
    """
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(variance, dtype=np.float64)
    sigma = np.sqrt(var)
    improve = mean - best_y
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, improve / np.where(sigma > 0, sigma, 1.0), 0.0)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = np.where(sigma > 0, sigma * (z * ndtr(z) + pdf), np.maximum(improve, 0.0))
    if ei.ndim == 0:
        return float(ei)
    return ei


def cv_kendall_tau(data: AlgoDataset, folds: int, seed: int = 0,
                   restarts: int = 2, warm_params: KernelParams | None = None,
                   max_rows: int | None = None) -> float:
    """k-fold CV rank fidelity: tau-a between pooled held-out predictions and truth."""
    if folds < 2 or len(data) < folds:
        raise InsufficientData(f"need >= {folds} rows, have {len(data)}")
    rng = np.random.default_rng(seed)
    xc, xk, y = data.matrices()
    idx = rng.permutation(len(data))
    if max_rows is not None and len(idx) > max_rows:
        idx = idx[:max_rows]
    preds, trues = [], []
    for fold in np.array_split(idx, folds):
        train = np.setdiff1d(idx, fold)
        sub = AlgoDataset(data.algorithm_id)
        for i in train:
            sub.append(EncodedConfig(xc[i], xk[i]), y[i])
        model = fit(sub, restarts=restarts, rng=rng, warm_params=warm_params)
        mean, _ = model.predict_batch(xc[fold], xk[fold], with_var=False)
        preds.extend(mean.tolist())
        trues.extend(y[fold].tolist())
    return kendall_tau(preds, trues)


def algorithm_prior(models: Mapping[str, GpModel | None], space: SearchSpace,
                    n_s: int, rng: np.random.Generator) -> np.ndarray:
    """Softmax prior over algorithms from surrogate rollouts.

    Fitted algorithms score the min-max normalized mean of n_s uniform-sample
    posterior means; algorithms without a model get the optimistic score 1.
    """
    ids = space.algorithm_ids
    fitted = [aid for aid in ids if models.get(aid) is not None]
    if not fitted:
        return np.full(len(ids), 1.0 / len(ids))
    base_seed = int(rng.integers(2**31 - 1))
    raw = {}
    for aid in fitted:
        sub = np.random.default_rng([base_seed, zlib.crc32(aid.encode("utf-8"))])
        xc, xk = batch_sample_encoded(space, aid, n_s, sub)
        mean, _ = models[aid].predict_batch(xc, xk, with_var=False)
        raw[aid] = float(np.mean(mean))
    normed = dict(zip(fitted, minmax_normalize([raw[a] for a in fitted])))
    v = np.array([normed.get(aid, 1.0) for aid in ids])
    e = np.exp(v - np.max(v))
    return e / e.sum()
