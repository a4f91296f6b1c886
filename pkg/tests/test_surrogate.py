import math

import numpy as np
import pytest
from scipy.stats import norm

from cashtree.errors import DimensionMismatch, InsufficientData
from cashtree.space import EncodedConfig, encode, sample_random
from cashtree.surrogate import (
    AlgoDataset,
    KernelParams,
    algorithm_prior,
    cv_kendall_tau,
    default_params,
    expected_improvement,
    fit,
    fit_with_params,
    kernel,
)

SQRT5 = math.sqrt(5.0)


def enc(cont, cat=()):
    return EncodedConfig(np.asarray(cont, dtype=float), np.asarray(cat, dtype=np.int64))


def make_dataset(xs, ys, aid="a", cats=None):
    data = AlgoDataset(aid)
    for i, (x, y) in enumerate(zip(xs, ys)):
        cat = () if cats is None else cats[i]
        data.append(enc(np.atleast_1d(x), cat), y)
    return data


def dense_posterior(train_x, train_y, query_x, params):
    """Independent oracle: textbook GP equations with explicit matrices."""
    def k(a, b):
        r = abs(a - b) / params.cont_lengthscales[0]
        return params.signal_variance * (1 + SQRT5 * r + 5 * r * r / 3) * math.exp(-SQRT5 * r)

    n = len(train_x)
    mean_y = np.mean(train_y)
    gram = np.array([[k(a, b) for b in train_x] for a in train_x])
    gram += params.noise_variance * np.eye(n)
    kinv = np.linalg.inv(gram)
    ks = np.array([k(query_x, b) for b in train_x])
    mean = mean_y + ks @ kinv @ (np.array(train_y) - mean_y)
    var = params.signal_variance - ks @ kinv @ ks
    return mean, var


# -- kernel ---------------------------------------------------------------------

def test_kernel_zero_distance():
    p = KernelParams(np.array([1.0]), 1.0, 1.0, 1e-6)
    assert kernel(enc([0.3]), enc([0.3]), p) == pytest.approx(1.0)


def test_kernel_matern_closed_form():
    # (1 + sqrt5 + 5/3) exp(-sqrt5) at unit scaled distance
    p = KernelParams(np.array([0.25]), 1.0, 1.0, 1e-6)
    expected = (1 + SQRT5 + 5 / 3) * math.exp(-SQRT5)
    assert kernel(enc([0.0]), enc([0.25]), p) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.523994, abs=5e-6)


def test_kernel_hamming_closed_form():
    p = KernelParams(np.array([1.0]), 1.0, 1.0, 1e-6)
    v = kernel(enc([0.5], [0, 1]), enc([0.5], [0, 2]), p)
    assert v == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert v == pytest.approx(0.60653, abs=5e-6)


def test_kernel_symmetry_and_signal_scaling(rng):
    p = KernelParams(rng.random(3) + 0.2, 0.7, 2.5, 1e-6)
    a = enc(rng.random(3), rng.integers(0, 3, 2))
    b = enc(rng.random(3), rng.integers(0, 3, 2))
    assert kernel(a, b, p) == pytest.approx(kernel(b, a, p))
    assert kernel(a, a, p) == pytest.approx(2.5)


def test_kernel_dimension_mismatch():
    p = KernelParams(np.array([1.0]), 1.0, 1.0, 1e-6)
    with pytest.raises(DimensionMismatch):
        kernel(enc([0.1]), enc([0.1, 0.2]), p)


def test_gram_positive_semidefinite(synth_space, rng):
    # min eigenvalue of a 20-point Gram matrix stays above -1e-8
    from cashtree import _core

    for aid in synth_space.algorithm_ids:
        encs = [encode(sample_random(synth_space, aid, rng), synth_space)
                for _ in range(20)]
        xc = np.stack([e.cont for e in encs])
        xk = np.stack([e.cat for e in encs])
        gram = _core.kernel_gram(xc, xk, np.full(xc.shape[1], 0.3), 0.8, 1.7)
        assert np.linalg.eigvalsh(gram).min() >= -1e-8


# -- fit / predict -----------------------------------------------------------------

def test_fit_interpolates_training_points():
    xs = np.linspace(0, 1, 5)
    data = make_dataset(xs, xs.tolist())
    model = fit(data, restarts=4)
    for x, y in zip(xs, xs):
        mean, _ = model.predict(enc([x]))
        assert abs(mean - y) < 1e-3
        assert abs(mean - y) <= 3 * math.sqrt(model.params.noise_variance) + 1e-9


def test_fit_handles_duplicate_inputs():
    data = make_dataset([0.5, 0.5, 0.2], [0.0, 1.0, 0.4])
    model = fit(data, restarts=4)
    mean, var = model.predict(enc([0.5]))
    assert np.isfinite(mean) and var >= 0.0
    # noise must absorb the contradiction
    assert abs(mean - 0.5) <= 3 * math.sqrt(model.params.noise_variance)


def test_fit_insufficient_data():
    with pytest.raises(InsufficientData):
        fit(make_dataset([0.1], [0.2]))


def test_fit_beats_nearest_neighbor_oracle(rng):
    # oracle: 1-nearest-neighbor prediction on held-out points of a smooth fn
    f = lambda x: np.sin(3 * x) + 0.5 * x
    train_x = np.sort(rng.random(30))
    test_x = rng.random(10)
    data = make_dataset(train_x, f(train_x).tolist())
    model = fit(data, restarts=4)
    gp_pred = np.array([model.predict(enc([x]))[0] for x in test_x])
    nn_pred = np.array([f(train_x[np.argmin(np.abs(train_x - x))]) for x in test_x])
    gp_rmse = np.sqrt(np.mean((gp_pred - f(test_x)) ** 2))
    nn_rmse = np.sqrt(np.mean((nn_pred - f(test_x)) ** 2))
    assert gp_rmse < nn_rmse


def test_predict_far_from_data_reverts_to_prior():
    params = KernelParams(np.array([0.01]), 1.0, 2.0, 1e-4)
    data = make_dataset([0.0, 0.02], [3.0, 5.0])
    model = fit_with_params(data, params)
    mean, var = model.predict(enc([1.0]))   # 100 lengthscales away
    assert mean == pytest.approx(4.0, abs=1e-6)          # training-target mean
    assert var == pytest.approx(2.0, abs=1e-6)           # signal variance


def test_predict_at_training_point_contracts():
    data = make_dataset(np.linspace(0, 1, 6), list(np.linspace(0, 1, 6) ** 2))
    model = fit(data, restarts=4)
    _, var = model.predict(enc([0.4]))
    assert var <= model.params.noise_variance + 1e-6


def test_predict_matches_dense_textbook_formula(rng):
    # independent oracle: explicit inverse-based posterior, fixed params
    params = KernelParams(np.array([0.37]), 1.0, 1.9, 1e-4)
    xs = rng.random(12)
    ys = (np.sin(5 * xs) + 0.3 * rng.normal(size=12)).tolist()
    model = fit_with_params(make_dataset(xs, ys), params)
    for q in rng.random(8):
        mean, var = model.predict(enc([q]))
        omean, ovar = dense_posterior(xs, ys, q, params)
        assert mean == pytest.approx(omean, abs=1e-8)
        assert var == pytest.approx(max(ovar, 0.0), abs=1e-8)


def test_predict_dimension_mismatch():
    model = fit(make_dataset([0.1, 0.9], [0.0, 1.0]), restarts=2)
    with pytest.raises(DimensionMismatch):
        model.predict(enc([0.1, 0.2]))


def test_posterior_mean_is_lipschitz(rng):
    # |dm/dx| <= sum|alpha_i| * max_r |dk/dr| / lengthscale (numeric bound)
    params = KernelParams(np.array([0.3]), 1.0, 1.0, 1e-4)
    xs = rng.random(15)
    ys = np.sin(6 * xs).tolist()
    model = fit_with_params(make_dataset(xs, ys), params)
    rs = np.linspace(0, 20, 20_000)
    dk = params.signal_variance * (5 / 3) * rs * (1 + SQRT5 * rs) * np.exp(-SQRT5 * rs)
    lipschitz = np.sum(np.abs(model.alpha)) * dk.max() / params.cont_lengthscales[0]
    for _ in range(50):
        x0, x1 = rng.random(2)
        m0, _ = model.predict(enc([x0]))
        m1, _ = model.predict(enc([x1]))
        assert abs(m1 - m0) <= lipschitz * abs(x1 - x0) + 1e-9


def test_extend_model_matches_dense_algebra(rng):
    # grow a model five times; its factorization and weights must stay exact
    # for the grown dataset (prior mean frozen at the pre-growth offset)
    from cashtree import _core
    from cashtree.surrogate import extend_model, fit_with_params

    params = KernelParams(np.array([0.3]), 1.0, 1.2, 1e-3)
    xs = rng.random(10)
    data = make_dataset(xs, np.sin(4 * xs).tolist())
    model = fit_with_params(data, params)
    for _ in range(5):
        model = extend_model(model, enc([float(rng.random())]), float(rng.normal()))
        gram = _core.kernel_gram(model.x_cont, model.x_cat,
                                 params.cont_lengthscales, params.cat_lengthscale,
                                 params.signal_variance)
        kmat = gram + params.noise_variance * np.eye(model.n)
        assert np.allclose(model.chol_lower @ model.chol_lower.T, kmat, atol=1e-8)
        assert np.allclose(model.alpha,
                           np.linalg.solve(kmat, model.y - model.mean_offset),
                           atol=1e-8)
        _, var = model.predict(enc([0.5]))
        assert var >= 0.0


# -- expected improvement ------------------------------------------------------------

def test_ei_closed_form_example():
    expected = 1.0 * (1.0 * norm.cdf(1.0) + norm.pdf(1.0))
    assert expected == pytest.approx(1.08332, abs=5e-6)
    assert expected_improvement(1.0, 1.0, 0.0) == pytest.approx(expected, abs=1e-9)


def test_ei_degenerate_sigma():
    assert expected_improvement(0.4, 0.0, 0.5) == 0.0
    assert expected_improvement(0.7, 0.0, 0.5) == pytest.approx(0.2)


def test_ei_dominates_deterministic_gain(rng):
    for _ in range(200):
        mean, var, best = rng.normal(), rng.random(), rng.normal()
        assert expected_improvement(mean, var, best) >= max(mean - best, 0.0) - 1e-12


def test_ei_matches_monte_carlo_oracle(rng):
    # MC oracle: E[max(Y - best, 0)] over 10^6 normal draws
    cases = [(0.2, 0.5, 0.4), (-0.3, 1.2, 0.0), (1.0, 0.2, 0.5)]
    draws = rng.normal(size=1_000_000)
    for mean, var, best in cases:
        mc = np.mean(np.maximum(mean + math.sqrt(var) * draws - best, 0.0))
        assert expected_improvement(mean, var, best) == pytest.approx(mc, rel=0.01)


def test_ei_monotone_in_mean_and_variance():
    means = np.linspace(-1, 1, 30)
    ei = expected_improvement(means, np.full(30, 0.5), 0.0)
    assert np.all(np.diff(ei) > 0)
    variances = np.linspace(0.01, 2.0, 30)
    ei = expected_improvement(np.full(30, -0.5), variances, 0.0)   # mean < best
    assert np.all(np.diff(ei) > 0)


# -- cross-validated tau --------------------------------------------------------------

def test_cv_tau_recovers_monotone_signal(rng):
    xs = np.linspace(0, 1, 20)
    data = make_dataset(xs, (2 * xs + 1).tolist())
    assert cv_kendall_tau(data, 5) > 0.9


def test_cv_tau_near_zero_on_noise(rng):
    taus = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        xs = r.random(20)
        data = make_dataset(xs, r.normal(size=20).tolist())
        taus.append(cv_kendall_tau(data, 5, seed=seed))
    assert abs(np.median(taus)) < 0.3


def test_cv_tau_insufficient_data():
    with pytest.raises(InsufficientData):
        cv_kendall_tau(make_dataset([0.1, 0.2], [1, 2]), 5)


def test_tau_perfect_when_predictions_equal_targets():
    from cashtree.metrics import kendall_tau

    ys = [0.1, 0.5, 0.3, 0.9]
    assert kendall_tau(ys, ys) == 1.0


# -- algorithm prior --------------------------------------------------------------------

def test_prior_uniform_without_models(synth_space, rng):
    p = algorithm_prior({aid: None for aid in synth_space.algorithm_ids},
                        synth_space, 100, rng)
    assert np.allclose(p, 1 / 3)


def test_prior_softmax_arithmetic():
    # softmax of normalized means (1, 0) -> (e, 1)/(e+1)
    e = math.exp(1.0)
    expect = np.array([e / (e + 1), 1 / (e + 1)])
    assert expect[0] == pytest.approx(0.7311, abs=5e-5)
    v = np.array([1.0, 0.0])
    soft = np.exp(v - v.max()) / np.exp(v - v.max()).sum()
    assert np.allclose(soft, expect)


def test_prior_favors_better_algorithm(synth_space, rng):
    models = {}
    for aid, level in (("algoA", 0.9), ("algoB", 0.2), ("algoC", 0.4)):
        data = AlgoDataset(aid)
        for _ in range(12):
            cfg = sample_random(synth_space, aid, rng)
            data.append(encode(cfg, synth_space), level + 0.01 * rng.normal())
        models[aid] = fit(data, restarts=2, rng=rng)
    p = algorithm_prior(models, synth_space, 100, np.random.default_rng(0))
    assert p.sum() == pytest.approx(1.0)
    assert p[0] == max(p)


def test_prior_optimism_for_modelless(synth_space, rng):
    data = AlgoDataset("algoB")
    for _ in range(10):
        cfg = sample_random(synth_space, "algoB", rng)
        data.append(encode(cfg, synth_space), 0.9)
    models = {"algoA": None, "algoB": fit(data, restarts=2, rng=rng), "algoC": None}
    p = algorithm_prior(models, synth_space, 50, np.random.default_rng(1))
    # the single fitted algorithm min-max normalizes to 0; unexplored ones get 1
    assert p[0] > p[1] and p[2] > p[1]


def test_prior_permutation_equivariant(synth_space, rng):
    from cashtree.space import SearchSpace

    data = AlgoDataset("algoB")
    r = np.random.default_rng(5)
    for _ in range(10):
        cfg = sample_random(synth_space, "algoB", r)
        data.append(encode(cfg, synth_space), float(r.random()))
    model = fit(data, restarts=2, rng=r)
    models = {"algoA": None, "algoB": model, "algoC": None}

    permuted = SearchSpace(tuple(reversed(synth_space.algorithms)),
                           synth_space.task, synth_space.metric)
    p1 = algorithm_prior(models, synth_space, 64, np.random.default_rng(9))
    p2 = algorithm_prior(models, permuted, 64, np.random.default_rng(9))
    assert np.allclose(p1, p2[::-1])


def test_default_params_positive():
    p = default_params(3)
    assert np.all(p.cont_lengthscales > 0) and p.noise_variance > 0
