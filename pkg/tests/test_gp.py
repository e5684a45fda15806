"""Tests for the SE-ARD Gaussian-process regression core."""

from __future__ import annotations

import math

import numpy as np
import pytest

from aur import gp
from aur.errors import DuplicateInputError, InvalidInputError
from aur.gp import Dataset, GPHyperparams, GPModel, Normalization


def make_hyper(ls, sf2=1.0, sn2=0.0):
    return GPHyperparams(
        length_scales=np.asarray(ls, dtype=float),
        signal_variance=sf2,
        noise_variance=sn2,
    )


def identity_norm(dim):
    return Normalization(
        input_mean=np.zeros(dim), input_scale=np.ones(dim),
        target_mean=0.0, target_scale=1.0,
    )


def make_model(x, y, ls, sf2=1.0, sn2=0.0):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return GPModel(make_hyper(ls, sf2, sn2), identity_norm(x.shape[1]), x, np.asarray(y, float))


def random_dataset(rng, n=12, d=2):
    inputs = rng.uniform(-2, 2, size=(n, d + 1))
    deltas = np.column_stack([np.sin(inputs[:, : d]).sum(axis=1) + 0.1 * inputs[:, i] for i in range(d)])
    rewards = -np.sum(inputs**2, axis=1)
    return Dataset(inputs, deltas, rewards)


# ---------------------------------------------------------------------------
# kernel_eval
# ---------------------------------------------------------------------------

def test_kernel_diagonal_includes_noise():
    h = make_hyper([1.0, 1.0], sf2=1.0, sn2=0.1)
    a = np.array([0.3, -0.7])
    assert gp.kernel_eval(a, a, h, same_index=True) == pytest.approx(1.1)


def test_kernel_quadratic_form_two():
    # independent scalar evaluation of the exponential at quadratic form = 2
    h = make_hyper([1.0], sf2=1.0, sn2=0.0)
    a, b = np.array([0.0]), np.array([2.0])  # ((a-b)/l)^2 = 4? no: choose sqrt(2)
    b = np.array([math.sqrt(2.0)])
    expected = 1.0 * math.exp(-0.5 * 2.0)
    assert gp.kernel_eval(a, b, h) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.36788, abs=5e-6)


def test_kernel_decay_limit():
    h = make_hyper([1.0, 1.0])
    a = np.zeros(2)
    b = np.array([50.0, 50.0])
    assert gp.kernel_eval(a, b, h) == pytest.approx(0.0, abs=1e-300)


def test_kernel_symmetry():
    rng = np.random.default_rng(0)
    h = make_hyper(rng.uniform(0.5, 2.0, 3), sf2=1.7, sn2=0.05)
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert gp.kernel_eval(a, b, h) == pytest.approx(gp.kernel_eval(b, a, h), rel=1e-14)


def test_kernel_rejects_nonfinite():
    h = make_hyper([1.0])
    with pytest.raises(InvalidInputError):
        gp.kernel_eval(np.array([np.nan]), np.array([0.0]), h)
    with pytest.raises(InvalidInputError):
        gp.kernel_eval(np.array([0.0]), np.array([np.inf]), h)


def test_hyperparams_validation():
    with pytest.raises(InvalidInputError):
        make_hyper([0.0])
    with pytest.raises(InvalidInputError):
        make_hyper([1.0], sf2=-1.0)
    with pytest.raises(InvalidInputError):
        make_hyper([1.0], sn2=-0.1)


# ---------------------------------------------------------------------------
# log marginal likelihood
# ---------------------------------------------------------------------------

def test_lml_single_point_closed_form():
    # closed-form 1x1 case: y=0 -> -0.5*log(sf2+sn2) - 0.5*log(2*pi)
    sf2, sn2 = 1.3, 0.2
    model = make_model([[0.5]], [0.0], ls=[1.0], sf2=sf2, sn2=sn2)
    expected = -0.5 * math.log(sf2 + sn2) - 0.5 * math.log(2 * math.pi)
    value, _ = model.log_marginal_likelihood()
    assert value == pytest.approx(expected, abs=1e-6)


def finite_diff_grad(xn, yn, theta, h=1e-5):
    grad = np.zeros_like(theta)
    for j in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        vp, _ = gp._lml_and_grad(xn, yn, tp)
        vm, _ = gp._lml_and_grad(xn, yn, tm)
        grad[j] = (vp - vm) / (2 * h)
    return grad


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_lml_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    xn = rng.normal(size=(5, 2))
    yn = rng.normal(size=5)
    theta = np.concatenate([np.log(rng.uniform(0.5, 2.0, 2)),
                            [math.log(rng.uniform(0.5, 2.0)), math.log(rng.uniform(1e-3, 1e-1))]])
    _, analytic = gp._lml_and_grad(xn, yn, theta)
    numeric = finite_diff_grad(xn, yn, theta)
    assert np.allclose(analytic, numeric, rtol=1e-4, atol=1e-6)


def test_lml_zero_targets_leaves_only_variance_terms():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 2))
    model = make_model(x, np.zeros(6), ls=[0.8, 1.3], sf2=2.0, sn2=0.05)
    value, _ = model.log_marginal_likelihood()
    # data-fit term vanishes: only the log-determinant and the constant remain
    k = np.array([[gp.kernel_eval(a, b, model.hyperparams, same_index=(i == j))
                   for j, b in enumerate(x)] for i, a in enumerate(x)])
    k[np.diag_indices_from(k)] += model.jitter
    _, logdet = np.linalg.slogdet(k)
    expected = -0.5 * logdet - 0.5 * 6 * math.log(2 * math.pi)
    assert value == pytest.approx(expected, rel=1e-9)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def test_fit_interpolates_linear_function():
    rng = np.random.default_rng(5)
    inputs = rng.uniform(-1, 1, size=(10, 3))
    y = 2.0 * inputs[:, 0] - inputs[:, 1] + 0.5 * inputs[:, 2]
    ds = Dataset(inputs, y[:, None], np.zeros(10))
    model = gp.fit(ds, 0, np.random.default_rng(0), restarts=3)
    pred, _ = model.predict(inputs)
    assert np.max(np.abs(pred - y)) < 1e-6


def brute_force_gp_rmse(x_train, y_train, x_test, y_test, ls, sf2, sn2):
    # independent fixed-hyperparameter GP with plain matrix inversion
    def k(a, b):
        return sf2 * np.exp(-0.5 * ((a[:, None] - b[None, :]) / ls) ** 2)

    kk = k(x_train, x_train) + sn2 * np.eye(len(x_train))
    ks = k(x_test, x_train)
    pred = ks @ np.linalg.inv(kk) @ y_train
    return float(np.sqrt(np.mean((pred - y_test) ** 2)))


def test_fit_sin_beats_tolerance():
    rng = np.random.default_rng(6)
    x = np.linspace(-3, 3, 10)
    y = np.sin(x)
    ds = Dataset(x[:, None], y[:, None], np.zeros(10))
    model = gp.fit(ds, 0, np.random.default_rng(1))
    x_test = np.linspace(-3, 3, 100)
    pred, _ = model.predict(x_test[:, None])
    rmse = float(np.sqrt(np.mean((pred - np.sin(x_test)) ** 2)))
    oracle = brute_force_gp_rmse(x, y, x_test, np.sin(x_test), ls=1.0, sf2=1.0, sn2=1e-6)
    assert oracle < 0.05
    assert rmse < 0.05


def test_fit_single_restart_reproducible():
    ds = random_dataset(np.random.default_rng(7))
    m1 = gp.fit(ds, 0, np.random.default_rng(42), restarts=1, iters=50)
    m2 = gp.fit(ds, 0, np.random.default_rng(42), restarts=1, iters=50)
    assert np.array_equal(m1.hyperparams.length_scales, m2.hyperparams.length_scales)
    assert m1.hyperparams.signal_variance == m2.hyperparams.signal_variance
    assert m1.hyperparams.noise_variance == m2.hyperparams.noise_variance


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def test_predict_training_point_noise_free():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, size=(6, 2))
    y = np.cos(x).sum(axis=1)
    model = make_model(x, y, ls=[1.0, 1.0], sf2=1.0, sn2=0.0)
    mean, std = model.predict(x[3])
    assert mean == pytest.approx(y[3], abs=1e-6)
    assert std < 1e-3


def test_predict_far_from_data_reverts_to_prior():
    norm = Normalization(np.zeros(1), np.ones(1), target_mean=5.0, target_scale=2.0)
    h = make_hyper([1.0], sf2=1.0, sn2=0.0)
    model = GPModel(h, norm, np.array([[0.0]]), np.array([5.0]))
    mean, std = model.predict(np.array([100.0]))
    assert mean == pytest.approx(5.0, abs=1e-10)      # prior mean, de-normalized
    assert std == pytest.approx(2.0, rel=1e-6)        # sigma_f de-normalized


def test_predict_matches_two_point_closed_form():
    # explicit 2x2 matrix-inversion oracle for a 1D two-point model
    x = np.array([[0.0], [1.0]])
    y = np.array([0.5, -1.0])
    ls, sf2, sn2 = 0.7, 1.4, 0.01
    model = make_model(x, y, ls=[ls], sf2=sf2, sn2=sn2)
    xq = 0.3

    def kf(a, b):
        return sf2 * math.exp(-0.5 * ((a - b) / ls) ** 2)

    k11 = kf(0, 0) + sn2 + model.jitter
    k22 = kf(1, 1) + sn2 + model.jitter
    k12 = kf(0, 1)
    det = k11 * k22 - k12 * k12
    inv = np.array([[k22, -k12], [-k12, k11]]) / det
    ks = np.array([kf(xq, 0), kf(xq, 1)])
    mean_oracle = ks @ inv @ y
    var_oracle = kf(xq, xq) - ks @ inv @ ks
    mean, std = model.predict(np.array([xq]))
    assert mean == pytest.approx(mean_oracle, rel=1e-10)
    assert std == pytest.approx(math.sqrt(var_oracle), rel=1e-8)


def test_predict_batch_matches_single():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(8, 3))
    y = rng.normal(size=8)
    model = make_model(x, y, ls=[1.0, 0.5, 2.0], sf2=1.2, sn2=0.05)
    queries = rng.normal(size=(5, 3))
    means, stds = model.predict(queries)
    for i, q in enumerate(queries):
        m, s = model.predict(q)
        assert m == pytest.approx(means[i], rel=1e-12)
        assert s == pytest.approx(stds[i], rel=1e-12)


# ---------------------------------------------------------------------------
# update
# ---------------------------------------------------------------------------

def test_update_interpolates_new_point():
    rng = np.random.default_rng(10)
    x = rng.uniform(-1, 1, size=(5, 2))
    y = x.sum(axis=1)
    model = make_model(x, y, ls=[1.0, 1.0], sf2=1.0, sn2=0.0)
    x_new = np.array([0.9, -0.9])
    updated = gp.update(model, x_new, 1.7)
    mean, _ = updated.predict(x_new)
    assert mean == pytest.approx(1.7, abs=1e-5)


def test_update_reduces_std_at_new_point():
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(5, 2))
    y = x.prod(axis=1)
    model = make_model(x, y, ls=[1.0, 1.0], sf2=1.0, sn2=0.01)
    x_new = np.array([0.8, 0.8])
    _, std_before = model.predict(x_new)
    updated = gp.update(model, x_new, 0.64)
    _, std_after = updated.predict(x_new)
    assert std_after < std_before


def test_update_with_reoptimize_equals_fresh_fit():
    rng = np.random.default_rng(12)
    inputs = rng.uniform(-1, 1, size=(8, 2))
    y = np.sin(inputs[:, 0]) + inputs[:, 1]
    ds = Dataset(inputs, y[:, None], np.zeros(8))
    model = gp.fit(ds, 0, np.random.default_rng(3), restarts=2, iters=60)
    x_new = np.array([0.5, -0.5])
    y_new = math.sin(0.5) - 0.5
    updated = gp.update(model, x_new, y_new, rng=np.random.default_rng(99),
                        reoptimize=True, restarts=2)
    ds2 = Dataset(np.vstack([inputs, x_new]), np.append(y, y_new)[:, None], np.zeros(9))
    fresh = gp.fit(ds2, 0, np.random.default_rng(99), restarts=2)
    queries = rng.uniform(-1, 1, size=(10, 2))
    mu_u, su_u = updated.predict(queries)
    mu_f, su_f = fresh.predict(queries)
    assert np.allclose(mu_u, mu_f, atol=1e-10)
    assert np.allclose(su_u, su_f, atol=1e-10)


def test_update_rejects_duplicate():
    model = make_model([[0.0, 0.0], [1.0, 1.0]], [0.0, 1.0], ls=[1.0, 1.0])
    with pytest.raises(DuplicateInputError):
        gp.update(model, np.array([1.0, 1.0]), 2.0)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

def test_dataset_append_and_duplicate_check():
    ds = Dataset(np.zeros((1, 3)), np.zeros((1, 2)), np.zeros(1))
    ds.append(np.array([1.0, 2.0, 3.0]), np.array([0.1, 0.2]), -1.0)
    assert len(ds) == 2
    with pytest.raises(DuplicateInputError):
        ds.append(np.array([1.0, 2.0, 3.0]), np.zeros(2), 0.0)


def test_dataset_target_columns():
    ds = Dataset(np.zeros((2, 3)), np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([9.0, 8.0]))
    assert np.array_equal(ds.target_column(1), np.array([2.0, 4.0]))
    assert np.array_equal(ds.target_column(2), np.array([9.0, 8.0]))
    with pytest.raises(InvalidInputError):
        ds.target_column(3)


# ---------------------------------------------------------------------------
# invariants and properties
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_kernel_matrix_symmetric_and_factorizable(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(3, 20), rng.integers(1, 5)
    x = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
    h = make_hyper(rng.uniform(0.1, 5.0, d), sf2=rng.uniform(0.1, 5), sn2=0.0)
    k = gp._kernel_matrix(x, x, h)
    assert np.allclose(k, k.T, atol=1e-12)
    L, _ = gp._factorize(k)  # must succeed after jitter
    assert np.all(np.isfinite(L))


@pytest.mark.parametrize("seed", range(3))
def test_predictive_variance_nonnegative(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    model = make_model(x, y, ls=rng.uniform(0.3, 2.0, 2), sf2=1.0, sn2=1e-4)
    queries = rng.normal(size=(200, 2)) * 2
    _, stds = model.predict(queries)
    assert np.all(stds >= 0)
    # unclamped variance stays above -1e-8 * sf2
    xqn = model.normalization.normalize_inputs(queries)
    k_star = gp._kernel_matrix(xqn, model._xn, model.hyperparams)
    from scipy.linalg import solve_triangular
    v = solve_triangular(model._L, k_star.T, lower=True, check_finite=False)
    raw_var = model.hyperparams.signal_variance - (v**2).sum(axis=0)
    assert np.all(raw_var >= -1e-8 * model.hyperparams.signal_variance)


def test_prediction_invariant_to_training_order():
    rng = np.random.default_rng(13)
    x = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    model = make_model(x, y, ls=[1.0, 0.7], sf2=1.1, sn2=0.01)
    perm = rng.permutation(12)
    shuffled = make_model(x[perm], y[perm], ls=[1.0, 0.7], sf2=1.1, sn2=0.01)
    queries = rng.normal(size=(20, 2))
    m1, s1 = model.predict(queries)
    m2, s2 = shuffled.predict(queries)
    assert np.allclose(m1, m2, atol=1e-10)
    assert np.allclose(s1, s2, atol=1e-10)


def test_normalization_round_trip():
    rng = np.random.default_rng(14)
    y = rng.normal(size=50) * 7 + 3
    norm = Normalization.from_data(rng.normal(size=(50, 2)), y)
    assert np.allclose(norm.denormalize_targets(norm.normalize_targets(y)), y, atol=1e-12)


def test_model_serialization_round_trip():
    rng = np.random.default_rng(15)
    ds = random_dataset(rng)
    model = gp.fit(ds, 0, np.random.default_rng(2), restarts=1, iters=40)
    restored = GPModel.from_dict(model.to_dict())
    queries = rng.normal(size=(6, ds.inputs.shape[1]))
    m1, s1 = model.predict(queries)
    m2, s2 = restored.predict(queries)
    assert np.array_equal(m1, m2)
    assert np.array_equal(s1, s2)
