"""Gaussian-process regression with a squared-exponential ARD kernel.

One independent GP per target dimension (state deltas and reward). Inputs and
targets are standardized per column before training, so fitted length scales
and the predictive std consumed by the confidence index live in normalized
units. Hyperparameters are trained by maximizing the log marginal likelihood
with Adam in log-space over several random restarts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import DuplicateInputError, FitError, InvalidInputError, NumericalError

# Jitter added to the kernel diagonal, relative to mean(diag K); escalates
# tenfold on factorization failure up to the max factor.
JITTER_START_FACTOR = 1e-8
JITTER_MAX_FACTOR = 1e-2

# Noise variance floor applied by fit(); manual construction may use 0.
NOISE_FLOOR = 1e-8

# Reject points closer than this in normalized input space.
DUPLICATE_TOL = 1e-9

# Log-space bounds keeping the optimizer out of overflow territory while
# leaving room for the smooth-data ridge (large length scales with large
# signal variance, which is how an SE kernel represents near-linear targets).
_LOG_LS_BOUNDS = (math.log(1e-3), math.log(1e3))
_LOG_SF2_BOUNDS = (math.log(1e-6), math.log(1e5))
_LOG_SN2_BOUNDS = (math.log(NOISE_FLOOR), math.log(1e1))


@dataclass(frozen=True)
class GPHyperparams:
    """SE-ARD kernel hyperparameters (in normalized input/target units)."""

    length_scales: np.ndarray
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=float)
        object.__setattr__(self, "length_scales", ls)
        if ls.ndim != 1 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise InvalidInputError("length scales must be finite and strictly positive")
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise InvalidInputError("signal variance must be finite and positive")
        if not (np.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise InvalidInputError("noise variance must be finite and non-negative")

    def to_log_vector(self) -> np.ndarray:
        sn2 = max(self.noise_variance, NOISE_FLOOR)
        return np.concatenate(
            [np.log(self.length_scales), [math.log(self.signal_variance), math.log(sn2)]]
        )

    @staticmethod
    def from_log_vector(theta: np.ndarray) -> "GPHyperparams":
        theta = np.asarray(theta, dtype=float)
        return GPHyperparams(
            length_scales=np.exp(theta[:-2]),
            signal_variance=float(np.exp(theta[-2])),
            noise_variance=float(np.exp(theta[-1])),
        )


@dataclass(frozen=True)
class Normalization:
    """Per-column standardization constants for inputs and the target."""

    input_mean: np.ndarray
    input_scale: np.ndarray
    target_mean: float
    target_scale: float

    @staticmethod
    def from_data(inputs: np.ndarray, targets: np.ndarray) -> "Normalization":
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        targets = np.asarray(targets, dtype=float)
        in_scale = inputs.std(axis=0)
        in_scale = np.where(in_scale > 0, in_scale, 1.0)
        t_scale = float(targets.std())
        if t_scale <= 0:
            t_scale = 1.0
        return Normalization(
            input_mean=inputs.mean(axis=0),
            input_scale=in_scale,
            target_mean=float(targets.mean()),
            target_scale=t_scale,
        )

    def normalize_inputs(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.input_mean) / self.input_scale

    def normalize_targets(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_scale

    def denormalize_targets(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.target_scale + self.target_mean


class Dataset:
    """Rows of combined state-action inputs with state-delta and reward targets.

    Appending a point closer than DUPLICATE_TOL (normalized Euclidean
    distance) to an existing row raises DuplicateInputError.
    """

    def __init__(self, inputs: np.ndarray, state_deltas: np.ndarray, rewards: np.ndarray):
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=float)).copy()
        self.state_deltas = np.atleast_2d(np.asarray(state_deltas, dtype=float)).copy()
        self.rewards = np.asarray(rewards, dtype=float).reshape(-1).copy()
        n = self.inputs.shape[0]
        if self.state_deltas.shape[0] != n or self.rewards.shape[0] != n:
            raise InvalidInputError("inputs, state_deltas and rewards must align row-wise")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def state_dim(self) -> int:
        return self.state_deltas.shape[1]

    @property
    def n_targets(self) -> int:
        return self.state_dim + 1

    def target_column(self, column: int) -> np.ndarray:
        """Column 0..D-1 selects a state-delta dimension; column D the reward."""
        if column == self.state_dim:
            return self.rewards
        if 0 <= column < self.state_dim:
            return self.state_deltas[:, column]
        raise InvalidInputError(f"target column {column} out of range")

    def duplicate_distance(self, x: np.ndarray) -> float:
        """Smallest normalized Euclidean distance from x to an existing row."""
        scale = self.inputs.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        diff = (self.inputs - np.asarray(x, dtype=float)) / scale
        return float(np.sqrt((diff**2).sum(axis=1)).min())

    def is_duplicate(self, x: np.ndarray) -> bool:
        return len(self) > 0 and self.duplicate_distance(x) < DUPLICATE_TOL

    def append(self, x: np.ndarray, delta: np.ndarray, reward: float) -> None:
        x = np.asarray(x, dtype=float).reshape(-1)
        if len(self) > 0:
            dist = self.duplicate_distance(x)
            if dist < DUPLICATE_TOL:
                raise DuplicateInputError(
                    f"new input within {dist:.3e} (< {DUPLICATE_TOL}) of an existing row"
                )
        self.inputs = np.vstack([self.inputs, x])
        self.state_deltas = np.vstack([self.state_deltas, np.asarray(delta, dtype=float)])
        self.rewards = np.append(self.rewards, float(reward))

    def copy(self) -> "Dataset":
        return Dataset(self.inputs, self.state_deltas, self.rewards)


def kernel_eval(a: np.ndarray, b: np.ndarray, h: GPHyperparams, same_index: bool = False) -> float:
    """SE-ARD covariance between two input vectors.

    sigma_f^2 * exp(-0.5 * sum_i ((a_i - b_i) / l_i)^2), plus the noise
    variance when both arguments refer to the same training index.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidInputError("kernel inputs must be finite")
    if a.shape != b.shape or a.shape[0] != h.length_scales.shape[0]:
        raise InvalidInputError("kernel inputs must match the hyperparameter dimensionality")
    quad = float(np.sum(((a - b) / h.length_scales) ** 2))
    value = h.signal_variance * math.exp(-0.5 * quad)
    if same_index:
        value += h.noise_variance
    return value


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, h: GPHyperparams) -> np.ndarray:
    """Noise-free SE-ARD kernel matrix between row sets (normalized inputs)."""
    sa = xa / h.length_scales
    sb = xb / h.length_scales
    sq = (
        (sa**2).sum(axis=1)[:, None]
        + (sb**2).sum(axis=1)[None, :]
        - 2.0 * sa @ sb.T
    )
    np.maximum(sq, 0.0, out=sq)
    return h.signal_variance * np.exp(-0.5 * sq)


def _factorize(k_noisy: np.ndarray):
    """Cholesky, adding escalating diagonal jitter only on failure.

    Returns (L, jitter_used). Jitter starts at JITTER_START_FACTOR times the
    mean diagonal and escalates tenfold up to JITTER_MAX_FACTOR times it.
    """
    n = k_noisy.shape[0]
    mean_diag = float(np.mean(np.diag(k_noisy)))
    if not np.isfinite(mean_diag) or mean_diag <= 0:
        raise NumericalError("kernel matrix has a non-positive diagonal")
    jitter = 0.0
    max_jitter = JITTER_MAX_FACTOR * mean_diag
    while True:
        try:
            ky = k_noisy if jitter == 0.0 else k_noisy + jitter * np.eye(n)
            L = cholesky(ky, lower=True, check_finite=False)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START_FACTOR * mean_diag if jitter == 0.0 else jitter * 10.0
            if jitter > max_jitter:
                raise NumericalError(
                    f"Cholesky failed with jitter escalated to {jitter:.3e} "
                    f"(mean diag {mean_diag:.3e})"
                )


class GPModel:
    """A trained single-output GP. Immutable after construction;
    update() returns a new model."""

    def __init__(self, hyperparams: GPHyperparams, normalization: Normalization,
                 inputs: np.ndarray, targets: np.ndarray):
        self.hyperparams = hyperparams
        self.normalization = normalization
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=float)).copy()
        self.targets = np.asarray(targets, dtype=float).reshape(-1).copy()
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise InvalidInputError("inputs and targets must align row-wise")
        self._xn = normalization.normalize_inputs(self.inputs)
        self._yn = normalization.normalize_targets(self.targets)
        k = _kernel_matrix(self._xn, self._xn, hyperparams)
        k[np.diag_indices_from(k)] += hyperparams.noise_variance
        self._L, self.jitter = _factorize(k)
        self._alpha = solve_triangular(
            self._L.T,
            solve_triangular(self._L, self._yn, lower=True, check_finite=False),
            check_finite=False,
        )

    @property
    def n_train(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def _query_matrix(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xq = np.atleast_2d(x)
        if xq.shape[1] != self.input_dim:
            raise InvalidInputError(
                f"query has {xq.shape[1]} columns, model expects {self.input_dim}"
            )
        if not np.all(np.isfinite(xq)):
            raise InvalidInputError("query inputs must be finite")
        return xq, single

    def predict_norm(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and std in normalized target units."""
        xq, single = self._query_matrix(x)
        xqn = self.normalization.normalize_inputs(xq)
        k_star = _kernel_matrix(xqn, self._xn, self.hyperparams)
        mean = k_star @ self._alpha
        v = solve_triangular(self._L, k_star.T, lower=True, check_finite=False)
        var = self.hyperparams.signal_variance - (v**2).sum(axis=0)
        np.maximum(var, 0.0, out=var)
        std = np.sqrt(var)
        if single:
            return mean[0], std[0]
        return mean, std

    def predict(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and std in target units."""
        mean_n, std_n = self.predict_norm(x)
        mean = self.normalization.denormalize_targets(mean_n)
        std = std_n * self.normalization.target_scale
        return mean, std

    def log_marginal_likelihood(self) -> tuple[float, np.ndarray]:
        """Value and gradient w.r.t. log hyperparameters [log l_i, log sf2, log sn2]."""
        theta = self.hyperparams.to_log_vector()
        value, grad = _lml_and_grad(self._xn, self._yn, theta)
        return value, grad

    def to_dict(self) -> dict:
        return {
            "hyperparams": {
                "length_scales": self.hyperparams.length_scales.tolist(),
                "signal_variance": self.hyperparams.signal_variance,
                "noise_variance": self.hyperparams.noise_variance,
            },
            "normalization": {
                "input_mean": self.normalization.input_mean.tolist(),
                "input_scale": self.normalization.input_scale.tolist(),
                "target_mean": self.normalization.target_mean,
                "target_scale": self.normalization.target_scale,
            },
            "inputs": self.inputs.tolist(),
            "targets": self.targets.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "GPModel":
        h = GPHyperparams(
            length_scales=np.asarray(d["hyperparams"]["length_scales"], dtype=float),
            signal_variance=float(d["hyperparams"]["signal_variance"]),
            noise_variance=float(d["hyperparams"]["noise_variance"]),
        )
        norm = Normalization(
            input_mean=np.asarray(d["normalization"]["input_mean"], dtype=float),
            input_scale=np.asarray(d["normalization"]["input_scale"], dtype=float),
            target_mean=float(d["normalization"]["target_mean"]),
            target_scale=float(d["normalization"]["target_scale"]),
        )
        return GPModel(h, norm, np.asarray(d["inputs"], float), np.asarray(d["targets"], float))


def _lml_and_grad(xn: np.ndarray, yn: np.ndarray, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and gradient at log-hyperparams theta."""
    h = GPHyperparams.from_log_vector(theta)
    n = xn.shape[0]
    k_se = _kernel_matrix(xn, xn, h)
    k_noisy = k_se.copy()
    k_noisy[np.diag_indices_from(k_noisy)] += h.noise_variance
    L, _ = _factorize(k_noisy)
    alpha = solve_triangular(
        L.T, solve_triangular(L, yn, lower=True, check_finite=False), check_finite=False
    )
    lml = (
        -0.5 * float(yn @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    # d lml / d theta_j = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta_j)
    inv_l = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    k_inv = inv_l.T @ inv_l
    a = np.outer(alpha, alpha) - k_inv
    ak = a * k_se
    m = xn.shape[1]
    grad = np.empty(m + 2)
    for i in range(m):
        di = ((xn[:, i][:, None] - xn[:, i][None, :]) / h.length_scales[i]) ** 2
        grad[i] = 0.5 * float(np.sum(ak * di))
    grad[m] = 0.5 * float(np.sum(ak))
    grad[m + 1] = 0.5 * h.noise_variance * float(np.trace(a))
    return lml, grad


def log_marginal_likelihood(model: GPModel) -> tuple[float, np.ndarray]:
    return model.log_marginal_likelihood()


def _clip_theta(theta: np.ndarray) -> np.ndarray:
    out = theta.copy()
    out[:-2] = np.clip(out[:-2], *_LOG_LS_BOUNDS)
    out[-2] = np.clip(out[-2], *_LOG_SF2_BOUNDS)
    out[-1] = np.clip(out[-1], *_LOG_SN2_BOUNDS)
    return out


def _adam_maximize(xn, yn, theta0, iters: int, lr: float) -> tuple[np.ndarray, float]:
    """Adam ascent on the log marginal likelihood; returns the best point seen.

    The step size decays linearly to a tenth of `lr`, giving long early
    travel in log-space and fine late convergence.
    """
    theta = _clip_theta(np.asarray(theta0, dtype=float))
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_theta = theta.copy()
    best_val = -np.inf
    for it in range(1, iters + 1):
        val, grad = _lml_and_grad(xn, yn, theta)
        if val > best_val:
            best_val, best_theta = val, theta.copy()
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad**2
        m_hat = m / (1 - beta1**it)
        v_hat = v / (1 - beta2**it)
        step = lr * (1.0 - 0.9 * (it - 1) / iters)
        theta = _clip_theta(theta + step * m_hat / (np.sqrt(v_hat) + eps))
    val, _ = _lml_and_grad(xn, yn, theta)
    if val > best_val:
        best_val, best_theta = val, theta
    return best_theta, best_val


def _random_theta(rng: np.random.Generator, input_dim: int) -> np.ndarray:
    log_ls = rng.uniform(math.log(0.1), math.log(10.0), size=input_dim)
    log_sf2 = rng.uniform(math.log(0.1), math.log(10.0))
    log_sn2 = rng.uniform(math.log(1e-6), math.log(1e-2))
    return np.concatenate([log_ls, [log_sf2, log_sn2]])


def fit(
    data: Dataset,
    target_column: int,
    rng: np.random.Generator,
    restarts: int = 5,
    iters: int = 200,
    lr: float = 0.25,
    initial: GPHyperparams | None = None,
) -> GPModel:
    """Fit one target dimension by maximizing the log marginal likelihood.

    Runs `restarts` optimizations from random log-space initializations
    (when `initial` is given it seeds the first restart) and keeps the best.
    """
    if len(data) < 1:
        raise InvalidInputError("cannot fit an empty dataset")
    targets = data.target_column(target_column)
    norm = Normalization.from_data(data.inputs, targets)
    xn = norm.normalize_inputs(data.inputs)
    yn = norm.normalize_targets(targets)
    input_dim = data.inputs.shape[1]

    best_theta, best_val = None, -np.inf
    failures = []
    for r in range(max(restarts, 1)):
        if r == 0 and initial is not None:
            theta0 = initial.to_log_vector()
        else:
            theta0 = _random_theta(rng, input_dim)
        try:
            theta, val = _adam_maximize(xn, yn, theta0, iters=iters, lr=lr)
        except NumericalError as exc:
            failures.append(f"restart {r} from {np.round(theta0, 3).tolist()}: {exc}")
            continue
        if val > best_val:
            best_theta, best_val = theta, val
    if best_theta is None:
        raise FitError("all restarts failed numerically:\n" + "\n".join(failures))
    h = GPHyperparams.from_log_vector(best_theta)
    return GPModel(h, norm, data.inputs, targets)


def predict(model: GPModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return model.predict(x)


def update(
    model: GPModel,
    new_input: np.ndarray,
    new_target: float,
    rng: np.random.Generator | None = None,
    reoptimize: bool = False,
    restarts: int = 5,
) -> GPModel:
    """Return a new model incorporating one more training point.

    With reoptimize=True this is a fresh fit on the augmented data;
    otherwise hyperparameters and normalization are retained and only the
    kernel factorization is rebuilt.
    """
    new_input = np.asarray(new_input, dtype=float).reshape(-1)
    scale = model.inputs.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    dist = float(np.sqrt((((model.inputs - new_input) / scale) ** 2).sum(axis=1)).min())
    if dist < DUPLICATE_TOL:
        raise DuplicateInputError(
            f"new input within {dist:.3e} (< {DUPLICATE_TOL}) of an existing training point"
        )
    inputs = np.vstack([model.inputs, new_input])
    targets = np.append(model.targets, float(new_target))
    if reoptimize:
        deltas = targets[:, None]  # single-column carrier for the shared fit path
        ds = Dataset(inputs, deltas, np.zeros(len(targets)))
        if rng is None:
            raise InvalidInputError("reoptimize requires an rng")
        return fit(ds, 0, rng, restarts=restarts)
    return GPModel(model.hyperparams, model.normalization, inputs, targets)
