"""Space-filling designs and input-density estimation.

Latin hypercube sampling over a bounded state-action box (uniform or
truncated-normal marginals), Monte-Carlo harvesting of state-action pairs
from virtual-environment rollouts, and a product-Gaussian kernel density
estimator with per-dimension Silverman bandwidths.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import truncnorm

from .errors import InvalidInputError

log = logging.getLogger(__name__)

# Bandwidth floor relative to a dimension's bound range.
BANDWIDTH_FLOOR_FACTOR = 1e-3


@dataclass(frozen=True)
class Dim:
    """One bounded dimension with its sampling distribution."""

    lower: float
    upper: float
    dist: str = "uniform"  # "uniform" | "truncnorm"
    mean: float = 0.0      # truncnorm location
    sigma: float = 1.0     # truncnorm scale

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise InvalidInputError("dimension bounds must be finite")
        if self.lower >= self.upper:
            raise InvalidInputError(f"lower bound {self.lower} must be < upper {self.upper}")
        if self.dist not in ("uniform", "truncnorm"):
            raise InvalidInputError(f"unknown distribution tag {self.dist!r}")
        if self.dist == "truncnorm" and self.sigma <= 0:
            raise InvalidInputError("truncnorm sigma must be positive")

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF mapping uniform [0,1) draws into this dimension."""
        u = np.asarray(u, dtype=float)
        if self.dist == "uniform":
            return self.lower + u * (self.upper - self.lower)
        a = (self.lower - self.mean) / self.sigma
        b = (self.upper - self.mean) / self.sigma
        return truncnorm.ppf(u, a, b, loc=self.mean, scale=self.sigma)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dist == "uniform":
            return np.clip((x - self.lower) / (self.upper - self.lower), 0.0, 1.0)
        a = (self.lower - self.mean) / self.sigma
        b = (self.upper - self.mean) / self.sigma
        return truncnorm.cdf(x, a, b, loc=self.mean, scale=self.sigma)


class SpaceBounds:
    """Per-dimension bounds and marginal distributions for a sampling box."""

    def __init__(self, dims: list[Dim]):
        if not dims:
            raise InvalidInputError("SpaceBounds needs at least one dimension")
        self.dims = list(dims)

    def __len__(self) -> int:
        return len(self.dims)

    @property
    def lowers(self) -> np.ndarray:
        return np.array([d.lower for d in self.dims])

    @property
    def uppers(self) -> np.ndarray:
        return np.array([d.upper for d in self.dims])

    @property
    def ranges(self) -> np.ndarray:
        return self.uppers - self.lowers

    def clip(self, points: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(points, dtype=float), self.lowers, self.uppers)

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lowers) and np.all(p <= self.uppers))

    def uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Plain independent draws from each marginal (no stratification)."""
        cols = [d.ppf(rng.uniform(0.0, 1.0, size=n)) for d in self.dims]
        return np.column_stack(cols)

    def to_dict(self) -> dict:
        return {
            "dims": [
                {"lower": d.lower, "upper": d.upper, "dist": d.dist,
                 "mean": d.mean, "sigma": d.sigma}
                for d in self.dims
            ]
        }

    @staticmethod
    def from_dict(d: dict) -> "SpaceBounds":
        return SpaceBounds([Dim(**dd) for dd in d["dims"]])


def lhs_sample(bounds: SpaceBounds, n: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube sample of n points.

    Each dimension is split into n equal-probability strata under its
    marginal distribution; every stratum receives exactly one point at a
    uniform-random within-stratum position, and strata are assigned to rows
    by an independent permutation per dimension.
    """
    if n < 1:
        raise InvalidInputError("need at least one sample")
    cols = []
    for d in bounds.dims:
        perm = rng.permutation(n)
        u = (perm + rng.uniform(0.0, 1.0, size=n)) / n
        cols.append(d.ppf(u))
    return np.column_stack(cols)


def generate_mc_samples(
    venv,
    n: int,
    horizon: int,
    rng: np.random.Generator,
    policy=None,
    mode: str = "rollout",
) -> np.ndarray:
    """Harvest n state-action rows for confidence evaluation.

    In "rollout" mode (the default), episodes are rolled through the virtual
    environment from its reset distribution with uniform-random actions
    (or actions from `policy(state, rng)` when given), and the visited
    (state, action) pairs are recorded; state parts are clipped to the
    bounds so every row remains probe-able. In "uniform" mode rows are drawn
    independently from the bounds instead (the ablation baseline).
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be at least one step")
    bounds = venv.spec.bounds
    if mode == "uniform":
        return bounds.uniform(n, rng)
    if mode != "rollout":
        raise InvalidInputError(f"unknown MC generation mode {mode!r}")

    d = venv.spec.obs_dim
    rows = np.empty((n, len(bounds)))
    filled = 0
    while filled < n:
        state = venv.reset_state(rng)
        for _ in range(horizon):
            if policy is not None:
                action = np.asarray(policy(state, rng), dtype=float)
            else:
                action = venv.spec.random_action_encoded(rng)
            rows[filled, :d] = state
            rows[filled, d:] = action
            filled += 1
            if filled >= n:
                break
            state = venv.step_mean(state, action)
    lo, hi = bounds.lowers, bounds.uppers
    rows[:, :d] = np.clip(rows[:, :d], lo[:d], hi[:d])
    return rows


@dataclass(frozen=True)
class KDEModel:
    """Product-Gaussian KDE over support samples with per-dimension bandwidths."""

    samples: np.ndarray     # M x K
    bandwidths: np.ndarray  # K


def kde_fit(samples: np.ndarray, bounds: SpaceBounds | None = None) -> KDEModel:
    """Fit a product-Gaussian KDE with Silverman bandwidths.

    h_i = 1.06 * std_i * M^(-1/5), floored at a small fraction of the
    dimension's bound range (or of the sample range when no bounds are
    given) so zero-variance dimensions stay usable.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    m = samples.shape[0]
    if m < 2:
        raise InvalidInputError("KDE needs at least two samples")
    stds = samples.std(axis=0)
    h = 1.06 * stds * m ** (-0.2)
    if bounds is not None:
        ranges = bounds.ranges
    else:
        ranges = samples.max(axis=0) - samples.min(axis=0)
        ranges = np.where(ranges > 0, ranges, 1.0)
    floor = BANDWIDTH_FLOOR_FACTOR * ranges
    if np.any(h < floor):
        for i in np.nonzero(h < floor)[0]:
            log.warning(
                "KDE bandwidth for dimension %d floored at %.3e (Silverman %.3e)",
                i, floor[i], h[i],
            )
    return KDEModel(samples=samples.copy(), bandwidths=np.maximum(h, floor))


def kde_eval(model: KDEModel, points: np.ndarray) -> np.ndarray:
    """Density at one point or a batch of points (mean of product kernels)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("KDE query points must be finite")
    h = model.bandwidths
    # quadratic forms accumulated per dimension to bound peak memory
    quad = np.zeros((pts.shape[0], model.samples.shape[0]))
    for i in range(pts.shape[1]):
        diff = (pts[:, i][:, None] - model.samples[:, i][None, :]) / h[i]
        quad += diff**2
    norm_const = float(np.prod(1.0 / (h * math.sqrt(2.0 * math.pi))))
    dens = norm_const * np.exp(-0.5 * quad).mean(axis=1)
    if single:
        return float(dens[0])
    return dens
