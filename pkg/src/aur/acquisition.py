"""Confidence index and adaptive-sample selection.

Model certainty at a query is Phi(1/sigma) with sigma the predictive std in
normalized target units, so certainty is scale-free and lives in (0.5, 1].
The confidence index of a GP is the arithmetic mean of certainties over a
Monte-Carlo sample set. The acquisition score multiplies model uncertainty
(1 - certainty) by the KDE input density, and the next real probe is the
candidate maximizing it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInputError
from .sampling import KDEModel, kde_eval

log = logging.getLogger(__name__)


def model_certainty(std):
    """Phi(1 / sigma) elementwise; sigma = 0 maps to certainty 1."""
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise InvalidInputError("predictive std must be non-negative")
    with np.errstate(divide="ignore"):
        out = ndtr(np.where(std > 0, 1.0 / np.where(std > 0, std, 1.0), np.inf))
    if out.ndim == 0:
        return float(out)
    return out


def model_uncertainty(std):
    """1 - Phi(1 / sigma); complements model_certainty exactly."""
    return 1.0 - model_certainty(std)


def confidence_index(gp_model, samples: np.ndarray) -> float:
    """Mean model certainty of one GP over a sample matrix."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 1:
        raise InvalidInputError("confidence index needs at least one sample")
    _, stds = gp_model.predict_norm(samples)
    return float(np.mean(model_certainty(stds)))


def uncertainty_index(gp_model, kde: KDEModel, sample: np.ndarray) -> float:
    """Acquisition score U = (1 - Phi(1/sigma)) * input density at the sample."""
    sample = np.asarray(sample, dtype=float)
    if not np.all(np.isfinite(sample)):
        raise InvalidInputError("sample must be finite")
    _, std = gp_model.predict_norm(sample)
    return float(model_uncertainty(std) * kde_eval(kde, sample))


def uncertainty_indices(gp_model, kde: KDEModel, candidates: np.ndarray) -> np.ndarray:
    """Vectorized acquisition scores for a candidate matrix."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    _, stds = gp_model.predict_norm(candidates)
    return model_uncertainty(stds) * kde_eval(kde, candidates)


def select_adaptive_sample(gp_model, kde: KDEModel, candidates: np.ndarray,
                           exclude=None) -> tuple[np.ndarray, float]:
    """Candidate maximizing the uncertainty index (first index wins ties).

    `exclude` is an optional boolean mask of candidates to skip (already
    probed points). If every candidate scores zero the first non-excluded
    one is returned with a logged degenerate-acquisition warning.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise InvalidInputError("candidate set is empty")
    scores = uncertainty_indices(gp_model, kde, candidates)
    if exclude is not None:
        scores = np.where(np.asarray(exclude, dtype=bool), -np.inf, scores)
    best = int(np.argmax(scores))
    if scores[best] <= 0.0:
        log.warning("degenerate acquisition: every candidate has zero uncertainty index")
        best = int(np.argmax(np.where(np.isneginf(scores), -np.inf, 0.0)))
        return candidates[best].copy(), float(max(scores[best], 0.0))
    return candidates[best].copy(), float(scores[best])


def select_exploration_sample(gp_model, candidates: np.ndarray,
                              exclude=None) -> tuple[np.ndarray, float]:
    """Pure-exploration fallback: candidate with the largest predictive std."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    _, stds = gp_model.predict_norm(candidates)
    scores = model_uncertainty(stds)
    if exclude is not None:
        scores = np.where(np.asarray(exclude, dtype=bool), -np.inf, scores)
    best = int(np.argmax(scores))
    return candidates[best].copy(), float(scores[best])


@dataclass
class ConfidenceReport:
    """Per-GP confidence indices and the per-sample decomposition behind them."""

    ci: np.ndarray            # one CI per GP
    certainty: np.ndarray     # n_gps x n_samples model certainty
    uncertainty: np.ndarray   # n_gps x n_samples model uncertainty
    density: np.ndarray       # n_samples input probability
    scores: np.ndarray        # n_gps x n_samples uncertainty index


def assess(gp_models, kde: KDEModel, samples: np.ndarray) -> ConfidenceReport:
    """Evaluate CI and acquisition scores for every GP over one sample set."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    density = kde_eval(kde, samples)
    cert = np.empty((len(gp_models), samples.shape[0]))
    for i, model in enumerate(gp_models):
        _, stds = model.predict_norm(samples)
        cert[i] = model_certainty(stds)
    unc = 1.0 - cert
    return ConfidenceReport(
        ci=cert.mean(axis=1),
        certainty=cert,
        uncertainty=unc,
        density=density,
        scores=unc * density[None, :],
    )
