"""Action-selection policies."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .belief import Posterior
from .environments import ModelFamily
from .errors import NumericalError, ValidationError

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9


class PolicyKind(str, enum.Enum):
    THOMPSON_EXACT = "thompson_exact"
    THOMPSON_LINEAR_GAUSSIAN = "thompson_linear_gaussian"
    UNIFORM_BASELINE = "uniform_baseline"


@dataclass(frozen=True, eq=False)
class LinearGaussianState:
    """Gaussian belief N(mean, covariance) over the linear parameter."""

    mean: np.ndarray
    covariance: np.ndarray
    noise_variance: float

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).ravel()
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("mean and covariance must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYMMETRY_TOL:
            raise ValidationError("covariance is not symmetric")
        cov = (cov + cov.T) / 2.0
        if mean.size and np.linalg.eigvalsh(cov).min() < -PSD_TOL:
            raise ValidationError("covariance is not positive semidefinite")
        if not (self.noise_variance > 0 and math.isfinite(self.noise_variance)):
            raise ValidationError("noise variance must be positive")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def ts_select(post: Posterior, family: ModelFamily, rng: np.random.Generator) -> int:
    """Sample a model from the posterior and play its optimal action."""
    cdf = np.cumsum(post.weights)
    m = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    m = min(m, post.weights.size - 1)
    # skip past zero-weight models that searchsorted can land on at the boundary
    while post.weights[m] == 0.0:
        m -= 1
    return int(family.optimal_actions[m])


def uniform_select(action_count: int, rng: np.random.Generator) -> int:
    if action_count < 1:
        raise ValidationError("action_count must be at least 1")
    return int(rng.integers(action_count))


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == cov`` for a PSD ``cov``."""
    d = cov.shape[0]
    jitter = 1e-12 * max(float(np.trace(cov)), 0.0) / d
    current = cov
    for attempt in range(4):
        try:
            return np.linalg.cholesky(current)
        except np.linalg.LinAlgError:
            if attempt == 3:
                break
            current = cov + jitter * (10.0**attempt) * np.eye(d)
    # semidefinite case (e.g. a zero covariance): symmetric eigen square root
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -PSD_TOL * max(1.0, abs(vals).max()):
        raise NumericalError("covariance factorization failed after jitter")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def lg_ts_select(state: LinearGaussianState, actions: Sequence[Sequence[float]],
                 rng: np.random.Generator) -> Tuple[int, np.ndarray]:
    """One step of linear-Gaussian Thompson sampling: returns (action index, sampled theta)."""
    feats = np.atleast_2d(np.asarray(actions, dtype=float))
    if feats.shape[0] < 1:
        raise ValidationError("need at least one action")
    if feats.shape[1] != state.mean.size:
        raise ValidationError("action dimension does not match the belief")
    z = rng.standard_normal(state.mean.size)
    theta = state.mean + _psd_factor(state.covariance) @ z
    values = feats @ theta
    return int(np.argmax(values)), theta


def lg_update(state: LinearGaussianState, action: Sequence[float], reward: float) -> LinearGaussianState:
    """Rank-one conjugate (Kalman) update after observing ``reward`` at ``action``."""
    if not math.isfinite(reward):
        raise ValidationError("reward must be finite")
    a = np.asarray(action, dtype=float).ravel()
    cov = state.covariance
    s_a = cov @ a
    denom = state.noise_variance + float(a @ s_a)
    mean = state.mean + s_a * ((reward - float(a @ state.mean)) / denom)
    new_cov = cov - np.outer(s_a, s_a) / denom
    new_cov = (new_cov + new_cov.T) / 2.0
    return LinearGaussianState(mean, new_cov, state.noise_variance)
