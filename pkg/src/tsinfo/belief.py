"""Exact posterior over the models of a finite family."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environments import ModelFamily
from .errors import ImpossibleObservationError, ValidationError, ZeroProbabilityEventError
from .info_math import as_prob_vector, entropy

WEIGHT_FLOOR = 1e-15
EVENT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Posterior:
    """Posterior weights over model indices after ``step`` observations."""

    weights: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        w = as_prob_vector(self.weights)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.step < 0:
            raise ValidationError("step must be nonnegative")

    @classmethod
    def from_prior(cls, family: ModelFamily) -> "Posterior":
        return cls(family.prior.copy(), 0)

    def key(self) -> bytes:
        """Hashable fingerprint of the weights (for memoizing pure functions)."""
        return np.round(self.weights, 15).tobytes()


@dataclass(frozen=True)
class HistoryEntry:
    action: int
    outcome: int


def _check(post: Posterior, family: ModelFamily) -> None:
    if post.weights.size != family.model_count:
        raise ValidationError(
            f"posterior has {post.weights.size} weights for {family.model_count} models"
        )


def bayes_update(post: Posterior, family: ModelFamily, obs: HistoryEntry) -> Posterior:
    """Condition on one observed (action, outcome) pair."""
    _check(post, family)
    if not (0 <= obs.action < family.action_count and 0 <= obs.outcome < family.outcome_count):
        raise IndexError(f"observation {obs} out of range")
    w = post.weights * family.kernels[:, obs.action, obs.outcome]
    total = w.sum()
    if total <= 0.0:
        raise ImpossibleObservationError(
            f"outcome {obs.outcome} of action {obs.action} has zero probability under every model"
        )
    w = w / total
    w[w < WEIGHT_FLOOR] = 0.0
    return Posterior(w / w.sum(), post.step + 1)


def optimal_action_distribution(post: Posterior, family: ModelFamily) -> np.ndarray:
    """Posterior probability that each action is optimal."""
    _check(post, family)
    return np.bincount(family.optimal_actions, weights=post.weights, minlength=family.action_count)


def predictive(post: Posterior, family: ModelFamily, action: int) -> np.ndarray:
    """Posterior predictive distribution of the outcome of ``action``."""
    _check(post, family)
    return post.weights @ family.kernels[:, action, :]


def conditional_predictive(post: Posterior, family: ModelFamily, action: int, astar: int) -> np.ndarray:
    """Predictive distribution of ``action``'s outcome given that ``astar`` is optimal."""
    _check(post, family)
    mask = family.optimal_actions == astar
    mass = post.weights[mask].sum()
    if mass < EVENT_FLOOR:
        raise ZeroProbabilityEventError(f"P(A* = {astar}) = {mass:.3g} is treated as zero")
    return (post.weights[mask] @ family.kernels[mask, action, :]) / mass


def entropy_of_optimum(post: Posterior, family: ModelFamily) -> float:
    """H_t(A*) in nats."""
    return entropy(optimal_action_distribution(post, family))
