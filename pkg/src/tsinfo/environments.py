"""Finite model families for the four information structures.

A family holds ``M`` candidate models over ``A`` actions and a shared outcome
index set of size ``Y``. ``kernels[m, a, y]`` is the probability of outcome
``y`` when action ``a`` is played under model ``m``; ``reward_table[a, y]``
is the reward of that outcome.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InstanceTooLargeError, ValidationError
from .info_math import PROB_TOL, as_prob_vector

BANDIT = "bandit"
FULL_INFORMATION = "full_information"
LINEAR = "linear"
SEMI_BANDIT = "semi_bandit"
STRUCTURES = (BANDIT, FULL_INFORMATION, LINEAR, SEMI_BANDIT)

DEFAULT_SIZE_CAP = 10**6
# expected rewards within this distance of the maximum count as tied
TIE_TOL = 1e-12


@dataclass(frozen=True)
class OutcomeSample:
    action: int
    outcome: int
    reward: float


@dataclass(frozen=True, eq=False)
class ModelFamily:
    structure: str
    kernels: np.ndarray
    prior: np.ndarray
    reward_table: np.ndarray
    features: Optional[np.ndarray] = None
    thetas: Optional[np.ndarray] = None
    dimension: Optional[int] = None
    max_subset_size: Optional[int] = None
    subsets: Optional[Tuple[Tuple[int, ...], ...]] = None
    component_probs: Optional[np.ndarray] = None
    spec: Dict[str, Any] = field(default_factory=dict, repr=False)
    size_cap: int = DEFAULT_SIZE_CAP

    def __post_init__(self) -> None:
        if self.structure not in STRUCTURES:
            raise ValidationError(f"unknown structure {self.structure!r}")
        kernels = np.array(self.kernels, dtype=float)
        if kernels.ndim != 3 or min(kernels.shape) < 1:
            raise ValidationError(f"kernels must be (models, actions, outcomes), got {kernels.shape}")
        n_models, n_actions, n_outcomes = kernels.shape
        if n_models * n_actions * n_outcomes > self.size_cap:
            raise InstanceTooLargeError(
                f"{n_models}x{n_actions}x{n_outcomes} exceeds size cap {self.size_cap}"
            )
        if np.any(~np.isfinite(kernels)) or np.any(kernels < -PROB_TOL):
            raise ValidationError("kernel entries must be finite and nonnegative")
        row_sums = kernels.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > PROB_TOL):
            raise ValidationError("every kernel row must sum to 1")
        kernels = np.clip(kernels, 0.0, None)
        kernels /= kernels.sum(axis=2, keepdims=True)
        prior = as_prob_vector(self.prior)
        if prior.size != n_models:
            raise ValidationError(f"prior has {prior.size} entries for {n_models} models")
        rewards = np.array(self.reward_table, dtype=float)
        if rewards.shape != (n_actions, n_outcomes) or not np.all(np.isfinite(rewards)):
            raise ValidationError(f"reward table must be finite with shape {(n_actions, n_outcomes)}")
        reachable = kernels.max(axis=0) > 0
        span = rewards[reachable].max() - rewards[reachable].min()
        if span > 1.0 + PROB_TOL:
            raise ValidationError(f"reward span {span:.6g} exceeds 1")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "reward_table", rewards)
        for name in ("kernels", "prior", "reward_table"):
            getattr(self, name).setflags(write=False)
        self._check_structure()

    def _check_structure(self) -> None:
        if self.structure == FULL_INFORMATION:
            if np.any(np.abs(self.kernels - self.kernels[:, :1, :]) > PROB_TOL):
                raise ValidationError("full-information kernels must not depend on the action")
        elif self.structure == LINEAR:
            if self.features is None or self.thetas is None:
                raise ValidationError("linear family needs features and thetas")
            implied = self.thetas @ self.features.T
            if np.any(np.abs(self.expected_rewards - implied) > PROB_TOL):
                raise ValidationError("expected rewards do not match a^T theta")
        elif self.structure == SEMI_BANDIT:
            if self.subsets is None or self.component_probs is None:
                raise ValidationError("semi-bandit family needs subsets and component probabilities")
            if any(len(s) > self.max_subset_size for s in self.subsets):
                raise ValidationError("an action exceeds the maximum subset size")

    @property
    def action_count(self) -> int:
        return self.kernels.shape[1]

    @property
    def outcome_count(self) -> int:
        return self.kernels.shape[2]

    @property
    def model_count(self) -> int:
        return self.kernels.shape[0]

    @cached_property
    def expected_rewards(self) -> np.ndarray:
        """``(models, actions)`` table of expected reward."""
        out = np.einsum("may,ay->ma", self.kernels, self.reward_table)
        out.setflags(write=False)
        return out

    @cached_property
    def optimal_actions(self) -> np.ndarray:
        """Lowest-index optimal action for each model."""
        er = self.expected_rewards
        best = er.max(axis=1, keepdims=True)
        out = np.argmax(er >= best - TIE_TOL, axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def independent_components(self) -> bool:
        """Whether the prior makes semi-bandit components mutually independent.

        True when the prior over per-component success probabilities is the
        product of its marginals. Bayes updates preserve this, so it then
        holds under every posterior.
        """
        if self.structure != SEMI_BANDIT:
            return False
        support = self.prior > 0
        probs = np.round(self.component_probs[support], 12)
        weights = self.prior[support]
        joint: Dict[Tuple[float, ...], float] = {}
        for row, w in zip(map(tuple, probs), weights):
            joint[row] = joint.get(row, 0.0) + w
        marginals = []
        for i in range(self.dimension):
            levels: Dict[float, float] = {}
            for row, w in joint.items():
                levels[row[i]] = levels.get(row[i], 0.0) + w
            marginals.append(levels)
        n_combos = math.prod(len(lv) for lv in marginals)
        if n_combos != len(joint):
            return False
        return all(
            abs(w - math.prod(marginals[i][v] for i, v in enumerate(row))) <= PROB_TOL
            for row, w in joint.items()
        )

    def to_dict(self) -> Dict[str, Any]:
        if not self.spec:
            raise ValidationError("family was not built by a named constructor and cannot be serialized")
        return {"structure": self.structure, **self.spec}


def _check_model_index(family: ModelFamily, model_index: int) -> None:
    if not 0 <= model_index < family.model_count:
        raise IndexError(f"model index {model_index} out of range [0, {family.model_count})")


def _check_action(family: ModelFamily, action: int) -> None:
    if not 0 <= action < family.action_count:
        raise IndexError(f"action {action} out of range [0, {family.action_count})")


def _bernoulli_kernels(means: np.ndarray) -> np.ndarray:
    return np.stack([1.0 - means, means], axis=-1)


def make_bernoulli_bandit(arm_means_per_model, prior, *, size_cap: int = DEFAULT_SIZE_CAP) -> ModelFamily:
    """Independent-arm Bernoulli bandit; ``arm_means_per_model[m][a]`` is P(Y_a = 1)."""
    means = np.array(arm_means_per_model, dtype=float)
    if means.ndim != 2:
        raise ValidationError("arm means must be a (models, actions) matrix")
    if np.any(~np.isfinite(means)) or np.any(means < 0) or np.any(means > 1):
        raise ValidationError("arm means must lie in [0, 1]")
    n_actions = means.shape[1]
    return ModelFamily(
        structure=BANDIT,
        kernels=_bernoulli_kernels(means),
        prior=prior,
        reward_table=np.tile([0.0, 1.0], (n_actions, 1)),
        spec={"arm_means": means.tolist(), "prior": np.asarray(prior, float).tolist()},
        size_cap=size_cap,
    )


def make_full_information(z_dists_per_model, reward_by_action_and_z, prior, *,
                          size_cap: int = DEFAULT_SIZE_CAP) -> ModelFamily:
    """Every action reveals the same ``Z``; reward of action ``a`` is ``r[a][z]``."""
    z = np.array(z_dists_per_model, dtype=float)
    rewards = np.array(reward_by_action_and_z, dtype=float)
    if z.ndim != 2 or rewards.ndim != 2 or rewards.shape[1] != z.shape[1]:
        raise ValidationError("need (models, Z) distributions and an (actions, Z) reward table")
    for row in z:
        as_prob_vector(row)
    kernels = np.repeat(z[:, None, :], rewards.shape[0], axis=1)
    return ModelFamily(
        structure=FULL_INFORMATION,
        kernels=kernels,
        prior=prior,
        reward_table=rewards,
        spec={"z_dists": z.tolist(), "rewards": rewards.tolist(),
              "prior": np.asarray(prior, float).tolist()},
        size_cap=size_cap,
    )


def make_linear_bandit(features, thetas, prior, *, size_cap: int = DEFAULT_SIZE_CAP) -> ModelFamily:
    """Bernoulli outcomes with mean ``a^T theta``; needs every mean in [0, 1]."""
    feats = np.atleast_2d(np.array(features, dtype=float))
    ths = np.atleast_2d(np.array(thetas, dtype=float))
    if feats.shape[1] != ths.shape[1]:
        raise ValidationError("feature and theta dimensions differ")
    means = ths @ feats.T
    if np.any(means < -PROB_TOL) or np.any(means > 1 + PROB_TOL):
        raise ValidationError("a^T theta must lie in [0, 1] for every action and model")
    means = np.clip(means, 0.0, 1.0)
    feats.setflags(write=False)
    ths.setflags(write=False)
    return ModelFamily(
        structure=LINEAR,
        kernels=_bernoulli_kernels(means),
        prior=prior,
        reward_table=np.tile([0.0, 1.0], (feats.shape[0], 1)),
        features=feats,
        thetas=ths,
        dimension=feats.shape[1],
        spec={"features": feats.tolist(), "thetas": ths.tolist(),
              "prior": np.asarray(prior, float).tolist()},
        size_cap=size_cap,
    )


def semi_bandit_outcome_values(subset: Sequence[int], outcome: int) -> np.ndarray:
    """Component values (each +-1/2) encoded by ``outcome`` for ``subset``.

    Bit ``j`` of the outcome index is 1 when the ``j``-th listed component is +1/2.
    """
    return np.array([0.5 if (outcome >> j) & 1 else -0.5 for j in range(len(subset))])


def make_semi_bandit(d: int, m: int, actions, component_probs_per_model, prior, *,
                     size_cap: int = DEFAULT_SIZE_CAP) -> ModelFamily:
    """Combinatorial actions with per-component feedback.

    ``actions`` are subsets of ``range(d)`` (0-based) with at most ``m``
    elements. Under model ``k`` component ``i`` equals +1/2 with probability
    ``component_probs_per_model[k][i]`` and -1/2 otherwise, independently
    across components. Reward is ``(1/m) * sum(theta_i for i in a)``.
    """
    if d < 1 or m < 1:
        raise ValidationError("d and m must be positive")
    subsets = tuple(tuple(sorted(int(i) for i in a)) for a in actions)
    if not subsets:
        raise ValidationError("need at least one action")
    for s in subsets:
        if len(s) > m:
            raise ValidationError(f"action {s} has more than m={m} components")
        if len(set(s)) != len(s) or any(not 0 <= i < d for i in s):
            raise ValidationError(f"action {s} is not a subset of range({d})")
    probs = np.atleast_2d(np.array(component_probs_per_model, dtype=float))
    if probs.shape[1] != d or np.any(probs < 0) or np.any(probs > 1):
        raise ValidationError("component probabilities must be a (models, d) matrix in [0, 1]")
    n_outcomes = 2**m
    if probs.shape[0] * len(subsets) * n_outcomes > size_cap:
        raise InstanceTooLargeError(
            f"{probs.shape[0]} models x {len(subsets)} actions x {n_outcomes} outcomes exceeds {size_cap}"
        )
    kernels = np.zeros((probs.shape[0], len(subsets), n_outcomes))
    rewards = np.zeros((len(subsets), n_outcomes))
    for a, s in enumerate(subsets):
        for y in range(2 ** len(s)):
            bits = [(y >> j) & 1 for j in range(len(s))]
            rewards[a, y] = sum(0.5 if b else -0.5 for b in bits) / m
            kernels[:, a, y] = np.prod(
                [probs[:, i] if b else 1.0 - probs[:, i] for i, b in zip(s, bits)], axis=0
            ) if s else 1.0
    probs.setflags(write=False)
    return ModelFamily(
        structure=SEMI_BANDIT,
        kernels=kernels,
        prior=prior,
        reward_table=rewards,
        dimension=d,
        max_subset_size=m,
        subsets=subsets,
        component_probs=probs,
        spec={"d": d, "m": m, "actions": [list(s) for s in subsets],
              "component_probs": probs.tolist(), "prior": np.asarray(prior, float).tolist()},
        size_cap=size_cap,
    )


def make_product_semi_bandit(d: int, m: int, actions, component_levels, level_priors, *,
                             size_cap: int = DEFAULT_SIZE_CAP) -> ModelFamily:
    """Semi-bandit whose prior makes the components independent.

    Component ``i`` has success probability drawn from ``component_levels[i]``
    with weights ``level_priors[i]``, independently over components. Models are
    the cartesian product of levels, so the posterior stays a product measure
    and components remain independent given any history.
    """
    if len(component_levels) != d or len(level_priors) != d:
        raise ValidationError("need one level list and one prior per component")
    priors = [as_prob_vector(w) for w in level_priors]
    combos = list(itertools.product(*[range(len(lv)) for lv in component_levels]))
    probs = [[component_levels[i][c[i]] for i in range(d)] for c in combos]
    prior = [math.prod(priors[i][c[i]] for i in range(d)) for c in combos]
    family = make_semi_bandit(d, m, actions, probs, np.array(prior) / sum(prior), size_cap=size_cap)
    object.__setattr__(family, "spec", {
        "d": d, "m": m, "actions": [list(s) for s in family.subsets],
        "component_levels": [list(map(float, lv)) for lv in component_levels],
        "level_priors": [p.tolist() for p in priors],
    })
    return family


def family_from_dict(doc: Dict[str, Any], *, size_cap: int = DEFAULT_SIZE_CAP) -> ModelFamily:
    """Inverse of ``ModelFamily.to_dict``."""
    try:
        structure = doc["structure"]
        if structure == BANDIT:
            return make_bernoulli_bandit(doc["arm_means"], doc["prior"], size_cap=size_cap)
        if structure == FULL_INFORMATION:
            return make_full_information(doc["z_dists"], doc["rewards"], doc["prior"], size_cap=size_cap)
        if structure == LINEAR:
            return make_linear_bandit(doc["features"], doc["thetas"], doc["prior"], size_cap=size_cap)
        if structure == SEMI_BANDIT:
            if "component_levels" in doc:
                return make_product_semi_bandit(doc["d"], doc["m"], doc["actions"],
                                                doc["component_levels"], doc["level_priors"],
                                                size_cap=size_cap)
            return make_semi_bandit(doc["d"], doc["m"], doc["actions"], doc["component_probs"],
                                    doc["prior"], size_cap=size_cap)
    except KeyError as exc:
        raise ValidationError(f"family document is missing field {exc}") from None
    raise ValidationError(f"unknown structure {doc.get('structure')!r}")


def optimal_action(family: ModelFamily, model_index: int) -> int:
    """Lowest-index maximizer of expected reward under the given model."""
    _check_model_index(family, model_index)
    return int(family.optimal_actions[model_index])


def _draw(row: np.ndarray, u: float) -> int:
    idx = int(np.searchsorted(np.cumsum(row), u, side="right"))
    return min(idx, row.size - 1)


def sample_outcome(family: ModelFamily, model_index: int, action: int,
                   rng: np.random.Generator) -> OutcomeSample:
    """Draw one outcome of ``action`` under the given model."""
    _check_model_index(family, model_index)
    _check_action(family, action)
    y = _draw(family.kernels[model_index, action], rng.random())
    return OutcomeSample(action, y, float(family.reward_table[action, y]))


def sample_round(family: ModelFamily, model_index: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the outcome of every action for one period.

    Full-information actions share one ``Z`` draw and semi-bandit actions
    share component draws; otherwise actions are independent given the model.
    """
    _check_model_index(family, model_index)
    if family.structure == FULL_INFORMATION:
        z = _draw(family.kernels[model_index, 0], rng.random())
        return np.full(family.action_count, z, dtype=int)
    if family.structure == SEMI_BANDIT:
        ups = rng.random(family.dimension) < family.component_probs[model_index]
        out = np.empty(family.action_count, dtype=int)
        for a, s in enumerate(family.subsets):
            out[a] = sum(1 << j for j, i in enumerate(s) if ups[i])
        return out
    cdf = np.cumsum(family.kernels[model_index], axis=1)
    u = rng.random(family.action_count)
    out = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(out, family.outcome_count - 1)


# -- randomized instance generators -------------------------------------------


def random_bandit(rng: np.random.Generator, n_actions: int = 3, n_models: int = 3) -> ModelFamily:
    means = rng.uniform(0.0, 1.0, size=(n_models, n_actions))
    return make_bernoulli_bandit(means, rng.dirichlet(np.ones(n_models)))


def random_full_information(rng: np.random.Generator, n_actions: int = 3, n_models: int = 3,
                            n_z: int = 3) -> ModelFamily:
    z = rng.dirichlet(np.ones(n_z), size=n_models)
    rewards = rng.uniform(0.0, 1.0, size=(n_actions, n_z))
    return make_full_information(z, rewards, rng.dirichlet(np.ones(n_models)))


def random_linear(rng: np.random.Generator, d: int = 2, n_actions: int = 4,
                  n_models: int = 3) -> ModelFamily:
    # features in the probability simplex (scaled) and thetas in [0,1]^d keep a^T theta in [0,1]
    feats = rng.dirichlet(np.ones(d), size=n_actions) * rng.uniform(0.5, 1.0, size=(n_actions, 1))
    thetas = rng.uniform(0.0, 1.0, size=(n_models, d))
    return make_linear_bandit(feats, thetas, rng.dirichlet(np.ones(n_models)))


def random_semi_bandit(rng: np.random.Generator, d: int = 4, m: int = 2,
                       n_varying: int = 3, max_actions: int = 20) -> ModelFamily:
    """Product-prior semi-bandit: ``n_varying`` components have two candidate levels."""
    all_subsets = list(itertools.combinations(range(d), m))
    if len(all_subsets) > max_actions:
        keep = rng.choice(len(all_subsets), size=max_actions, replace=False)
        all_subsets = [all_subsets[k] for k in sorted(keep)]
    varying = set(rng.choice(d, size=min(n_varying, d), replace=False).tolist())
    levels: List[List[float]] = []
    priors: List[List[float]] = []
    for i in range(d):
        if i in varying:
            levels.append(sorted(rng.uniform(0.0, 1.0, size=2).tolist()))
            w = rng.uniform(0.1, 0.9)
            priors.append([w, 1.0 - w])
        else:
            levels.append([float(rng.uniform(0.0, 1.0))])
            priors.append([1.0])
    return make_product_semi_bandit(d, m, all_subsets, levels, priors)


def random_family(structure: str, rng: np.random.Generator, **kwargs) -> ModelFamily:
    makers = {
        BANDIT: random_bandit,
        FULL_INFORMATION: random_full_information,
        LINEAR: random_linear,
        SEMI_BANDIT: random_semi_bandit,
    }
    if structure not in makers:
        raise ValidationError(f"unknown structure {structure!r}")
    return makers[structure](rng, **kwargs)
