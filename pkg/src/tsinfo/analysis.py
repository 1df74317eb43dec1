"""Exact information-ratio computations and bound certificates.

Every quantity is evaluated under the current posterior with actions drawn by
Thompson sampling, i.e. P(A = a) = P(A* = a).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .belief import EVENT_FLOOR, HistoryEntry, Posterior, bayes_update, optimal_action_distribution
from .environments import BANDIT, FULL_INFORMATION, LINEAR, SEMI_BANDIT, ModelFamily
from .errors import InconsistencyError, ValidationError
from .info_math import _kl_unchecked, entropy, kl_rows, matrix_rank, mutual_information

BOUND_TOL = 1e-9
ZERO_GAIN = 1e-12
ZERO_REGRET = 1e-9
# singular values below this are floating-point residue of O(1) differences
RANK_ATOL = 1e-12


@dataclass(frozen=True)
class InfoRatioReport:
    expected_instant_regret: float
    info_gain: float
    ratio: Optional[float]
    optimum_entropy: float
    structural_bound: float

    @property
    def ratio_or_zero(self) -> float:
        return 0.0 if self.ratio is None else self.ratio

    def to_dict(self) -> Dict[str, Optional[float]]:
        return asdict(self)


@dataclass(frozen=True)
class BoundCertificate:
    bound_name: str
    lhs: float
    rhs: float
    slack: float
    holds: bool

    def to_dict(self) -> dict:
        return asdict(self)


def certify(name: str, lhs: float, rhs: float, tol: float = BOUND_TOL) -> BoundCertificate:
    """Record the claim ``lhs <= rhs`` (up to ``tol``)."""
    slack = float(rhs) - float(lhs)
    return BoundCertificate(name, float(lhs), float(rhs), slack, bool(slack >= -tol))


@dataclass(frozen=True, eq=False)
class _Predictives:
    alpha: np.ndarray                 # (A,) P(A* = a)
    pred: np.ndarray                  # (A, Y) P(Y_a = y)
    cond: np.ndarray                  # (A*, A, Y) P(Y_a = y | A* = a*); zero rows where alpha < floor
    live: np.ndarray                  # (A*,) alpha >= EVENT_FLOOR


def _predictives(post: Posterior, family: ModelFamily) -> _Predictives:
    alpha = optimal_action_distribution(post, family)
    w = post.weights
    pred = np.einsum("m,may->ay", w, family.kernels)
    live = alpha >= EVENT_FLOOR
    cond = np.zeros((family.action_count,) + pred.shape)
    for astar in np.flatnonzero(live):
        mask = family.optimal_actions == astar
        cond[astar] = np.einsum("m,may->ay", w[mask], family.kernels[mask]) / alpha[astar]
    return _Predictives(alpha, pred, cond, live)


def expected_instant_regret(post: Posterior, family: ModelFamily) -> float:
    """E_t[R(Y_{A*}) - R(Y_A)] for Thompson sampling."""
    p = _predictives(post, family)
    r = family.reward_table
    total = 0.0
    for a in np.flatnonzero(p.live):
        total += p.alpha[a] * float((p.cond[a, a] - p.pred[a]) @ r[a])
    return total


def information_gain(post: Posterior, family: ModelFamily) -> float:
    """I_t(A*; (A, Y_A)) as the alpha-weighted double sum of KL divergences."""
    p = _predictives(post, family)
    live = np.flatnonzero(p.live)
    a_live = p.alpha[live]
    kl = kl_rows(p.cond[np.ix_(live, live)], p.pred[live][None, :, :])   # (A*, A)
    return float(a_live @ kl @ a_live)


def joint_optimum_observation_table(post: Posterior, family: ModelFamily) -> np.ndarray:
    """``P(A* = a*, A = a, Y_A = y)`` as an ``(A*, A * Y)`` table."""
    alpha = optimal_action_distribution(post, family)
    per_model = post.weights[:, None, None] * family.kernels          # (M, A, Y)
    by_optimum = np.zeros((family.action_count,) + per_model.shape[1:])
    np.add.at(by_optimum, family.optimal_actions, per_model)
    table = by_optimum * alpha[None, :, None]
    return table.reshape(family.action_count, -1)


def information_gain_direct(post: Posterior, family: ModelFamily) -> float:
    """I_t(A*; (A, Y_A)) evaluated as mutual information of the exact joint table."""
    return mutual_information(joint_optimum_observation_table(post, family))


def structural_gamma_bound(family: ModelFamily) -> float:
    """Tightest applicable information-ratio bound for the family's structure."""
    bound = family.action_count / 2.0
    if family.structure == FULL_INFORMATION:
        bound = min(bound, 0.5)
    elif family.structure == LINEAR:
        bound = min(bound, family.dimension / 2.0)
    elif family.structure == SEMI_BANDIT:
        # the d/(2m^2) bound needs components independent under the posterior;
        # otherwise only the linear (dimension d) bound applies
        if family.independent_components:
            bound = min(bound, family.dimension / (2.0 * family.max_subset_size**2))
        else:
            bound = min(bound, family.dimension / 2.0)
    return bound


def corollary1_gamma_bound(family: ModelFamily, sigma: float) -> float:
    """Information-ratio bound when centred rewards are ``sigma``-sub-Gaussian."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    s2 = 2.0 * sigma**2
    if family.structure == FULL_INFORMATION:
        return s2
    if family.structure == LINEAR:
        return s2 * family.dimension
    if family.structure == SEMI_BANDIT:
        if family.independent_components:
            return s2 * family.dimension / family.max_subset_size**2
        return s2 * family.dimension
    return s2 * family.action_count


def prop1_regret_bound(gamma_bar: float, optimum_entropy: float, horizon: int) -> float:
    """Bayesian regret bound ``sqrt(gamma_bar * H(A*) * T)``."""
    if gamma_bar < 0 or optimum_entropy < 0 or horizon < 0:
        raise ValidationError("regret bound arguments must be nonnegative")
    return math.sqrt(gamma_bar * optimum_entropy * horizon)


def information_ratio(post: Posterior, family: ModelFamily,
                      structural_bound: Optional[float] = None) -> InfoRatioReport:
    regret = expected_instant_regret(post, family)
    gain = information_gain(post, family)
    if gain < ZERO_GAIN:
        if regret >= ZERO_REGRET:
            raise InconsistencyError(
                f"zero information gain ({gain:.3g}) with positive expected regret ({regret:.3g})"
            )
        ratio = None
    else:
        ratio = regret**2 / gain
    return InfoRatioReport(
        expected_instant_regret=regret,
        info_gain=gain,
        ratio=ratio,
        optimum_entropy=entropy(optimal_action_distribution(post, family)),
        structural_bound=structural_gamma_bound(family) if structural_bound is None else structural_bound,
    )


# -- proof-path quantities -----------------------------------------------------


def prop5_matrix(post: Posterior, family: ModelFamily) -> np.ndarray:
    """``M[i, j] = sqrt(a_i a_j) (E[R(Y_i) | A* = j] - E[R(Y_i)])``."""
    p = _predictives(post, family)
    r = family.reward_table
    mean_pred = np.einsum("ay,ay->a", p.pred, r)
    mean_cond = np.einsum("jay,ay->ja", p.cond, r)                   # (A*, A)
    diff = np.where(p.live[:, None], mean_cond - mean_pred[None, :], 0.0).T   # rows i=action, cols j=optimum
    root = np.sqrt(p.alpha)
    return root[:, None] * diff * root[None, :]


def pinsker_pair_slack(post: Posterior, family: ModelFamily) -> float:
    """Minimum over live (a, a*) of ``sqrt(KL/2) - (E[R(Y_a)|A*=a*] - E[R(Y_a)])``."""
    p = _predictives(post, family)
    worst = math.inf
    for a in range(family.action_count):
        support = p.pred[a] > 0
        g = family.reward_table[a, support]
        for astar in np.flatnonzero(p.live):
            cond = p.cond[astar, a, support]
            gap = float((cond - p.pred[a, support]) @ g)
            bound = math.sqrt(_kl_unchecked(cond, p.pred[a, support]) / 2.0)
            worst = min(worst, bound - gap)
    return worst


def _require_semi_bandit(family: ModelFamily) -> None:
    if family.structure != SEMI_BANDIT:
        raise ValidationError(f"semi-bandit bound requested for a {family.structure} family")


def _component_terms(post: Posterior, family: ModelFamily) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``P(i in A*)`` and ``P(i in A*) * (E[theta_i | i in A*] - E[theta_i])`` per component."""
    w = post.weights
    mean_theta = family.component_probs - 0.5                         # (M, d)
    overall = w @ mean_theta
    in_opt = np.zeros((family.model_count, family.dimension), dtype=bool)
    for k, a in enumerate(family.optimal_actions):
        in_opt[k, list(family.subsets[a])] = True
    p_in = (w[:, None] * in_opt).sum(axis=0)
    weighted = (w[:, None] * in_opt * mean_theta).sum(axis=0) - p_in * overall
    return p_in, weighted


def semi_bandit_info_lower_bound(post: Posterior, family: ModelFamily, action: int | Sequence[int]
                                 ) -> Tuple[float, float]:
    """``(I(A*; Y_a), 2 sum_{i in a} P(i in A*) (E[theta_i | i in A*] - E[theta_i])^2)``.

    ``action`` is an action index or the subset itself.
    """
    _require_semi_bandit(family)
    if not isinstance(action, (int, np.integer)):
        action = family.subsets.index(tuple(sorted(action)))
    by_optimum = np.zeros((family.action_count, family.outcome_count))
    np.add.at(by_optimum, family.optimal_actions, post.weights[:, None] * family.kernels[:, action, :])
    lhs = mutual_information(by_optimum)
    p_in, weighted = _component_terms(post, family)
    rhs = 0.0
    for i in family.subsets[action]:
        if p_in[i] >= EVENT_FLOOR:
            rhs += 2.0 * weighted[i] ** 2 / p_in[i]
    return lhs, rhs


def semi_bandit_lemma2(post: Posterior, family: ModelFamily) -> Tuple[float, float]:
    """``(I(A*; (A, Y_A)), 2 sum_i P(i in A*)^2 (E[theta_i | i in A*] - E[theta_i])^2)``."""
    _require_semi_bandit(family)
    _, weighted = _component_terms(post, family)
    return information_gain(post, family), 2.0 * float(np.sum(weighted**2))


def step_certificates(post: Posterior, family: ModelFamily,
                      report: Optional[InfoRatioReport] = None) -> List[BoundCertificate]:
    """All pointwise bound checks that apply to the family at this posterior."""
    if report is None:
        report = information_ratio(post, family)
    certs = [
        certify("gamma_structural", report.ratio_or_zero, report.structural_bound),
        certify("gamma_worst_case", report.ratio_or_zero, family.action_count / 2.0),
        certify("prop2_equivalence", abs(report.info_gain - information_gain_direct(post, family)), 0.0),
        certify("pinsker_pairs", 0.0, pinsker_pair_slack(post, family)),
    ]
    if family.structure == FULL_INFORMATION:
        certs.append(certify("gamma_full_information", report.ratio_or_zero, 0.5))
    if family.structure == LINEAR:
        m = prop5_matrix(post, family)
        fro = float(np.linalg.norm(m, "fro"))
        rank = matrix_rank(m, atol=RANK_ATOL)
        certs += [
            certify("prop5_trace_equals_regret", abs(float(np.trace(m)) - report.expected_instant_regret), 0.0),
            certify("prop5_frobenius", 2.0 * fro**2, report.info_gain),
            certify("prop5_rank", rank, family.dimension, tol=0.0),
            certify("fact10_trace", float(np.trace(m)), math.sqrt(rank) * fro),
        ]
    if family.structure == SEMI_BANDIT and family.independent_components:
        worst = math.inf
        for a in range(family.action_count):
            lhs, rhs = semi_bandit_info_lower_bound(post, family, a)
            worst = min(worst, lhs - rhs)
        certs.append(certify("lemma1_semi_bandit", 0.0, worst))
        gain, rhs2 = semi_bandit_lemma2(post, family)
        certs.append(certify("lemma2_semi_bandit", rhs2, gain))
    return certs


# -- exhaustive trajectory enumeration ----------------------------------------


def exhaustive_information_identity(family: ModelFamily, horizon: int) -> Dict[str, float]:
    """Enumerate every Thompson-sampling trajectory of length ``horizon``.

    Returns the expected sum of per-step information gains, the mutual
    information between A* and the whole trajectory (from its joint table),
    and the prior entropy of A*.
    """
    if horizon < 1:
        raise ValidationError("horizon must be positive")
    n_cells = (family.action_count * family.outcome_count) ** horizon
    if n_cells * family.model_count > 10**6:
        raise ValidationError(f"{n_cells} trajectories is too many to enumerate")
    columns: List[np.ndarray] = []
    expected_info = 0.0

    def walk(post: Posterior, path_prob: float, likelihood: np.ndarray, policy_prob: float, t: int) -> None:
        nonlocal expected_info
        if t == horizon:
            col = np.zeros(family.action_count)
            np.add.at(col, family.optimal_actions, likelihood * policy_prob)
            columns.append(col)
            return
        expected_info += path_prob * information_gain(post, family)
        alpha = optimal_action_distribution(post, family)
        for a in np.flatnonzero(alpha > 0):
            pred = post.weights @ family.kernels[:, a, :]
            for y in np.flatnonzero(pred > 0):
                child = bayes_update(post, family, HistoryEntry(int(a), int(y)))
                walk(child, path_prob * alpha[a] * pred[y], likelihood * family.kernels[:, a, y],
                     policy_prob * alpha[a], t + 1)

    walk(Posterior.from_prior(family), 1.0, family.prior.copy(), 1.0, 0)
    joint = np.stack(columns, axis=1)
    return {
        "sum_expected_info": expected_info,
        "trajectory_information": mutual_information(joint),
        "prior_entropy": entropy(optimal_action_distribution(Posterior.from_prior(family), family)),
    }
