"""Information measures and matrix inequalities over finite supports.

All logarithms are natural, so every quantity is in nats.
"""
from __future__ import annotations

import math
from typing import Sequence, Tuple

import numpy as np

from .errors import DivergenceUndefinedError, InconsistencyError, ValidationError

PROB_TOL = 1e-9
MI_AGREEMENT_TOL = 1e-9
RANK_RTOL = 1e-10


def as_prob_vector(p: Sequence[float] | np.ndarray, tol: float = PROB_TOL) -> np.ndarray:
    """Validate ``p`` as a probability vector and return a renormalized copy."""
    arr = np.asarray(p, dtype=float).ravel()
    if arr.size == 0:
        raise ValidationError("probability vector must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("probability vector has non-finite entries")
    if np.any(arr < -tol):
        raise ValidationError(f"negative probability {arr.min():.3g}")
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise ValidationError(f"probabilities sum to {total!r}, not 1")
    arr = np.clip(arr, 0.0, None)
    return arr / arr.sum()


def as_joint_table(j: Sequence[Sequence[float]] | np.ndarray, tol: float = PROB_TOL) -> np.ndarray:
    """Validate a joint probability table (any number of axes) and renormalize it."""
    arr = np.asarray(j, dtype=float)
    if arr.ndim < 2 or arr.size == 0:
        raise ValidationError("joint table needs at least two non-empty axes")
    flat = as_prob_vector(arr.ravel(), tol)
    return flat.reshape(arr.shape)


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def entropy(p) -> float:
    """Shannon entropy ``-sum p log p`` with ``0 log 0 = 0``."""
    p = as_prob_vector(p)
    h = -float(_xlogx(p).sum())
    # clamp rounding noise into [0, log n]
    return min(max(h, 0.0), math.log(p.size))


_SERIES_CUTOFF = 1e-2
# (1+x) log(1+x) - x = sum_{k>=2} (-1)^k x^k / (k (k-1))
_SERIES_COEFFS = tuple((-1) ** k / (k * (k - 1)) for k in range(9, 1, -1))


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL divergence along the last axis, broadcasting over leading axes.

    No validation beyond absolute continuity; inputs must already be
    probability vectors along the last axis.
    """
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    if np.any((p > 0) & (q <= 0)):
        raise DivergenceUndefinedError("p is not absolutely continuous with respect to q")
    # Each term q * phi((p - q) / q) with phi(x) = (1+x) log(1+x) - x is
    # nonnegative and the terms sum to D(p||q) when both vectors sum to one.
    # Working with x = (p - q)/q keeps nearly equal pairs accurate.
    pos = p > 0
    live = q > 0
    qs = np.where(live, q, 1.0)
    ps = np.where(pos, p, 1.0)
    with np.errstate(over="ignore"):
        x = np.where(live, (p - q) / qs, 0.0)
    small = np.abs(x) < _SERIES_CUTOFF
    xs = np.where(small, x, 0.0)
    series = np.zeros_like(xs)
    for c in _SERIES_COEFFS:
        series = (series + c) * xs
    series *= xs
    # away from x = 0 there is no cancellation: use p log(p/q) - (p - q) directly
    direct = np.log(ps) - np.log(qs)
    terms = np.where(small, q * series, p * direct - (p - q))
    terms = np.where(pos, terms, q)  # p = 0 contributes q
    terms = np.where(live, terms, 0.0)
    return np.maximum(terms.sum(axis=-1), 0.0)


def _kl_unchecked(p: np.ndarray, q: np.ndarray) -> float:
    return float(kl_rows(p, q))


def kl_divergence(p, q) -> float:
    """Kullback-Leibler divergence ``D(p || q)`` in nats.

    Raises DivergenceUndefinedError when some ``p_x > 0`` has ``q_x = 0``.
    """
    p = as_prob_vector(p)
    q = as_prob_vector(q)
    if p.shape != q.shape:
        raise ValidationError(f"support mismatch: {p.size} vs {q.size}")
    return _kl_unchecked(p, q)


def conditional_entropy(j) -> float:
    """H(X | Y) for a table indexed ``[x, y]``."""
    j = as_joint_table(j)
    j = j.reshape(j.shape[0], -1)
    py = j.sum(axis=0)
    h = 0.0
    for y in np.flatnonzero(py > 0):
        cond = j[:, y] / py[y]
        h -= py[y] * float(_xlogx(cond).sum())
    return max(h, 0.0)


def mutual_information_forms(j) -> Tuple[float, float]:
    """Return ``(H(X) - H(X|Y), sum_x P(x) D(P(Y|x) || P(Y)))``.

    Axis 0 is X; all remaining axes are flattened into Y.
    """
    j = as_joint_table(j)
    j = j.reshape(j.shape[0], -1)
    px = j.sum(axis=1)
    py = j.sum(axis=0)
    entropy_form = entropy(px) - conditional_entropy(j)
    kl_form = 0.0
    for x in np.flatnonzero(px > 0):
        kl_form += px[x] * _kl_unchecked(j[x] / px[x], py)
    return entropy_form, kl_form


def mutual_information(j) -> float:
    """Mutual information between the first axis of ``j`` and the rest.

    Both the entropy-reduction and the KL forms are evaluated; a disagreement
    beyond 1e-9 raises InconsistencyError.
    """
    h_form, kl_form = mutual_information_forms(j)
    if abs(h_form - kl_form) > MI_AGREEMENT_TOL:
        raise InconsistencyError(
            f"mutual information forms disagree: {h_form!r} vs {kl_form!r}"
        )
    return max(kl_form, 0.0)


def conditional_mutual_information(j) -> float:
    """I(X; Y | Z) for a table indexed ``[x, y, z]``.

    Computed as the Z-average of the per-slice mutual information.
    """
    j = as_joint_table(j)
    if j.ndim != 3:
        raise ValidationError("conditional mutual information needs a 3-axis table")
    pz = j.sum(axis=(0, 1))
    total = 0.0
    for z in np.flatnonzero(pz > 0):
        total += pz[z] * mutual_information(j[:, :, z] / pz[z])
    return total


def pinsker_gap_bound(p, q, g) -> Tuple[float, float]:
    """Return ``(E_p[g] - E_q[g], sqrt(D(p||q)/2))`` for ``g`` with span at most 1."""
    p = as_prob_vector(p)
    q = as_prob_vector(q)
    g = np.asarray(g, dtype=float).ravel()
    if not (p.shape == q.shape == g.shape):
        raise ValidationError("p, q and g must share one support")
    if g.max() - g.min() > 1.0 + PROB_TOL:
        raise ValidationError(f"span of g is {g.max() - g.min():.6g} > 1")
    gap = float(p @ g - q @ g)
    return gap, math.sqrt(_kl_unchecked(p, q) / 2.0)


def matrix_rank(m: np.ndarray, rtol: float = RANK_RTOL, atol: float = 0.0) -> int:
    """Count singular values above ``max(rtol * s_max, atol)``."""
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > max(rtol * s[0], atol)))


def trace_rank_frobenius(m, rtol: float = RANK_RTOL, atol: float = 0.0) -> Tuple[float, float]:
    """Return ``(trace(M), sqrt(rank(M)) * ||M||_F)`` for a square matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValidationError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    rank = matrix_rank(m, rtol, atol)
    return float(np.trace(m)), math.sqrt(rank) * float(np.linalg.norm(m, "fro"))
