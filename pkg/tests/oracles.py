"""Independent reference computations shared by the test modules."""
import itertools
import math

import numpy as np

from tsinfo.agents import ts_select
from tsinfo.belief import HistoryEntry, Posterior, bayes_update
from tsinfo.environments import sample_outcome


def enumeration_oracle(family, weights):
    """Regret and I(A*; (A, Y_A)) from the joint law over (model, action, outcome)."""
    k = family.kernels
    means = np.einsum("may,ay->ma", k, family.reward_table)
    opt = [int(np.argmax(row)) for row in means]       # first maximizer
    n_a, n_y = k.shape[1], k.shape[2]
    alpha = np.zeros(n_a)
    for m, w in enumerate(weights):
        alpha[opt[m]] += w
    regret = sum(w * means[m, opt[m]] for m, w in enumerate(weights))
    regret -= sum(alpha[a] * w * means[m, a] for a in range(n_a) for m, w in enumerate(weights))
    joint = np.zeros((n_a, n_a, n_y))                  # (A*, A, Y)
    for m, w in enumerate(weights):
        for a in range(n_a):
            joint[opt[m], a] += w * alpha[a] * k[m, a]
    p_star = joint.sum(axis=(1, 2))
    p_obs = joint.sum(axis=0)
    info = 0.0
    for s, a, y in itertools.product(range(n_a), range(n_a), range(n_y)):
        if joint[s, a, y] > 0:
            info += joint[s, a, y] * math.log(joint[s, a, y] / (p_star[s] * p_obs[a, y]))
    return regret, info


def reachable_posteriors(family, rng, n):
    post = Posterior.from_prior(family)
    out = [post]
    while len(out) < n:
        a = int(rng.integers(family.action_count))
        m = int(rng.choice(family.model_count, p=post.weights))
        y = int(rng.choice(family.outcome_count, p=family.kernels[m, a]))
        post = bayes_update(post, family, HistoryEntry(a, y))
        out.append(post)
    return out


def thompson_posteriors(family, rng, n, horizon=15):
    """Posteriors visited by Thompson sampling, over fresh episodes until ``n`` are collected."""
    out = []
    while len(out) < n:
        true_model = int(rng.choice(family.model_count, p=family.prior))
        post = Posterior.from_prior(family)
        for _ in range(horizon):
            out.append(post)
            if len(out) == n:
                break
            a = ts_select(post, family, rng)
            y = sample_outcome(family, true_model, a, rng).outcome
            post = bayes_update(post, family, HistoryEntry(a, y))
    return out


def grid_posterior(mean0, cov0, noise_var, actions, rewards, half_width=4.0, n=81):
    """Oracle: Bayes rule evaluated on a dense grid over theta (Riemann sums)."""
    axes = [np.linspace(m - half_width, m + half_width, n) for m in mean0]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(mean0))
    centred = grid - mean0
    logp = -0.5 * np.einsum("ni,ij,nj->n", centred, np.linalg.inv(cov0), centred)
    for a, r in zip(actions, rewards):
        logp += -0.5 * (r - grid @ a) ** 2 / noise_var
    w = np.exp(logp - logp.max())
    w /= w.sum()
    mean = w @ grid
    dev = grid - mean
    return mean, (dev * w[:, None]).T @ dev
