"""Exact Thompson sampling over finite model families, with information-ratio bound checks."""

from .agents import LinearGaussianState, PolicyKind, lg_ts_select, lg_update, ts_select, uniform_select
from .analysis import (BoundCertificate, InfoRatioReport, corollary1_gamma_bound, expected_instant_regret,
                       information_gain, information_gain_direct, information_ratio, prop1_regret_bound,
                       semi_bandit_info_lower_bound, structural_gamma_bound)
from .belief import (HistoryEntry, Posterior, bayes_update, conditional_predictive, entropy_of_optimum,
                     optimal_action_distribution, predictive)
from .environments import (ModelFamily, OutcomeSample, make_bernoulli_bandit, make_full_information,
                           make_linear_bandit, make_product_semi_bandit, make_semi_bandit, optimal_action,
                           sample_outcome)
from .info_math import entropy, kl_divergence, mutual_information, pinsker_gap_bound, trace_rank_frobenius

__version__ = "0.1.0"
