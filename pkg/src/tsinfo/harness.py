"""Episode simulation, Monte Carlo aggregation and report emission."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import agents
from .agents import LinearGaussianState, PolicyKind
from .analysis import (BoundCertificate, InfoRatioReport, information_ratio, prop1_regret_bound,
                       step_certificates, structural_gamma_bound)
from .belief import HistoryEntry, Posterior, bayes_update, entropy_of_optimum
from .environments import (FULL_INFORMATION, LINEAR, SEMI_BANDIT, BANDIT, ModelFamily,
                           family_from_dict, make_bernoulli_bandit, make_full_information,
                           make_linear_bandit, make_product_semi_bandit, sample_round)
from .errors import ImpossibleObservationError, InconsistencyError, ValidationError

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "replication", "t", "action", "outcome", "reward", "instant_regret",
    "expected_instant_regret", "info_gain_nats", "gamma", "gamma_bar_running",
    "optimum_entropy_nats", "prop1_bound", "structural_bound", "bound_ok",
)
# per-step checks cost O(A^2 Y M); above this they run on every 10th step
CHECK_COST_CAP = 10**6
SAMPLED_CHECK_EVERY = 10

STRUCTURE_ALIASES = {
    "bandit": BANDIT,
    "full": FULL_INFORMATION,
    "full_information": FULL_INFORMATION,
    "linear": LINEAR,
    "semibandit": SEMI_BANDIT,
    "semi_bandit": SEMI_BANDIT,
}


class ConfigError(ValidationError):
    """The experiment configuration is malformed."""


@dataclass
class ExperimentConfig:
    family: Dict[str, Any]
    policy: PolicyKind = PolicyKind.THOMPSON_EXACT
    horizon: int = 50
    replications: int = 1
    master_seed: int = 0
    output_path: str = "tsinfo_out"
    checks_enabled: bool = True
    noise_variance: float = 0.25

    def __post_init__(self) -> None:
        try:
            self.policy = PolicyKind(self.policy)
        except ValueError:
            raise ConfigError(f"unknown policy {self.policy!r}") from None
        for name in ("horizon", "replications"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) \
                or not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if not isinstance(self.family, dict):
            raise ConfigError("family must be a mapping")
        if not self.noise_variance > 0:
            raise ConfigError("noise_variance must be positive")

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], base_dir: Optional[Path] = None) -> "ExperimentConfig":
        doc = dict(doc)
        known = {"family", "family_file", "policy", "horizon", "replications", "master_seed",
                 "output_path", "checks_enabled", "noise_variance"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "family_file" in doc:
            path = Path(doc.pop("family_file"))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                doc["family"] = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read family file {path}: {exc}") from None
        if "family" not in doc:
            raise ConfigError("config needs a 'family' or 'family_file' entry")
        return cls(**doc)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family,
            "policy": self.policy.value,
            "horizon": self.horizon,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "output_path": self.output_path,
            "checks_enabled": self.checks_enabled,
            "noise_variance": self.noise_variance,
        }

    def build_family(self) -> ModelFamily:
        try:
            return family_from_dict(self.family)
        except (ValidationError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid family: {exc}") from None


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    try:
        return ExperimentConfig.from_dict(doc, base_dir=path.parent)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class StepRow:
    t: int
    action: int
    outcome: int
    reward: float
    instant_regret: float
    report: InfoRatioReport
    gamma_bar_running: float
    prop1_bound: float
    bound_ok: bool


@dataclass
class TrajectoryRecord:
    true_model: int
    optimal_action: int
    prior_entropy: float
    rows: List[StepRow] = field(default_factory=list)
    certificates: List[Tuple[int, BoundCertificate]] = field(default_factory=list)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum([r.instant_regret for r in self.rows])

    @property
    def violations(self) -> List[Tuple[int, BoundCertificate]]:
        return [(t, c) for t, c in self.certificates if not c.holds]


def replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    """Independent stream for replication ``k``; injective in ``(master_seed, k)``."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(replication,))
    return np.random.Generator(np.random.PCG64(seq))


def _lg_prior(family: ModelFamily, noise_variance: float) -> LinearGaussianState:
    w = family.prior
    mean = w @ family.thetas
    centred = family.thetas - mean
    cov = (centred * w[:, None]).T @ centred
    return LinearGaussianState(mean, cov, noise_variance)


class _ReportCache:
    """Memoizes reports and certificates; both are pure functions of the posterior."""

    def __init__(self, family: ModelFamily) -> None:
        self.family = family
        self.bound = structural_gamma_bound(family)
        self._store: Dict[bytes, Tuple[InfoRatioReport, Optional[List[BoundCertificate]]]] = {}

    def get(self, post: Posterior, with_certs: bool):
        key = post.key()
        hit = self._store.get(key)
        if hit is not None and (hit[1] is not None or not with_certs):
            return hit
        report = information_ratio(post, self.family, self.bound)
        certs = step_certificates(post, self.family, report) if with_certs else None
        if len(self._store) < 200_000:
            self._store[key] = (report, certs)
        return report, certs


def run_episode(family: ModelFamily, policy: PolicyKind | str, horizon: int,
                rng: np.random.Generator, *, checks: bool = True,
                noise_variance: float = 0.25, cache: Optional[_ReportCache] = None) -> TrajectoryRecord:
    """Draw a true model from the prior and run ``policy`` for ``horizon`` steps."""
    policy = PolicyKind(policy)
    if horizon < 1:
        raise ValidationError("horizon must be positive")
    if policy is PolicyKind.THOMPSON_LINEAR_GAUSSIAN and family.structure != LINEAR:
        raise ValidationError("linear-Gaussian Thompson sampling needs a linear family")
    cache = cache or _ReportCache(family)
    true_model = int(min(np.searchsorted(np.cumsum(family.prior), rng.random(), side="right"),
                         family.model_count - 1))
    while family.prior[true_model] == 0.0:
        true_model -= 1
    astar = int(family.optimal_actions[true_model])
    post = Posterior.from_prior(family)
    prior_entropy = entropy_of_optimum(post, family)
    record = TrajectoryRecord(true_model, astar, prior_entropy)
    lg_state = _lg_prior(family, noise_variance) if policy is PolicyKind.THOMPSON_LINEAR_GAUSSIAN else None
    check_cost = family.action_count**2 * family.outcome_count * family.model_count
    gamma_bar = 0.0
    for t in range(1, horizon + 1):
        with_certs = checks and (check_cost <= CHECK_COST_CAP or t % SAMPLED_CHECK_EVERY == 1)
        try:
            report, certs = cache.get(post, with_certs)
        except InconsistencyError as exc:
            raise InconsistencyError(f"step {t}: {exc}") from exc
        if policy is PolicyKind.THOMPSON_EXACT:
            action = agents.ts_select(post, family, rng)
        elif policy is PolicyKind.UNIFORM_BASELINE:
            action = agents.uniform_select(family.action_count, rng)
        else:
            action, _ = agents.lg_ts_select(lg_state, family.features, rng)
        outcomes = sample_round(family, true_model, rng)
        outcome = int(outcomes[action])
        reward = float(family.reward_table[action, outcome])
        regret = float(family.reward_table[astar, outcomes[astar]]) - reward
        gamma_bar = max(gamma_bar, report.ratio_or_zero)
        ok = True
        if with_certs and certs:
            record.certificates.extend((t, c) for c in certs)
            ok = all(c.holds for c in certs)
        record.rows.append(StepRow(t, action, outcome, reward, regret, report, gamma_bar,
                                   prop1_regret_bound(gamma_bar, prior_entropy, t), ok))
        try:
            post = bayes_update(post, family, HistoryEntry(action, outcome))
        except ImpossibleObservationError as exc:
            raise ImpossibleObservationError(f"step {t}: {exc}") from exc
        if lg_state is not None:
            lg_state = agents.lg_update(lg_state, family.features[action], reward)
    return record


def _run_replication(args: Tuple[ExperimentConfig, int]) -> TrajectoryRecord:
    config, k = args
    family = config.build_family()
    return run_episode(family, config.policy, config.horizon, replication_rng(config.master_seed, k),
                       checks=config.checks_enabled, noise_variance=config.noise_variance)


@dataclass
class ExperimentResult:
    summary: Dict[str, Any]
    trajectories: List[TrajectoryRecord]

    @property
    def violation_count(self) -> int:
        return int(self.summary["bound_violation_count"])


def summarize(config: ExperimentConfig, family: ModelFamily,
              trajectories: Sequence[TrajectoryRecord]) -> Dict[str, Any]:
    """Order-independent reduction of replications into the summary document."""
    n = len(trajectories)
    horizon = config.horizon
    prior_entropy = entropy_of_optimum(Posterior.from_prior(family), family)
    structural = structural_gamma_bound(family)
    summary: Dict[str, Any] = {
        "config": config.to_dict(),
        "seeds": {"master_seed": config.master_seed, "derivation": "SeedSequence(master_seed, spawn_key=(k,))",
                  "replications": list(range(n))},
        "replications": n,
        "structure": family.structure,
        "prior_optimum_entropy_nats": prior_entropy,
        "structural_bound": structural,
    }
    if n == 0:
        summary.update(bound_violation_count=0, max_gamma=None, curves={}, certificates=[], violations=[])
        return summary
    regret = np.array([tr.cumulative_regret for tr in trajectories])
    expected = np.array([np.cumsum([r.report.expected_instant_regret for r in tr.rows])
                         for tr in trajectories])
    gamma_running = np.array([[r.gamma_bar_running for r in tr.rows] for tr in trajectories])
    mean = regret.mean(axis=0)
    se = regret.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(horizon)
    gamma_curve = gamma_running.max(axis=0)
    steps = np.arange(1, horizon + 1)
    prop1_curve = np.sqrt(gamma_curve * prior_entropy * steps)
    worst: Dict[str, BoundCertificate] = {}
    counts: Dict[str, int] = {}
    violations = []
    for k, tr in enumerate(trajectories):
        for t, cert in tr.certificates:
            counts[cert.bound_name] = counts.get(cert.bound_name, 0) + 1
            if cert.bound_name not in worst or cert.slack < worst[cert.bound_name].slack:
                worst[cert.bound_name] = cert
            if not cert.holds:
                violations.append({"replication": k, "t": t, **cert.to_dict()})
    summary.update(
        bound_violation_count=len(violations),
        max_gamma=float(gamma_curve[-1]),
        prop1_monte_carlo_ok=bool(np.all(mean + 3 * se <= prop1_curve + 1e-12)),
        curves={
            "t": steps.tolist(),
            "mean_cumulative_regret": mean.tolist(),
            "stderr_cumulative_regret": se.tolist(),
            "mean_cumulative_expected_regret": expected.mean(axis=0).tolist(),
            "gamma_bar_running": gamma_curve.tolist(),
            "prop1_bound": prop1_curve.tolist(),
            "prop1_bound_structural": np.sqrt(structural * prior_entropy * steps).tolist(),
        },
        certificates=[{"checks": counts[name], **worst[name].to_dict()} for name in sorted(worst)],
        violations=violations,
    )
    return summary


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run all replications and aggregate them."""
    family = config.build_family()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_run_replication,
                                         [(config, k) for k in range(config.replications)],
                                         chunksize=max(1, config.replications // (4 * workers))))
    else:
        cache = _ReportCache(family)
        trajectories = [
            run_episode(family, config.policy, config.horizon, replication_rng(config.master_seed, k),
                        checks=config.checks_enabled, noise_variance=config.noise_variance, cache=cache)
            for k in range(config.replications)
        ]
    return ExperimentResult(summarize(config, family, trajectories), trajectories)


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _round_floats(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.12g}") if math.isfinite(x) else None
    return obj


def emit_report(summary: Dict[str, Any], trajectories: Sequence[TrajectoryRecord],
                path: str | os.PathLike) -> Tuple[Path, Path]:
    """Write ``trajectories.csv`` and ``summary.json`` into directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "trajectories.csv"
        json_path = out / "summary.json"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for k, tr in enumerate(trajectories):
                for r in tr.rows:
                    rep = r.report
                    writer.writerow([_fmt(v) for v in (
                        k, r.t, r.action, r.outcome, r.reward, r.instant_regret,
                        rep.expected_instant_regret, rep.info_gain, rep.ratio, r.gamma_bar_running,
                        rep.optimum_entropy, r.prop1_bound, rep.structural_bound, r.bound_ok)])
        json_path.write_text(json.dumps(_round_floats(summary), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {out}: {exc}") from exc
    return csv_path, json_path


# -- built-in instances ----------------------------------------------------------


def builtin_family(structure: str) -> ModelFamily:
    """Small worked instance for each information structure."""
    structure = STRUCTURE_ALIASES.get(structure, structure)
    if structure == BANDIT:
        return make_bernoulli_bandit([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
    if structure == FULL_INFORMATION:
        return make_full_information([[0.8, 0.2], [0.2, 0.8]], [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])
    if structure == LINEAR:
        return make_linear_bandit([[1, 0], [0, 1], [0.5, 0.5]], [[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
    if structure == SEMI_BANDIT:
        actions = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        return make_product_semi_bandit(4, 2, actions, [[0.2, 0.8], [0.3, 0.7], [0.5], [0.4, 0.6]],
                                        [[0.5, 0.5], [0.5, 0.5], [1.0], [0.5, 0.5]])
    raise ValidationError(f"unknown structure {structure!r}")
