"""Bound-certificate suite over randomized instances of every structure."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .agents import PolicyKind
from .analysis import (BoundCertificate, certify, corollary1_gamma_bound, exhaustive_information_identity)
from .environments import (BANDIT, FULL_INFORMATION, LINEAR, SEMI_BANDIT, STRUCTURES, ModelFamily,
                           random_bandit, random_full_information, random_linear, random_semi_bandit)
from .harness import _ReportCache, replication_rng, run_episode


@dataclass
class CertificateTally:
    structure: str
    bound_name: str
    checks: int = 0
    violations: int = 0
    min_slack: float = float("inf")
    worst: BoundCertificate | None = None

    def add(self, cert: BoundCertificate) -> None:
        self.checks += 1
        self.violations += not cert.holds
        if cert.slack < self.min_slack:
            self.min_slack = cert.slack
            self.worst = cert


@dataclass
class VerificationResult:
    tallies: Dict[Tuple[str, str], CertificateTally] = field(default_factory=dict)

    def add(self, structure: str, cert: BoundCertificate) -> None:
        key = (structure, cert.bound_name)
        if key not in self.tallies:
            self.tallies[key] = CertificateTally(structure, cert.bound_name)
        self.tallies[key].add(cert)

    @property
    def violation_count(self) -> int:
        return sum(t.violations for t in self.tallies.values())

    def table(self) -> str:
        lines = [f"{'structure':<18}{'bound':<28}{'checks':>8}{'violations':>12}{'min slack':>14}"]
        for (s, name), tally in sorted(self.tallies.items()):
            lines.append(f"{s:<18}{name:<28}{tally.checks:>8}{tally.violations:>12}{tally.min_slack:>14.3e}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "violation_count": self.violation_count,
            "certificates": [
                {"structure": t.structure, "bound_name": t.bound_name, "checks": t.checks,
                 "violations": t.violations, "min_slack": t.min_slack,
                 "worst": t.worst.to_dict() if t.worst else None}
                for _, t in sorted(self.tallies.items())
            ],
        }


def random_instance(structure: str, rng: np.random.Generator) -> ModelFamily:
    """Random desk-scale instance (<= 20 actions, <= 64 outcomes, <= 10 models)."""
    if structure == BANDIT:
        return random_bandit(rng, n_actions=int(rng.integers(2, 7)), n_models=int(rng.integers(2, 6)))
    if structure == FULL_INFORMATION:
        return random_full_information(rng, n_actions=int(rng.integers(2, 5)),
                                       n_models=int(rng.integers(2, 6)), n_z=int(rng.integers(2, 5)))
    if structure == LINEAR:
        return random_linear(rng, d=int(rng.integers(1, 4)), n_actions=int(rng.integers(2, 9)),
                             n_models=int(rng.integers(2, 6)))
    if structure == SEMI_BANDIT:
        d = int(rng.integers(2, 7))
        m = int(rng.integers(1, min(d, 3) + 1))
        return random_semi_bandit(rng, d=d, m=m, n_varying=min(3, d))
    raise ValueError(f"unknown structure {structure!r}")


def tiny_instance(structure: str, rng: np.random.Generator) -> ModelFamily:
    """Two actions, two outcomes: small enough to enumerate every trajectory."""
    if structure == FULL_INFORMATION:
        return random_full_information(rng, n_actions=2, n_models=2, n_z=2)
    if structure == LINEAR:
        return random_linear(rng, d=2, n_actions=2, n_models=2)
    if structure == SEMI_BANDIT:
        return random_semi_bandit(rng, d=2, m=1, n_varying=1)
    return random_bandit(rng, n_actions=2, n_models=2)


def verify(seed: int = 0, structures: Sequence[str] = STRUCTURES, instances: int = 8,
           episodes: int = 3, horizon: int = 25, tiny_horizon: int = 3) -> VerificationResult:
    """Simulate Thompson sampling on random instances and certify every bound at every step."""
    result = VerificationResult()
    for s_idx, structure in enumerate(structures):
        rng = replication_rng(seed, 1000 * (STRUCTURES.index(structure) + 1))
        for i in range(instances):
            family = random_instance(structure, rng)
            cache = _ReportCache(family)
            cor1 = corollary1_gamma_bound(family, 0.5)
            for e in range(episodes):
                record = run_episode(family, PolicyKind.THOMPSON_EXACT, horizon,
                                     replication_rng(seed, 10_000 * (s_idx + 1) + 100 * i + e),
                                     checks=True, cache=cache)
                for _, cert in record.certificates:
                    result.add(structure, cert)
                for row in record.rows:
                    result.add(structure, certify("corollary1_sigma_half", row.report.ratio_or_zero, cor1))
        ident = exhaustive_information_identity(tiny_instance(structure, rng), tiny_horizon)
        result.add(structure, certify("prop1_chain_rule",
                                      abs(ident["sum_expected_info"] - ident["trajectory_information"]), 0.0))
        result.add(structure, certify("prop1_information_cap", ident["trajectory_information"],
                                      ident["prior_entropy"]))
    return result
