import csv
import json
import math

import numpy as np
import pytest

from tsinfo import harness
from tsinfo.agents import PolicyKind
from tsinfo.environments import make_bernoulli_bandit, random_linear
from tsinfo.errors import ImpossibleObservationError, ValidationError
from tsinfo.harness import (CSV_COLUMNS, ConfigError, ExperimentConfig, builtin_family, emit_report,
                            load_config, replication_rng, run_episode, run_experiment)

KL_09_05 = 0.9 * math.log(1.8) + 0.1 * math.log(0.2)


@pytest.fixture
def sym():
    return make_bernoulli_bandit([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])


def config_for(family, **kw):
    return ExperimentConfig(family=family.to_dict(), **kw)


class TestRunEpisode:
    def test_point_mass_prior(self):
        fam = make_bernoulli_bandit([[0.9, 0.1], [0.1, 0.9]], [1.0, 0.0])
        for policy in (PolicyKind.THOMPSON_EXACT, PolicyKind.UNIFORM_BASELINE):
            rec = run_episode(fam, policy, 20, replication_rng(0, 0))
            assert all(r.report.expected_instant_regret == 0.0 for r in rec.rows)
            assert all(r.report.info_gain == 0.0 and r.prop1_bound == 0.0 for r in rec.rows)

    def test_worked_first_step(self, sym):
        rec = run_episode(sym, PolicyKind.THOMPSON_EXACT, 2, replication_rng(3, 0))
        first = rec.rows[0].report
        assert first.expected_instant_regret == pytest.approx(0.4, abs=1e-12)
        assert first.info_gain == pytest.approx(KL_09_05, abs=1e-12)
        assert first.ratio == pytest.approx(0.16 / KL_09_05, rel=1e-9)
        assert all(c.holds for _, c in rec.certificates)

    def test_deterministic(self, sym):
        a = run_episode(sym, "thompson_exact", 30, replication_rng(5, 2))
        b = run_episode(sym, "thompson_exact", 30, replication_rng(5, 2))
        assert a.true_model == b.true_model
        assert [(r.action, r.outcome, r.instant_regret) for r in a.rows] == \
               [(r.action, r.outcome, r.instant_regret) for r in b.rows]

    def test_rows_and_regret_consistent(self, sym):
        rec = run_episode(sym, PolicyKind.UNIFORM_BASELINE, 50, replication_rng(1, 0))
        assert [r.t for r in rec.rows] == list(range(1, 51))
        assert rec.optimal_action == sym.optimal_actions[rec.true_model]
        for r in rec.rows:
            if r.action == rec.optimal_action:
                assert r.instant_regret == 0.0
            assert r.reward == sym.reward_table[r.action, r.outcome]
        gb = [r.gamma_bar_running for r in rec.rows]
        assert all(x <= y for x, y in zip(gb, gb[1:]))
        assert rec.rows[-1].prop1_bound == pytest.approx(math.sqrt(gb[-1] * math.log(2) * 50))

    def test_linear_gaussian_policy(self):
        fam = random_linear(np.random.default_rng(0), d=2, n_actions=4)
        rec = run_episode(fam, PolicyKind.THOMPSON_LINEAR_GAUSSIAN, 25, replication_rng(0, 0))
        assert len(rec.rows) == 25 and not rec.violations

    def test_linear_gaussian_needs_linear(self, sym):
        with pytest.raises(ValidationError):
            run_episode(sym, PolicyKind.THOMPSON_LINEAR_GAUSSIAN, 5, replication_rng(0, 0))

    def test_sampled_checks_above_cap(self, sym, monkeypatch):
        monkeypatch.setattr(harness, "CHECK_COST_CAP", 1)
        rec = run_episode(sym, PolicyKind.THOMPSON_EXACT, 25, replication_rng(0, 0))
        assert sorted({t for t, _ in rec.certificates}) == [1, 11, 21]

    def test_checks_disabled(self, sym):
        rec = run_episode(sym, PolicyKind.THOMPSON_EXACT, 10, replication_rng(0, 0), checks=False)
        assert rec.certificates == [] and rec.rows[0].report.ratio is not None

    def test_error_has_step_context(self, sym, monkeypatch):
        def boom(*args):
            raise ImpossibleObservationError("no model explains it")
        monkeypatch.setattr(harness, "bayes_update", boom)
        with pytest.raises(ImpossibleObservationError, match="step 1"):
            run_episode(sym, PolicyKind.THOMPSON_EXACT, 3, replication_rng(0, 0))


class TestSeeds:
    def test_streams_differ(self):
        draws = {tuple(replication_rng(7, k).random(4)) for k in range(50)}
        assert len(draws) == 50
        assert replication_rng(7, 0).random() != replication_rng(8, 0).random()

    def test_reproducible(self):
        assert replication_rng(2**64 - 1, 3).random() == replication_rng(2**64 - 1, 3).random()


class TestRunExperiment:
    def test_single_replication(self, sym):
        res = run_experiment(config_for(sym, horizon=10, replications=1, master_seed=4))
        traj = res.trajectories[0]
        curves = res.summary["curves"]
        np.testing.assert_allclose(curves["mean_cumulative_regret"], traj.cumulative_regret)
        assert curves["stderr_cumulative_regret"] == [0.0] * 10
        assert res.summary["max_gamma"] == traj.rows[-1].gamma_bar_running
        assert res.violation_count == 0

    def test_parallel_matches_serial(self, sym):
        cfg = config_for(sym, horizon=15, replications=6, master_seed=9)
        serial = run_experiment(cfg)
        parallel = run_experiment(cfg, workers=2)
        assert serial.summary == parallel.summary

    def test_standard_error_scaling(self, sym):
        se = []
        for n in (400, 1600):
            res = run_experiment(config_for(sym, horizon=20, replications=n, master_seed=11, checks_enabled=False))
            se.append(res.summary["curves"]["stderr_cumulative_regret"][-1])
        assert 1.6 <= se[0] / se[1] <= 2.4

    @pytest.mark.slow
    def test_prop3_monte_carlo(self, sym):
        res = run_experiment(config_for(sym, horizon=50, replications=10_000, master_seed=1, checks_enabled=False))
        c = res.summary["curves"]
        mean, se = np.array(c["mean_cumulative_regret"]), np.array(c["stderr_cumulative_regret"])
        t = np.arange(1, 51)
        assert np.all(mean + 3 * se <= np.sqrt(1.0 * math.log(2) * t))

    @pytest.mark.slow
    def test_thompson_beats_uniform(self, sym):
        kw = dict(horizon=50, replications=2000, master_seed=2, checks_enabled=False)
        ts = run_experiment(config_for(sym, **kw))
        uni = run_experiment(config_for(sym, policy="uniform_baseline", **kw))
        diff = np.array([u.cumulative_regret[-1] - t.cumulative_regret[-1]
                         for u, t in zip(uni.trajectories, ts.trajectories)])
        assert diff.mean() > 3 * diff.std(ddof=1) / math.sqrt(diff.size)


class TestConfig:
    def test_defaults_and_round_trip(self, sym):
        cfg = config_for(sym)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    @pytest.mark.parametrize("bad", [dict(horizon=0), dict(replications=-1), dict(master_seed=2**64),
                                     dict(policy="greedy"), dict(horizon=1.5), dict(noise_variance=0.0)])
    def test_invalid(self, sym, bad):
        with pytest.raises(ConfigError):
            config_for(sym, **bad)

    def test_unknown_field(self, sym):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"family": sym.to_dict(), "colour": "red"})

    def test_family_file(self, sym, tmp_path):
        (tmp_path / "fam.json").write_text(json.dumps(sym.to_dict()))
        (tmp_path / "cfg.json").write_text(json.dumps({"family_file": "fam.json", "horizon": 3}))
        cfg = load_config(tmp_path / "cfg.json")
        np.testing.assert_array_equal(cfg.build_family().kernels, sym.kernels)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")

    def test_bad_family(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(family={"structure": "bandit", "arm_means": [[2.0]], "prior": [1.0]}).build_family()


class TestEmitReport:
    def read(self, path):
        with open(path / "trajectories.csv", newline="") as fh:
            return list(csv.reader(fh))

    def test_empty(self, sym, tmp_path):
        cfg = config_for(sym)
        summary = harness.summarize(cfg, sym, [])
        emit_report(summary, [], tmp_path)
        assert self.read(tmp_path) == [list(CSV_COLUMNS)]
        assert json.loads((tmp_path / "summary.json").read_text())["replications"] == 0

    def test_two_steps(self, sym, tmp_path):
        res = run_experiment(config_for(sym, horizon=2))
        emit_report(res.summary, res.trajectories, tmp_path)
        rows = self.read(tmp_path)
        assert rows[0] == list(CSV_COLUMNS)
        assert [r[1] for r in rows[1:]] == ["1", "2"]

    def test_round_trip(self, sym, tmp_path):
        res = run_experiment(config_for(sym, horizon=12, replications=7, master_seed=3))
        emit_report(res.summary, res.trajectories, tmp_path)
        rows = self.read(tmp_path)[1:]
        totals = {}
        for r in rows:
            totals[r[0]] = totals.get(r[0], 0.0) + float(r[5])
        mean = sum(totals.values()) / len(totals)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert mean == pytest.approx(summary["curves"]["mean_cumulative_regret"][-1], abs=1e-10)
        assert summary["config"]["master_seed"] == 3
        assert summary["bound_violation_count"] == 0
        assert {c["bound_name"] for c in summary["certificates"]} >= {"gamma_structural", "prop2_equivalence"}

    def test_twelve_significant_digits(self, sym, tmp_path):
        res = run_experiment(config_for(sym, horizon=1))
        emit_report(res.summary, res.trajectories, tmp_path)
        row = dict(zip(CSV_COLUMNS, self.read(tmp_path)[1]))
        assert row["gamma"] == f"{0.16 / KL_09_05:.12g}"
        assert row["bound_ok"] == "true"

    def test_undefined_gamma_blank(self, tmp_path):
        fam = make_bernoulli_bandit([[0.9, 0.1]], [1.0])
        res = run_experiment(config_for(fam, horizon=2))
        emit_report(res.summary, res.trajectories, tmp_path)
        assert all(r[8] == "" for r in self.read(tmp_path)[1:])

    def test_unwritable(self, sym, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_report(harness.summarize(config_for(sym), sym, []), [], blocker / "sub")


@pytest.mark.parametrize("name", ["bandit", "full", "linear", "semibandit"])
def test_builtin_families(name):
    fam = builtin_family(name)
    res = run_experiment(ExperimentConfig(family=fam.to_dict(), horizon=10, replications=3))
    assert res.violation_count == 0
