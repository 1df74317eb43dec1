import itertools
import math

import numpy as np
import pytest

from tsinfo.environments import (BANDIT, FULL_INFORMATION, LINEAR, SEMI_BANDIT, STRUCTURES, ModelFamily,
                                 family_from_dict, make_bernoulli_bandit, make_full_information,
                                 make_linear_bandit, make_product_semi_bandit, make_semi_bandit,
                                 optimal_action, random_family, random_full_information, random_linear,
                                 sample_outcome, sample_round, semi_bandit_outcome_values)
from tsinfo.errors import InstanceTooLargeError, ValidationError


def check_invariants(family: ModelFamily):
    """Independent re-check of the structural invariants by direct inspection."""
    k = family.kernels
    assert np.all(k >= 0)
    assert np.allclose(k.sum(axis=2), 1.0, atol=1e-9)
    assert abs(family.prior.sum() - 1.0) <= 1e-9
    reach = (k > 0).any(axis=0)
    vals = family.reward_table[reach]
    assert vals.max() - vals.min() <= 1.0 + 1e-9
    if family.structure == LINEAR:
        means = np.einsum("may,ay->ma", k, family.reward_table)
        assert np.allclose(means, family.thetas @ family.features.T, atol=1e-9)
    if family.structure == FULL_INFORMATION:
        assert np.allclose(k, k[:, :1, :], atol=1e-12)


class TestBandit:
    def test_two_arm(self):
        fam = make_bernoulli_bandit([[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
        check_invariants(fam)
        assert (fam.action_count, fam.outcome_count, fam.model_count) == (2, 2, 2)
        assert list(fam.optimal_actions) == [0, 1]
        np.testing.assert_allclose(fam.kernels[0, 0], [0.1, 0.9])

    def test_single_model(self):
        fam = make_bernoulli_bandit([[1.0, 0.0]], [1.0])
        check_invariants(fam)
        assert optimal_action(fam, 0) == 0

    def test_all_tied(self):
        fam = make_bernoulli_bandit([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5])
        assert list(fam.optimal_actions) == [0, 0]

    def test_invalid(self):
        with pytest.raises(ValidationError):
            make_bernoulli_bandit([[1.2, 0.1]], [1.0])
        with pytest.raises(ValidationError):
            make_bernoulli_bandit([[0.5, 0.1]], [0.7])
        with pytest.raises(ValidationError):
            make_bernoulli_bandit([0.5, 0.1], [1.0])

    def test_size_cap(self):
        with pytest.raises(InstanceTooLargeError):
            make_bernoulli_bandit(np.full((10, 10), 0.5), np.full(10, 0.1), size_cap=100)


class TestFullInformation:
    def test_coin_prediction(self):
        fam = make_full_information([[0.8, 0.2], [0.2, 0.8]], [[0, 1], [1, 0]], [0.5, 0.5])
        check_invariants(fam)
        # model 0 favours z = 0, which pays action 1
        assert list(fam.optimal_actions) == [1, 0]

    def test_constant_reward(self):
        fam = make_full_information([[0.3, 0.7]], [[0.5, 0.5], [0.5, 0.5]], [1.0])
        check_invariants(fam)

    def test_random(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            check_invariants(random_full_information(rng, 3, 3, 3))

    def test_reward_span(self):
        with pytest.raises(ValidationError):
            make_full_information([[0.5, 0.5]], [[0, 2]], [1.0])


class TestLinear:
    def test_three_actions(self):
        fam = make_linear_bandit([[1, 0], [0, 1], [0.5, 0.5]], [[0.9, 0.1], [0.1, 0.9]], [0.5, 0.5])
        check_invariants(fam)
        assert fam.dimension == 2
        assert list(fam.optimal_actions) == [0, 1]

    def test_one_arm(self):
        fam = make_linear_bandit([[1.0]], [[0.5]], [1.0])
        check_invariants(fam)
        assert fam.action_count == 1

    def test_hypercube(self):
        rng = np.random.default_rng(1)
        cube = np.array(list(itertools.product([0, 1], repeat=3))) / 3.0
        fam = make_linear_bandit(cube, rng.uniform(0, 1, size=(4, 3)), np.full(4, 0.25))
        check_invariants(fam)
        assert fam.action_count == 8

    def test_mean_outside_unit_interval(self):
        with pytest.raises(ValidationError):
            make_linear_bandit([[1, 1]], [[0.9, 0.9]], [1.0])

    def test_optimal_action_by_enumeration(self):
        fam = make_linear_bandit([[1, 0], [0, 1]], [[0.9, 0.1]], [1.0])
        assert optimal_action(fam, 0) == 0


class TestSemiBandit:
    def test_pairs(self):
        actions = list(itertools.combinations(range(4), 2))
        probs = [[0.2, 0.4, 0.6, 0.8], [0.8, 0.6, 0.4, 0.2]]
        fam = make_semi_bandit(4, 2, actions, probs, [0.5, 0.5])
        check_invariants(fam)
        assert fam.action_count == 6 and fam.outcome_count == 4
        for k in range(2):
            for a, s in enumerate(fam.subsets):
                # kernel factorizes into the component laws
                for y in range(4):
                    bits = [(y >> j) & 1 for j in range(2)]
                    oracle = math.prod(probs[k][i] if b else 1 - probs[k][i] for i, b in zip(s, bits))
                    assert fam.kernels[k, a, y] == pytest.approx(oracle, abs=1e-15)
                    assert fam.reward_table[a, y] == pytest.approx(
                        semi_bandit_outcome_values(s, y).sum() / 2, abs=1e-15)
                # component marginals match their two-point laws
                for j, i in enumerate(s):
                    up = sum(fam.kernels[k, a, y] for y in range(4) if (y >> j) & 1)
                    assert up == pytest.approx(probs[k][i], abs=1e-12)
        assert list(fam.optimal_actions) == [5, 0]

    def test_single_component(self):
        fam = make_semi_bandit(1, 1, [[0]], [[0.7]], [1.0])
        check_invariants(fam)
        np.testing.assert_allclose(fam.kernels[0, 0], [0.3, 0.7])
        np.testing.assert_allclose(fam.reward_table[0], [-0.5, 0.5])

    def test_twenty_actions(self):
        rng = np.random.default_rng(2)
        actions = list(itertools.combinations(range(6), 3))
        fam = make_semi_bandit(6, 3, actions, rng.uniform(size=(3, 6)), np.full(3, 1 / 3))
        check_invariants(fam)
        assert fam.action_count == 20 and fam.outcome_count == 8

    def test_product_prior(self):
        fam = make_product_semi_bandit(3, 1, [[0], [1], [2]], [[0.2, 0.8], [0.5], [0.1, 0.9]],
                                       [[0.3, 0.7], [1.0], [0.5, 0.5]])
        assert fam.model_count == 4
        assert fam.independent_components
        assert fam.prior.sum() == pytest.approx(1.0)

    def test_correlated_prior_detected(self):
        fam = make_semi_bandit(2, 1, [[0], [1]], [[0.2, 0.2], [0.8, 0.8]], [0.5, 0.5])
        assert not fam.independent_components

    def test_invalid_subsets(self):
        with pytest.raises(ValidationError):
            make_semi_bandit(3, 1, [[0, 1]], [[0.5] * 3], [1.0])
        with pytest.raises(ValidationError):
            make_semi_bandit(3, 2, [[0, 3]], [[0.5] * 3], [1.0])
        with pytest.raises(ValidationError):
            make_semi_bandit(3, 2, [[1, 1]], [[0.5] * 3], [1.0])


class TestSampling:
    def test_deterministic_row(self):
        fam = make_bernoulli_bandit([[0.0]], [1.0])
        rng = np.random.default_rng(0)
        assert all(sample_outcome(fam, 0, 0, rng).outcome == 0 for _ in range(100))

    def test_frequency(self):
        fam = make_bernoulli_bandit([[0.1]], [1.0])
        rng = np.random.default_rng(11)
        n = 100_000
        ones = sum(sample_outcome(fam, 0, 0, rng).outcome for _ in range(n))
        sd = math.sqrt(n * 0.1 * 0.9)
        assert abs(ones - 0.1 * n) <= 3 * sd

    def test_same_seed(self):
        fam = make_bernoulli_bandit([[0.3, 0.6]], [1.0])
        a = [sample_outcome(fam, 0, 1, np.random.default_rng(5)) for _ in range(3)]
        assert a[0] == a[1] == a[2]

    def test_index_errors(self):
        fam = make_bernoulli_bandit([[0.3, 0.6]], [1.0])
        rng = np.random.default_rng(0)
        with pytest.raises(IndexError):
            sample_outcome(fam, 1, 0, rng)
        with pytest.raises(IndexError):
            sample_outcome(fam, 0, 2, rng)

    def test_round_full_information_shares_z(self):
        fam = make_full_information([[0.5, 0.5]], [[0, 1], [1, 0], [0.5, 0.5]], [1.0])
        rng = np.random.default_rng(0)
        for _ in range(20):
            ys = sample_round(fam, 0, rng)
            assert len(set(ys.tolist())) == 1

    def test_round_semi_bandit_shares_components(self):
        fam = make_semi_bandit(3, 2, [[0, 1], [1, 2]], [[0.5, 0.5, 0.5]], [1.0])
        rng = np.random.default_rng(0)
        for _ in range(50):
            ys = sample_round(fam, 0, rng)
            # component 1 is bit 1 of action 0 and bit 0 of action 1
            assert (ys[0] >> 1) & 1 == ys[1] & 1

    def test_round_marginals(self):
        fam = make_bernoulli_bandit([[0.2, 0.7]], [1.0])
        rng = np.random.default_rng(4)
        draws = np.array([sample_round(fam, 0, rng) for _ in range(20_000)])
        n = draws.shape[0]
        for a, p in enumerate([0.2, 0.7]):
            assert abs(draws[:, a].mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)


class TestSerialization:
    @pytest.mark.parametrize("structure", STRUCTURES)
    def test_round_trip(self, structure):
        fam = random_family(structure, np.random.default_rng(9))
        back = family_from_dict(fam.to_dict())
        np.testing.assert_array_equal(back.kernels, fam.kernels)
        np.testing.assert_array_equal(back.prior, fam.prior)
        assert back.structure == structure

    def test_missing_field(self):
        with pytest.raises(ValidationError):
            family_from_dict({"structure": BANDIT, "prior": [1.0]})

    def test_unknown_structure(self):
        with pytest.raises(ValidationError):
            family_from_dict({"structure": "nope"})

    @pytest.mark.parametrize("structure", STRUCTURES)
    def test_random_generators_valid(self, structure):
        rng = np.random.default_rng(10)
        for _ in range(20):
            fam = random_family(structure, rng)
            check_invariants(fam)
            if structure == SEMI_BANDIT:
                assert fam.independent_components
