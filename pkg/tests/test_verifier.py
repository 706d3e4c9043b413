"""Exact evaluation: expected utilities, best responses, NashConv, entropy."""

import math
from fractions import Fraction

import numpy as np
import pytest

from clockauction import verifier
from clockauction.engine import ProcessingRule
from clockauction.game import AuctionGame, GameInstance
from clockauction.generate import generate_matched_instances
from clockauction.harness import tiny_rules, tiny_sampling
from clockauction.policy import Policy, modal_policy
from clockauction.solver import SolverConfig, train
from clockauction.tree import compile_game
from clockauction.verifier import (
    StrategyCountError,
    best_response,
    brute_force_best_response,
    brute_force_nashconv,
    expected_utilities,
    nashconv,
    policy_entropy,
)

from conftest import random_policy
from test_game import STRONG, WEAK, make_instance
from test_solver import DOMINANCE


def constant_policy(cg, action_picker):
    pol = Policy()
    for s in cg.infosets:
        vec = np.zeros(len(s.actions))
        vec[action_picker(s)] = 1.0
        pol.actions[s.key] = s.actions
        pol[s.key] = vec
    return pol


class TestExpectedUtilities:
    def test_forced_exit_round_matches_hand_computation(self):
        """Both bidders bid the all-zero vector at the strategic start.

        Only two of the six drops fit (aggregate 6, supply 4), so the two
        equally likely bidder orders settle at holdings (0,1)/(0,3) or
        (0,3)/(0,1), paying 7.7175 per encumbered license.
        """
        inst = make_instance([[WEAK], [WEAK]])
        cg = compile_game(inst)
        game = AuctionGame(inst)
        pol = constant_policy(cg, lambda s: s.actions.index((0, 0)))
        got = expected_utilities(cg, pol)
        price = 7.7175
        v1 = game.values[0][0][game.bundle_index[(0, 1)]] - 1 * price
        v3 = game.values[0][0][game.bundle_index[(0, 3)]] - 3 * price
        expected = 0.5 * (v1 + v3)
        np.testing.assert_allclose(got, [expected, expected], atol=1e-9)

    def test_deterministic(self, tiny_compiled):
        pol = random_policy(tiny_compiled, np.random.default_rng(0))
        a = expected_utilities(tiny_compiled, pol)
        b = expected_utilities(tiny_compiled, pol)
        np.testing.assert_array_equal(a, b)

    def test_single_action_game_equals_terminal_utility(self):
        from clockauction.game import History
        from test_game import WORTHLESS

        inst = make_instance([[WORTHLESS], [WORTHLESS]])
        cg = compile_game(inst)
        pol = constant_policy(cg, lambda s: 0)
        got = expected_utilities(cg, pol)
        game = AuctionGame(inst)
        h = History(game, (0, 0))
        while not h.is_terminal:
            dist, _ = game.step(h.state, [(0, 0), (0, 0)])
            # both outcomes symmetric; expectation averages them
            if len(dist.outcomes) == 1:
                h = h.child([(0, 0), (0, 0)], 0)
            else:
                break
        if h.is_terminal:
            np.testing.assert_allclose(got, h.terminal_utility(), atol=1e-12)

    def test_mixture_linearity(self, tiny_compiled):
        """Mixing one player's two pure policies mixes the utilities."""
        cg = tiny_compiled
        pure_a = constant_policy(cg, lambda s: 0)
        pure_b = constant_policy(cg, lambda s: len(s.actions) - 1)
        lam = 0.3
        mixed = Policy()
        for s in cg.infosets:
            mixed.actions[s.key] = s.actions
            if s.player == 0:
                mixed[s.key] = lam * pure_a[s.key] + (1 - lam) * pure_b[s.key]
            else:
                mixed[s.key] = pure_a[s.key]
        profile_a = [pure_a, pure_a]
        profile_b = [pure_b, pure_a]
        ua = expected_utilities(cg, profile_a)
        ub = expected_utilities(cg, profile_b)
        um = expected_utilities(cg, [mixed, pure_a])
        np.testing.assert_allclose(um, lam * ua + (1 - lam) * ub, atol=1e-9)


class TestBestResponse:
    def test_br_to_immediate_exit(self):
        """Against an opponent that always exits, holding the current bundle
        ends the auction at once, so the BR value is at least that profit."""
        from clockauction.engine import AuctionRules, ProductSpec
        from clockauction.valuation import ValueProfile

        rules = AuctionRules(
            products=(
                ProductSpec(supply=1, opening_price=12, eligibility_points=5),
                ProductSpec(supply=2, opening_price=7, eligibility_points=3,
                            bandwidth_fraction=0.6),
            ),
            num_bidders=2, clock_increment="0.05",
            warmup_bids=(((0, 2), (0, 2)),),
        )
        profile = ValueProfile.build([[STRONG], [STRONG]], rules.products)
        inst = GameInstance("exit", rules, profile)
        cg = compile_game(inst)
        game = AuctionGame(inst)
        exit_pol = constant_policy(cg, lambda s: s.actions.index((0, 0)))
        value, _, timed_out = best_response(cg, exit_pol, player=0)
        assert not timed_out
        hold_profit = game.action_profits(0, 0, game.root_state, [(0, 2)])[0]
        assert hold_profit > 0
        assert value >= hold_profit - 1e-9

    def test_br_weakly_improves_on_random_profiles(self, tiny_compiled):
        rng = np.random.default_rng(5)
        for _ in range(8):
            pol = random_policy(tiny_compiled, rng)
            base = expected_utilities(tiny_compiled, pol)
            for player in range(2):
                value, _, _ = best_response(tiny_compiled, pol, player)
                assert value >= base[player] - 1e-9

    def test_br_policy_achieves_reported_value(self, tiny_compiled):
        rng = np.random.default_rng(9)
        pol = random_policy(tiny_compiled, rng)
        for player in range(2):
            value, br_pol, _ = best_response(tiny_compiled, pol, player)
            combined = Policy()
            for s in tiny_compiled.infosets:
                src = br_pol if s.player == player else pol
                combined.actions[s.key] = s.actions
                combined[s.key] = src[s.key]
            achieved = expected_utilities(tiny_compiled, combined)[player]
            assert achieved == pytest.approx(value, abs=1e-9)


class TestNashConv:
    def test_exact_equilibrium_reports_zero(self):
        res = train(DOMINANCE, SolverConfig(iterations=3000, seed=1))
        pol = modal_policy(res.average_policy)
        report = nashconv(DOMINANCE, pol)
        assert report.nashconv == 0.0
        assert report.exact

    def test_nonnegative_and_dominates_each_regret(self, tiny_compiled):
        rng = np.random.default_rng(3)
        pol = random_policy(tiny_compiled, rng)
        report = nashconv(tiny_compiled, pol)
        assert report.nashconv >= 0.0
        for p in report.players:
            assert p.regret >= 0.0
            assert report.nashconv >= p.regret - 1e-12

    def test_report_roundtrip(self, tiny_compiled, tmp_path):
        pol = random_policy(tiny_compiled, np.random.default_rng(1))
        report = nashconv(tiny_compiled, pol)
        path = tmp_path / "nc.json"
        report.save(path)
        import json

        with open(path) as f:
            again = json.load(f)
        assert again["nashconv"] == pytest.approx(report.nashconv)
        assert len(again["players"]) == 2


class TestBruteForceOracle:
    def test_agrees_with_dfs_on_tiny_instances(self):
        rng = np.random.default_rng(17)
        rules = [tiny_rules(ProcessingRule.DROP_BY_BIDDER),
                 tiny_rules(ProcessingRule.DROP_BY_LICENSE)]
        checked = 0
        seed = 0
        while checked < 8 and seed < 20:
            insts = generate_matched_instances(
                tiny_sampling(seed=seed, num_types=1 + seed % 2), rules
            )
            seed += 1
            for inst in insts:
                cg = compile_game(inst)
                if max(
                    math.prod(len(s.actions) for s in cg.infosets
                              if s.player == p)
                    for p in range(2)
                ) > 20_000:
                    continue
                pol = random_policy(cg, rng)
                a = nashconv(cg, pol)
                b = brute_force_nashconv(cg, pol)
                assert abs(a.nashconv - b.nashconv) < 1e-9
                for pa, pb in zip(a.players, b.players):
                    assert abs(pa.best_response - pb.best_response) < 1e-9
                checked += 1
        assert checked >= 8

    def test_both_report_zero_at_dominant_profile(self):
        pol = Policy()
        for key, n in (("I0", 2), ("I1", 2)):
            v = np.zeros(n)
            v[0] = 1.0
            pol.actions[key] = ((0,), (1,))
            pol[key] = v
        assert nashconv(DOMINANCE, pol).nashconv == 0.0
        assert brute_force_nashconv(DOMINANCE, pol).nashconv == 0.0

    def test_strategy_count_guard(self, tiny_compiled):
        pol = random_policy(tiny_compiled, np.random.default_rng(2))
        with pytest.raises(StrategyCountError):
            brute_force_best_response(tiny_compiled, pol, 0, guard=1)

    def test_two_infoset_player_enumerates_four_strategies(self):
        """2 infosets x 2 actions -> at most 4 pure strategies scanned."""
        inst = make_instance([[STRONG], [STRONG]])
        cg = compile_game(inst)
        counts = [
            math.prod(len(s.actions) for s in cg.infosets if s.player == p)
            for p in range(2)
        ]
        pol = constant_policy(cg, lambda s: 0)
        for player in range(2):
            if counts[player] <= 10_000:
                v = brute_force_best_response(cg, pol, player)
                dfs_v, _, _ = best_response(cg, pol, player)
                assert v == pytest.approx(dfs_v, abs=1e-9)


class TestEntropy:
    def test_pure_policy_zero_bits(self):
        pol = Policy()
        pol.actions["a"] = ((0,), (1,))
        pol["a"] = np.array([1.0, 0.0])
        assert policy_entropy(pol) == 0.0

    def test_uniform_two_actions_one_bit(self):
        pol = Policy()
        pol.actions["a"] = ((0,), (1,))
        pol["a"] = np.array([0.5, 0.5])
        assert policy_entropy(pol) == pytest.approx(1.0)

    def test_uniform_four_actions_two_bits(self):
        pol = Policy()
        pol.actions["a"] = tuple((i,) for i in range(4))
        pol["a"] = np.full(4, 0.25)
        assert policy_entropy(pol) == pytest.approx(2.0)

    def test_single_action_states_ignored(self):
        pol = Policy()
        pol.actions["a"] = ((0,),)
        pol["a"] = np.array([1.0])
        pol.actions["b"] = ((0,), (1,))
        pol["b"] = np.array([0.5, 0.5])
        assert policy_entropy(pol) == pytest.approx(1.0)
