"""Auction engine rules: activity, queues, prices, settlement.

The two-bidder fixture is the stock configuration: after two warmup
rounds of (0U, 3E) bids at a 5% clock, the encumbered start-of-round
price is exactly 7 * 1.05^2 = 7.7175 and each bidder holds 9 activity
points.
"""

import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clockauction import engine
from clockauction.engine import (
    AuctionRules,
    EnumerationLimitError,
    IllegalBidError,
    ProcessingRule,
    ProductSpec,
    TerminationError,
    activity_of,
    activity_legal_demands,
    advance,
    all_demands,
    build_requests,
    final_settlement,
    initial_state,
    legal_demands_for_cap,
    outcome_distribution,
    play_warmup,
    process_queue,
    unsold_licenses,
)

U = ProductSpec(supply=1, opening_price=12, eligibility_points=5,
                bandwidth_fraction=1.0)
E = ProductSpec(supply=4, opening_price=7, eligibility_points=3,
                bandwidth_fraction=0.6)
PRODUCTS = (U, E)


def s0_state(rules):
    return play_warmup(rules)


class TestProductAndRules:
    def test_product_validation(self):
        with pytest.raises(ValueError):
            ProductSpec(supply=0, opening_price=1, eligibility_points=1)
        with pytest.raises(ValueError):
            ProductSpec(supply=1, opening_price=0, eligibility_points=1)
        with pytest.raises(ValueError):
            ProductSpec(supply=1, opening_price=1, eligibility_points=1,
                        bandwidth_fraction=1.5)

    def test_increment_is_exact(self, s0_rules):
        assert s0_rules.clock_increment == Fraction(1, 20)

    def test_warmup_bids_must_be_activity_legal(self):
        # Expanding from 9 to 11 points between warmup rounds is illegal.
        with pytest.raises(ValueError):
            AuctionRules(
                products=PRODUCTS, num_bidders=2, clock_increment="0.05",
                warmup_bids=(((0, 3), (0, 3)), ((1, 2), (0, 3))),
            )

    def test_rules_json_roundtrip(self, s0_rules):
        again = AuctionRules.loads(s0_rules.dumps())
        assert again == s0_rules
        assert again.clock_increment == Fraction(1, 20)

    def test_rules_json_rejects_unknown_schema(self, s0_rules):
        d = s0_rules.to_json_dict()
        d["schema_version"] = 99
        with pytest.raises(ValueError):
            AuctionRules.from_json_dict(d)


class TestActivity:
    def test_activity_examples(self):
        assert activity_of((0, 3), PRODUCTS) == 9
        assert activity_of((1, 1), PRODUCTS) == 8
        assert activity_of((0, 0), PRODUCTS) == 0

    def test_activity_length_mismatch(self):
        with pytest.raises(ValueError):
            activity_of((1, 1, 1), PRODUCTS)

    @given(st.integers(0, 1), st.integers(0, 4))
    def test_activity_is_dot_product(self, u, e):
        assert activity_of((u, e), PRODUCTS) == 5 * u + 3 * e

    def test_legal_demands_at_cap_9(self, s0_rules):
        state = s0_state(s0_rules)
        legal = activity_legal_demands(state, 0, PRODUCTS)
        assert legal == [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1)]

    def test_legal_demands_cap_zero(self):
        assert legal_demands_for_cap(PRODUCTS, 0) == [(0, 0)]

    def test_legal_demands_unconstrained(self):
        cap = engine.max_activity(PRODUCTS)
        assert len(legal_demands_for_cap(PRODUCTS, cap)) == 2 * 5

    def test_no_actions_after_termination(self, s0_rules):
        state = s0_state(s0_rules)
        dist = outcome_distribution(state, ((0, 2), (0, 2)), s0_rules)
        terminal = advance(state, dist.outcomes[0], s0_rules)
        with pytest.raises(TerminationError):
            activity_legal_demands(terminal, 0, PRODUCTS)


class TestWarmup:
    def test_price_chain_is_exact(self, s0_rules):
        state = s0_state(s0_rules)
        assert state.round == 3
        assert state.prices == (Fraction(12), Fraction("7.7175"))
        assert float(state.prices[1]) == pytest.approx(7.7175, abs=1e-9)

    def test_sale_guarantee_and_caps(self, s0_rules):
        state = s0_state(s0_rules)
        assert state.sale_guaranteed == (False, True)
        assert state.activity_cap == (9, 9)
        assert state.processed_demand == ((0, 3), (0, 3))
        assert state.aggregate_demand() == (0, 6)

    def test_warmup_may_terminate_the_auction(self):
        rules = AuctionRules(
            products=PRODUCTS, num_bidders=2, clock_increment="0.05",
            warmup_bids=(((0, 2), (0, 2)),),
        )
        state = play_warmup(rules)
        assert state.terminated


class TestRequestsAndQueues:
    def test_request_order_drops_before_pickups(self):
        reqs = build_requests([(0, 3), (0, 3)], [(1, 1), (1, 1)])
        assert [(r.bidder, r.product, r.delta) for r in reqs] == [
            (0, 1, -2), (0, 0, 1), (1, 1, -2), (1, 0, 1),
        ]

    def test_no_change_means_no_requests(self):
        assert build_requests([(0, 3)], [(0, 3)]) == []

    def test_single_drop_to_zero(self):
        reqs = build_requests([(0, 3), (0, 3)], [(0, 3), (0, 0)])
        assert [(r.bidder, r.product, r.delta) for r in reqs] == [(1, 1, -3)]

    def test_drop_by_bidder_units_are_atomic(self):
        reqs = build_requests([(0, 3), (0, 3)], [(1, 1), (1, 1)])
        entries = engine.bidder_queue_entries(reqs)
        assert [e.bidder for e in entries] == [0, 1]
        assert entries[0].requests == ((1, -2), (0, 1))

    def test_drop_by_license_splits_drops_only(self):
        reqs = build_requests([(0, 3), (0, 3)], [(1, 1), (1, 1)])
        drops, pickups = engine.license_queue_entries(reqs)
        assert [(d.bidder, d.requests) for d in drops] == [
            (0, ((1, -1),)), (0, ((1, -1),)), (1, ((1, -1),)), (1, ((1, -1),)),
        ]
        assert [(p.bidder, p.requests) for p in pickups] == [
            (0, ((0, 1),)), (1, ((0, 1),)),
        ]


class TestProcessQueue:
    def test_switch_processed_in_bidder_order(self, s0_rules):
        state = s0_state(s0_rules)
        reqs = build_requests(state.processed_demand, ((1, 1), (1, 1)))
        entries = engine.bidder_queue_entries(reqs)
        out = process_queue(state, ((1, 1), (1, 1)), s0_rules, entries)
        assert out.new_processed_demand == ((1, 1), (0, 3))
        # Losing bidder's requests stay entirely unfulfilled.
        assert (1, 0, 1) in [(r.bidder, r.product, r.delta)
                             for r in out.unfulfilled]

    def test_license_order_both_drop_one(self, s0_rules_license):
        state = s0_state(s0_rules_license)
        reqs = build_requests(state.processed_demand, ((1, 1), (1, 1)))
        drops, pickups = engine.license_queue_entries(reqs)
        # Interleave so the first two unit drops belong to different bidders.
        ordering = [drops[0], drops[2], drops[1], drops[3]] + pickups
        out = process_queue(state, ((1, 1), (1, 1)), s0_rules_license, ordering)
        assert out.new_processed_demand == ((0, 2), (0, 2))

    def test_identity_when_submitting_previous(self, s0_rules):
        state = s0_state(s0_rules)
        out = process_queue(state, state.processed_demand, s0_rules, [])
        assert out.new_processed_demand == state.processed_demand
        assert out.applied == ()
        assert out.unfulfilled == ()

    def test_rejects_illegal_bid(self, s0_rules):
        state = s0_state(s0_rules)
        with pytest.raises(IllegalBidError):
            process_queue(state, ((1, 2), (0, 3)), s0_rules, [])  # 11 > 9 points


class TestOutcomeDistribution:
    def test_bidder_rule_two_outcomes(self, s0_rules):
        state = s0_state(s0_rules)
        dist = outcome_distribution(state, ((1, 1), (1, 1)), s0_rules)
        assert dist.is_lottery
        assert sorted(dist.probabilities) == [Fraction(1, 2), Fraction(1, 2)]
        assert sorted(o.new_processed_demand for o in dist.outcomes) == [
            ((0, 3), (1, 1)), ((1, 1), (0, 3)),
        ]

    def test_license_rule_three_outcomes(self, s0_rules_license):
        state = s0_state(s0_rules_license)
        dist = outcome_distribution(state, ((1, 1), (1, 1)), s0_rules_license)
        by_outcome = {
            o.new_processed_demand: p
            for o, p in zip(dist.outcomes, dist.probabilities)
        }
        assert by_outcome == {
            ((0, 2), (0, 2)): Fraction(2, 3),
            ((1, 1), (0, 3)): Fraction(1, 6),
            ((0, 3), (1, 1)): Fraction(1, 6),
        }

    def test_no_change_single_outcome(self, s0_rules):
        state = s0_state(s0_rules)
        dist = outcome_distribution(state, ((0, 3), (0, 3)), s0_rules)
        assert not dist.is_lottery
        assert dist.probabilities == (Fraction(1),)

    def test_enumeration_guard(self, s0_rules_license):
        rules = AuctionRules(
            products=PRODUCTS, num_bidders=2, clock_increment="0.05",
            processing_rule=ProcessingRule.DROP_BY_LICENSE,
            warmup_bids=(((0, 3), (0, 3)), ((0, 3), (0, 3))),
            enumeration_limit=3,
        )
        state = s0_state(rules)
        with pytest.raises(EnumerationLimitError):
            outcome_distribution(state, ((1, 1), (1, 1)), rules)


class TestAdvance:
    def test_overdemand_raises_price(self, s0_rules):
        state = s0_state(s0_rules)
        dist = outcome_distribution(state, ((0, 3), (0, 3)), s0_rules)
        nxt = advance(state, dist.outcomes[0], s0_rules)
        assert not nxt.terminated
        assert nxt.round == 4
        assert nxt.prices == (Fraction(12), Fraction("8.103375"))

    def test_partial_switch_keeps_auction_alive(self, s0_rules):
        state = s0_state(s0_rules)
        reqs = build_requests(state.processed_demand, ((1, 1), (1, 1)))
        out = process_queue(state, ((1, 1), (1, 1)), s0_rules,
                            engine.bidder_queue_entries(reqs))
        nxt = advance(state, out, s0_rules)
        # Aggregates (1, 4): E no longer overdemanded, U at supply.
        assert nxt.terminated

    def test_clearing_terminates(self, s0_rules):
        state = s0_state(s0_rules)
        dist = outcome_distribution(state, ((0, 2), (0, 2)), s0_rules)
        nxt = advance(state, dist.outcomes[0], s0_rules)
        assert nxt.terminated
        assert nxt.prices == state.prices

    def test_single_product_increment_restriction(self, s0_rules):
        rules = AuctionRules(
            products=PRODUCTS, num_bidders=2, clock_increment="0.05",
            warmup_bids=(((1, 3), (1, 3)),),
        )
        state = play_warmup(rules)  # both products overdemanded
        dist = outcome_distribution(state, ((1, 3), (1, 3)), rules)
        nxt = advance(state, dist.outcomes[0], rules, raise_prices_on=[1])
        assert nxt.prices[0] == state.prices[0]
        assert nxt.prices[1] == state.prices[1] * Fraction(21, 20)


class TestSettlement:
    def test_settlement_after_clear(self, s0_rules):
        state = s0_state(s0_rules)
        dist = outcome_distribution(state, ((0, 2), (0, 2)), s0_rules)
        terminal = advance(state, dist.outcomes[0], s0_rules)
        alloc, payments = final_settlement(terminal, s0_rules)
        assert alloc == ((0, 2), (0, 2))
        assert payments == (Fraction("15.435"), Fraction("15.435"))
        assert sum(payments) == Fraction("30.87")
        assert unsold_licenses(terminal, s0_rules) == (1, 0)

    def test_settlement_after_switch(self, s0_rules):
        state = s0_state(s0_rules)
        reqs = build_requests(state.processed_demand, ((1, 1), (1, 1)))
        out = process_queue(state, ((1, 1), (1, 1)), s0_rules,
                            engine.bidder_queue_entries(reqs))
        terminal = advance(state, out, s0_rules)
        _, payments = final_settlement(terminal, s0_rules)
        assert payments == (Fraction("19.7175"), Fraction("23.1525"))

    def test_zero_allocation_zero_payment(self):
        rules = AuctionRules(
            products=PRODUCTS, num_bidders=2, clock_increment="0.05",
            warmup_bids=(((0, 0), (0, 1)),),
        )
        terminal = play_warmup(rules)
        assert terminal.terminated
        alloc, payments = final_settlement(terminal, rules)
        assert payments[0] == 0

    def test_settlement_requires_termination(self, s0_rules):
        with pytest.raises(TerminationError):
            final_settlement(s0_state(s0_rules), s0_rules)


def _random_rules(rng):
    products = tuple(
        ProductSpec(
            supply=int(rng.integers(1, 4)),
            opening_price=int(rng.integers(2, 9)),
            eligibility_points=int(rng.integers(1, 4)),
            bandwidth_fraction=float(rng.uniform(0.3, 1.0)),
        )
        for _ in range(int(rng.integers(1, 3)))
    )
    rule = (ProcessingRule.DROP_BY_BIDDER
            if rng.random() < 0.5 else ProcessingRule.DROP_BY_LICENSE)
    return AuctionRules(
        products=products,
        num_bidders=int(rng.integers(2, 4)),
        clock_increment="0.25",
        processing_rule=rule,
    )


def _random_reachable_state(rules, rng, rounds=2):
    state = initial_state(rules)
    for _ in range(rounds):
        if state.terminated:
            break
        submitted = tuple(
            legal_demands_for_cap(rules.products, state.activity_cap[i])[
                int(rng.integers(len(legal_demands_for_cap(
                    rules.products, state.activity_cap[i]))))
            ]
            for i in range(rules.num_bidders)
        )
        dist = outcome_distribution(state, submitted, rules)
        idx = int(rng.integers(len(dist.outcomes)))
        state = advance(state, dist.outcomes[idx], rules,
                        was_lottery=dist.is_lottery)
    return state


class TestQueueInvariants:
    """Invariants over exhaustively enumerated orderings of random rounds."""

    def test_invariants_on_random_instances(self):
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 60:
            rules = _random_rules(rng)
            state = _random_reachable_state(rules, rng)
            if state.terminated:
                continue
            submitted = tuple(
                legal_demands_for_cap(rules.products, state.activity_cap[i])[
                    int(rng.integers(len(legal_demands_for_cap(
                        rules.products, state.activity_cap[i]))))
                ]
                for i in range(rules.num_bidders)
            )
            try:
                dist = outcome_distribution(state, submitted, rules)
            except EnumerationLimitError:
                continue
            assert sum(dist.probabilities) == 1
            assert len(set(o.new_processed_demand for o in dist.outcomes)) \
                == len(dist.outcomes)
            for outcome in dist.outcomes:
                processed = outcome.new_processed_demand
                agg = [sum(row[j] for row in processed)
                       for j in range(len(rules.products))]
                for j, p in enumerate(rules.products):
                    if state.sale_guaranteed[j]:
                        assert agg[j] >= p.supply, "sale guarantee violated"
                for i in range(rules.num_bidders):
                    act = activity_of(processed[i], rules.products)
                    assert act <= state.activity_cap[i], "activity expanded"
                    for j in range(len(rules.products)):
                        lo = min(state.processed_demand[i][j], submitted[i][j])
                        hi = max(state.processed_demand[i][j], submitted[i][j])
                        assert lo <= processed[i][j] <= hi, "overshoot"
            checked += 1

    def test_price_monotonicity_across_rounds(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            rules = _random_rules(rng)
            state = _random_reachable_state(rules, rng, rounds=4)
            prices = [rec.prices for rec in state.history]
            if state.terminated:
                prices.append(state.prices)
            for before, after in zip(prices, prices[1:]):
                for pb, pa in zip(before, after):
                    assert pa >= pb
            for rec, nxt in zip(state.history, state.history[1:]):
                for j, p in enumerate(rules.products):
                    over = rec.aggregate[j] > p.supply
                    rose = nxt.prices[j] > rec.prices[j]
                    assert rose == over

    def test_distribution_matches_direct_counts(self, s0_rules):
        # Probabilities are exactly (orderings yielding outcome) / (total).
        state = s0_state(s0_rules)
        reqs = build_requests(state.processed_demand, ((1, 1), (0, 2)))
        entries = engine.bidder_queue_entries(reqs)
        counts = {}
        for perm in itertools.permutations(entries):
            out = process_queue(state, ((1, 1), (0, 2)), s0_rules, list(perm))
            counts[out.new_processed_demand] = counts.get(
                out.new_processed_demand, 0) + 1
        dist = outcome_distribution(state, ((1, 1), (0, 2)), s0_rules)
        total = sum(counts.values())
        for outcome, prob in zip(dist.outcomes, dist.probabilities):
            assert prob == Fraction(counts[outcome.new_processed_demand], total)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1), st.integers(0, 4), st.integers(0, 1), st.integers(0, 4))
def test_fixed_point_always_terminates(u0, e0, u1, e1):
    """process_queue halts for arbitrary legal submissions from the S0 start."""
    rules = AuctionRules(
        products=PRODUCTS, num_bidders=2, clock_increment="0.05",
        warmup_bids=(((0, 3), (0, 3)), ((0, 3), (0, 3))),
    )
    state = play_warmup(rules)
    submitted = []
    for (u, e) in ((u0, e0), (u1, e1)):
        d = (u, e)
        if activity_of(d, PRODUCTS) > 9:
            d = (0, min(e, 3))
        submitted.append(d)
    dist = outcome_distribution(state, tuple(submitted), rules)
    assert sum(dist.probabilities) == 1
