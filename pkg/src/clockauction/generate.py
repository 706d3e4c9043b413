"""Instance generation with rejection sampling.

Candidates are resampled until they pass, in order: (1) every joint type
realization admits a surplus-optimal allocation at opening prices giving
every bidder at least one license; (2) straightforward bidding concludes
within the configured round budget; (3) the worst-case probe raising only
one randomly chosen overdemanded price per round concludes quickly enough
on average; (4) the game's information-state counts sit inside the
configured size window.  Checks (2) and (3) always run under the
drop-by-bidder rule.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import engine
from .engine import AuctionRules, ProcessingRule
from .game import AuctionGame, GameInstance
from .harness import straightforward_demand
from .tree import SizeGuardError, compile_game
from .valuation import SamplingConfig, sample_profile, surplus_optimal_allocation

REASONS = ("allocation", "straightforward_rounds", "single_increment_rounds",
           "size")

# Hard per-episode cap for the length probes; episodes cut off here count
# as this many rounds, which can only make rejection more likely.
PROBE_ROUND_CAP = 200


class GenerationError(RuntimeError):
    """Retry budget exhausted before any candidate was accepted."""

    def __init__(self, message: str, stats: dict):
        super().__init__(message)
        self.stats = stats


def _sample_outcome(rng: np.random.Generator, dist) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(dist.probabilities):
        acc += float(p)
        if u < acc:
            return i
    return len(dist.probabilities) - 1


def straightforward_rounds(game: AuctionGame, type_profile,
                           rng: np.random.Generator,
                           single_increment: bool = False,
                           cap: int = PROBE_ROUND_CAP) -> int:
    """Strategic rounds a straightforward playthrough takes to conclude.

    Processing lotteries are resolved by sampling from their exact
    distributions.  With `single_increment`, only one uniformly chosen
    overdemanded product's price rises each round.
    """
    state = game.root_state
    warmup = len(state.history)
    while not state.terminated:
        if len(state.history) - warmup >= cap:
            break
        joint = [
            straightforward_demand(game, p, type_profile[p], state)
            for p in range(game.num_players)
        ]
        dist = engine.outcome_distribution(state, joint, game.rules)
        outcome = dist.outcomes[_sample_outcome(rng, dist)]
        raise_on = None
        if single_increment:
            agg = [
                sum(row[j] for row in outcome.new_processed_demand)
                for j in range(len(game.rules.products))
            ]
            overs = [
                j for j, p in enumerate(game.rules.products)
                if agg[j] > p.supply
            ]
            if overs:
                raise_on = [overs[int(rng.integers(len(overs)))]]
        state = engine.advance(state, outcome, game.rules,
                               was_lottery=dist.is_lottery,
                               raise_prices_on=raise_on)
    return len(state.history) - warmup


def _check_rng(instance: GameInstance) -> np.random.Generator:
    # Seeded from the candidate itself so re-running the checks on an
    # accepted instance reproduces the accepting draw exactly.
    return np.random.default_rng(
        np.random.SeedSequence((instance.seed, 0xC0FFEE))
    )


def rejection_check(instance: GameInstance, config: SamplingConfig
                    ) -> str | None:
    """First failing rejection reason, or None when the candidate passes."""
    dbb = replace(
        instance,
        rules=replace(instance.rules, processing_rule=ProcessingRule.DROP_BY_BIDDER),
    )
    game = AuctionGame(dbb)
    profiles = game.type_profiles()
    rng = _check_rng(instance)

    if config.allocation_check:
        opening = instance.rules.opening_prices()
        for tp in profiles:
            realization = [
                instance.profile.types[i][t] for i, t in enumerate(tp)
            ]
            _, _, covers = surplus_optimal_allocation(
                realization, opening, instance.rules.products
            )
            if not covers:
                return "allocation"

    for tp in profiles:
        rounds = straightforward_rounds(game, tp, rng)
        if rounds > config.max_straightforward_rounds:
            return "straightforward_rounds"

    lengths = []
    for _ in range(config.single_increment_samples):
        tp = profiles[int(rng.integers(len(profiles)))]
        lengths.append(
            straightforward_rounds(game, tp, rng, single_increment=True)
        )
    if lengths and float(np.mean(lengths)) > config.max_single_increment_rounds:
        return "single_increment_rounds"

    try:
        counts, _ = _counts_under_guard(instance, config)
    except SizeGuardError:
        return "size"
    if min(counts) < config.min_infostates_per_player:
        return "size"
    return None


def _counts_under_guard(instance: GameInstance, config: SamplingConfig):
    cg = compile_game(
        instance, max_infostates_per_player=config.max_infostates_per_player
    )
    return cg.infostate_counts(), cg


def _instance_id(rules: AuctionRules, config: SamplingConfig, seed: int) -> str:
    return (
        f"{rules.num_bidders}b{config.num_types}t"
        f"_{rules.processing_rule.value}_seed{seed}"
    )


def generate_instance(config: SamplingConfig, rules: AuctionRules,
                      seed: int | None = None) -> GameInstance:
    """Resample values until one candidate passes every enabled check."""
    return generate_matched_instances(config, [rules], seed)[0]


def generate_matched_instances(config: SamplingConfig,
                               rules_variants: list[AuctionRules],
                               seed: int | None = None) -> list[GameInstance]:
    """One accepted value profile instantiated under each rule variant.

    All variants share byte-identical valuations; every variant must pass
    the rejection checks for the profile to be accepted.
    """
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5A4D91)))
    base = rules_variants[0]
    rejections = {r: 0 for r in REASONS}
    for attempt in range(config.max_retries):
        profile = sample_profile(rng, config, base.num_bidders, base.products)
        candidates = [
            GameInstance(
                instance_id=_instance_id(rules, config, seed),
                rules=rules,
                profile=profile,
                seed=seed,
            )
            for rules in rules_variants
        ]
        reason = None
        for cand in candidates:
            reason = rejection_check(cand, config)
            if reason is not None:
                break
        if reason is None:
            stats = {
                "attempts": attempt + 1,
                "rejections": dict(rejections),
            }
            return [replace(c, rejection_stats=stats) for c in candidates]
        rejections[reason] += 1
    raise GenerationError(
        f"no acceptable instance within {config.max_retries} samples",
        stats={"attempts": config.max_retries, "rejections": rejections},
    )
