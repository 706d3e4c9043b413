"""Bayesian extensive-form view of the clock auction.

Wraps an auction rule set and a value profile into a game with a uniform
type chance node at the root, simultaneous demand submissions each round,
and bid-processing chance nodes.  Bidders observe start-of-round prices,
past aggregate demands, and their own submitted/processed demands; they
never see opponents' individual demands or types.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import engine
from .engine import (
    AuctionRules,
    AuctionState,
    Demand,
    OutcomeDistribution,
    TerminationError,
    activity_of,
    all_demands,
)
from .valuation import TypeParams, ValueProfile

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GameInstance:
    """One solvable unit of experimentation: rules plus sampled values."""

    instance_id: str
    rules: AuctionRules
    profile: ValueProfile
    seed: int = 0
    rejection_stats: dict = field(default_factory=dict, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.instance_id,
            "seed": self.seed,
            "rules": self.rules.to_json_dict(),
            "types": [
                [
                    {
                        "value_per_subscriber": t.value_per_subscriber,
                        "market_share": t.market_share,
                        "keypoint_width": t.keypoint_width,
                        "sigmoid_levels": list(t.sigmoid_levels),
                    }
                    for t in bidder
                ]
                for bidder in self.profile.types
            ],
            "bundles": [list(b) for b in self.profile.bundles],
            "value_tables": [
                [[float(v) for v in table] for table in bidder]
                for bidder in self.profile.tables
            ],
            "rejection_stats": self.rejection_stats,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GameInstance":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported instance schema: {d.get('schema_version')!r}")
        rules = AuctionRules.from_json_dict(d["rules"])
        types = [
            [
                TypeParams(
                    value_per_subscriber=t["value_per_subscriber"],
                    market_share=t["market_share"],
                    keypoint_width=t["keypoint_width"],
                    sigmoid_levels=tuple(t["sigmoid_levels"]),
                )
                for t in bidder
            ]
            for bidder in d["types"]
        ]
        profile = ValueProfile.build(types, rules.products)
        # The embedded tables are an audit trail; recomputation must agree.
        for i, bidder in enumerate(d["value_tables"]):
            for t, table in enumerate(bidder):
                if not np.allclose(table, profile.tables[i][t], atol=1e-9):
                    raise ValueError("stored value table disagrees with parameters")
        return cls(
            instance_id=d["id"],
            rules=rules,
            profile=profile,
            seed=d.get("seed", 0),
            rejection_stats=d.get("rejection_stats", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "GameInstance":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))

    @property
    def num_types(self) -> int:
        return max(len(ts) for ts in self.profile.types)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _vec(xs) -> str:
    return ",".join(str(x) for x in xs)


class AuctionGame:
    """Game-level operations over one instance."""

    def __init__(self, instance: GameInstance):
        self.instance = instance
        self.rules = instance.rules
        self.profile = instance.profile
        products = self.rules.products
        self.bundles: list[Demand] = all_demands(products)
        self.bundle_index = {b: i for i, b in enumerate(self.bundles)}
        self.bundle_matrix = np.array(self.bundles, dtype=np.int64)
        self.bundle_activity = np.array(
            [activity_of(b, products) for b in self.bundles], dtype=np.int64
        )
        # values[i][t] aligned with self.bundles
        self.values = [
            [np.asarray(tbl, dtype=np.float64) for tbl in bidder]
            for bidder in instance.profile.tables
        ]
        self.root_state = engine.play_warmup(self.rules)
        self.num_players = self.rules.num_bidders
        # Bid processing is price-independent, so identical (holdings, caps,
        # guarantees, bids) subproblems recur across rounds, types, and
        # branches; caching them makes large-tree enumeration tractable.
        self._dist_cache: dict = {}
        self._action_cache: dict = {}

    # ----- chance structure -------------------------------------------------

    def type_profiles(self) -> list[tuple[int, ...]]:
        counts = [len(ts) for ts in self.profile.types]
        return list(itertools.product(*(range(c) for c in counts)))

    def root_chance(self) -> list[tuple[tuple[int, ...], Fraction]]:
        """Uniform, independent distribution over joint type profiles."""
        profiles = self.type_profiles()
        p = Fraction(1, len(profiles))
        return [(tp, p) for tp in profiles]

    # ----- observations and actions -----------------------------------------

    def infostate_key(self, player: int, type_idx: int,
                      state: AuctionState) -> str:
        """Canonical byte string of everything `player` can distinguish."""
        parts = [f"b{player}", f"t{type_idx}"]
        for rec in state.history:
            parts.append(
                f"P({_vec(rec.prices)})"
                f"s({_vec(rec.submitted[player])})"
                f"x({_vec(rec.processed[player])})"
                f"Z({_vec(rec.aggregate)})"
            )
        parts.append(
            f"now:P({_vec(state.prices)})cap{state.activity_cap[player]}"
        )
        return "|".join(parts)

    def costs(self, state: AuctionState) -> np.ndarray:
        prices = np.array([float(p) for p in state.prices])
        return self.bundle_matrix @ prices

    def legal_actions(self, player: int, type_idx: int,
                      state: AuctionState) -> list[Demand]:
        """Activity-legal demands, minus bids dominated by dropping out.

        With pruning on, a demand survives only if its value covers its cost
        at the current start-of-round prices; the all-zero demand is always
        available so a bidder can exit.
        """
        if state.terminated:
            raise TerminationError("no actions at a terminal state")
        cap = state.activity_cap[player]
        key = (player, type_idx, cap, state.prices)
        cached = self._action_cache.get(key)
        if cached is not None:
            return list(cached)
        mask = self.bundle_activity <= cap
        if self.rules.dominated_bid_pruning:
            profits = self.values[player][type_idx] - self.costs(state)
            mask = mask & (profits >= 0.0)
            mask[0] = True  # all-zero bundle
        actions = [self.bundles[i] for i in np.nonzero(mask)[0]]
        self._action_cache[key] = tuple(actions)
        return actions

    def action_profits(self, player: int, type_idx: int, state: AuctionState,
                       actions: Sequence[Demand]) -> np.ndarray:
        costs = self.costs(state)
        vals = self.values[player][type_idx]
        idx = [self.bundle_index[a] for a in actions]
        return vals[idx] - costs[idx]

    def round_penalties(self, profits: np.ndarray) -> np.ndarray:
        """Per-action penalty in [0, 1]: 0 for the most profitable legal bid,
        1 for the least, linear in between; 0 everywhere on ties."""
        hi = profits.max()
        lo = profits.min()
        if hi - lo <= 0:
            return np.zeros_like(profits)
        return (hi - profits) / (hi - lo)

    def round_penalty(self, player: int, type_idx: int, state: AuctionState,
                      action: Demand) -> float:
        actions = self.legal_actions(player, type_idx, state)
        profits = self.action_profits(player, type_idx, state, actions)
        return float(self.round_penalties(profits)[actions.index(action)])

    # ----- transitions --------------------------------------------------------

    def step(self, state: AuctionState, joint: Sequence[Demand]
             ) -> tuple[OutcomeDistribution, list[AuctionState]]:
        """Process one round of simultaneous demands.

        Returns the exact outcome distribution plus the advanced successor
        state for each outcome (aligned by index).
        """
        joint = tuple(tuple(d) for d in joint)
        key = (state.processed_demand, state.activity_cap,
               state.sale_guaranteed, joint)
        dist = self._dist_cache.get(key)
        if dist is None:
            dist = engine.outcome_distribution(state, joint, self.rules)
            self._dist_cache[key] = dist
        succs = [
            engine.advance(state, o, self.rules, was_lottery=dist.is_lottery)
            for o in dist.outcomes
        ]
        return dist, succs

    # ----- utilities ----------------------------------------------------------

    def terminal_utilities(self, state: AuctionState,
                           type_profile: Sequence[int]) -> np.ndarray:
        if not state.terminated:
            raise TerminationError("utilities require a terminal state")
        _, payments = engine.final_settlement(state, self.rules)
        out = np.zeros(self.num_players)
        for i in range(self.num_players):
            b = self.bundle_index[state.processed_demand[i]]
            out[i] = self.values[i][type_profile[i]][b] - float(payments[i])
        return out


@dataclass(frozen=True)
class History:
    """A full play path: type profile plus per-round (joint bid, outcome index).

    Replays through the engine on construction; the cached state is
    guaranteed to match a fresh replay because it is one.
    """

    game: AuctionGame
    type_profile: tuple[int, ...]
    steps: tuple[tuple[tuple[Demand, ...], int], ...] = ()

    def __post_init__(self):
        state = self.game.root_state
        penalties = np.zeros(self.game.num_players)
        for joint, outcome_idx in self.steps:
            for p in range(self.game.num_players):
                penalties[p] += self.game.round_penalty(
                    p, self.type_profile[p], state, joint[p]
                )
            dist, succs = self.game.step(state, joint)
            state = succs[outcome_idx]
        object.__setattr__(self, "_state", state)
        object.__setattr__(self, "_penalties", penalties)

    @property
    def state(self) -> AuctionState:
        return self._state

    @property
    def is_terminal(self) -> bool:
        return self._state.terminated

    def child(self, joint: Sequence[Demand], outcome_idx: int) -> "History":
        return History(
            self.game,
            self.type_profile,
            self.steps + ((tuple(tuple(a) for a in joint), outcome_idx),),
        )

    def terminal_utility(self, with_penalty: bool = False) -> np.ndarray:
        """Quasilinear payoffs; penalties are a training-only shaping term."""
        u = self.game.terminal_utilities(self._state, self.type_profile)
        if with_penalty:
            u = u - self._penalties
        return u
