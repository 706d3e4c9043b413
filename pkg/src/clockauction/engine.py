"""Clock auction rules engine.

Implements the deterministic mechanics of a multi-product clock auction:
activity-rule legality, bid-processing queues (drop-by-bidder and
drop-by-license) with exact enumeration of their random outcomes, price
updates, and final settlement.

Prices are exact `Fraction`s so that multiplicative price chains
(7 -> 7.35 -> 7.7175 at a 5% increment) round-trip bit-exactly through
state keys, termination checks, and payments.  All currency is in
millions.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

Demand = tuple[int, ...]

SCHEMA_VERSION = 1

# Hard cap on the number of queue orderings outcome_distribution will
# enumerate before refusing (it never samples).
DEFAULT_ENUMERATION_LIMIT = math.factorial(10)


class IllegalBidError(ValueError):
    """A submitted demand vector violates the activity rule or bid domain."""


class EnumerationLimitError(RuntimeError):
    """Too many queue orderings to enumerate exhaustively."""


class TerminationError(RuntimeError):
    """Operation called on the wrong side of auction termination."""


class ProcessingRule(str, Enum):
    DROP_BY_BIDDER = "drop_by_bidder"
    DROP_BY_LICENSE = "drop_by_license"


def _to_fraction(x) -> Fraction:
    # str() round-trip keeps decimal literals like 0.05 exact (1/20), which
    # a direct float->Fraction conversion would not.
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class ProductSpec:
    """One product: `supply` identical licenses, indexed by list position."""

    supply: int
    opening_price: Fraction
    eligibility_points: int
    bandwidth_fraction: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "opening_price", _to_fraction(self.opening_price))
        if self.supply < 1:
            raise ValueError("supply must be >= 1")
        if self.eligibility_points < 1:
            raise ValueError("eligibility_points must be >= 1")
        if self.opening_price <= 0:
            raise ValueError("opening_price must be positive")
        if not (0.0 < self.bandwidth_fraction <= 1.0):
            raise ValueError("bandwidth_fraction must be in (0, 1]")


@dataclass(frozen=True)
class AuctionRules:
    products: tuple[ProductSpec, ...]
    num_bidders: int
    clock_increment: Fraction
    processing_rule: ProcessingRule = ProcessingRule.DROP_BY_BIDDER
    warmup_bids: tuple[tuple[Demand, ...], ...] = ()  # [round][bidder]
    dominated_bid_pruning: bool = True
    enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "products", tuple(self.products))
        object.__setattr__(self, "clock_increment", _to_fraction(self.clock_increment))
        object.__setattr__(
            self,
            "warmup_bids",
            tuple(tuple(tuple(b) for b in rnd) for rnd in self.warmup_bids),
        )
        object.__setattr__(
            self, "processing_rule", ProcessingRule(self.processing_rule)
        )
        if self.num_bidders < 2:
            raise ValueError("num_bidders must be >= 2")
        if self.clock_increment <= 0:
            raise ValueError("clock_increment must be positive")
        for rnd in self.warmup_bids:
            if len(rnd) != self.num_bidders:
                raise ValueError("warmup round must list one bid per bidder")
            for bid in rnd:
                check_demand(bid, self.products)
        # Warmup bids must not expand activity round over round.
        cap = max_activity(self.products)
        caps = [cap] * self.num_bidders
        for rnd in self.warmup_bids:
            for i, bid in enumerate(rnd):
                act = activity_of(bid, self.products)
                if act > caps[i]:
                    raise ValueError("warmup bids violate the activity rule")
                caps[i] = act

    @property
    def num_products(self) -> int:
        return len(self.products)

    def supplies(self) -> tuple[int, ...]:
        return tuple(p.supply for p in self.products)

    def opening_prices(self) -> tuple[Fraction, ...]:
        return tuple(p.opening_price for p in self.products)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "num_bidders": self.num_bidders,
            "clock_increment": str(self.clock_increment),
            "processing_rule": self.processing_rule.value,
            "dominated_bid_pruning": self.dominated_bid_pruning,
            "enumeration_limit": self.enumeration_limit,
            "products": [
                {
                    "supply": p.supply,
                    "opening_price": str(p.opening_price),
                    "eligibility_points": p.eligibility_points,
                    "bandwidth_fraction": p.bandwidth_fraction,
                }
                for p in self.products
            ],
            "warmup_bids": [
                [list(b) for b in rnd] for rnd in self.warmup_bids
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AuctionRules":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported rules schema: {d.get('schema_version')!r}")
        return cls(
            products=tuple(
                ProductSpec(
                    supply=p["supply"],
                    opening_price=Fraction(p["opening_price"]),
                    eligibility_points=p["eligibility_points"],
                    bandwidth_fraction=p["bandwidth_fraction"],
                )
                for p in d["products"]
            ),
            num_bidders=d["num_bidders"],
            clock_increment=Fraction(d["clock_increment"]),
            processing_rule=ProcessingRule(d["processing_rule"]),
            warmup_bids=tuple(
                tuple(tuple(b) for b in rnd) for rnd in d["warmup_bids"]
            ),
            dominated_bid_pruning=d.get("dominated_bid_pruning", True),
            enumeration_limit=d.get("enumeration_limit", DEFAULT_ENUMERATION_LIMIT),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def loads(cls, s: str) -> "AuctionRules":
        return cls.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class RoundRecord:
    """What happened in one completed round."""

    prices: tuple[Fraction, ...]
    submitted: tuple[Demand, ...]
    processed: tuple[Demand, ...]
    aggregate: tuple[int, ...]
    was_lottery: bool


@dataclass(frozen=True)
class AuctionState:
    """Immutable start-of-round snapshot (or terminal snapshot)."""

    round: int
    prices: tuple[Fraction, ...]
    processed_demand: tuple[Demand, ...]
    activity_cap: tuple[int, ...]
    sale_guaranteed: tuple[bool, ...]
    terminated: bool
    history: tuple[RoundRecord, ...] = ()

    def aggregate_demand(self) -> tuple[int, ...]:
        return tuple(
            sum(row[j] for row in self.processed_demand)
            for j in range(len(self.prices))
        )


def initial_state(rules: AuctionRules) -> AuctionState:
    m = rules.num_products
    return AuctionState(
        round=1,
        prices=rules.opening_prices(),
        processed_demand=tuple((0,) * m for _ in range(rules.num_bidders)),
        activity_cap=(max_activity(rules.products),) * rules.num_bidders,
        sale_guaranteed=(False,) * m,
        terminated=False,
    )


def check_demand(demand: Sequence[int], products: Sequence[ProductSpec]) -> Demand:
    if len(demand) != len(products):
        raise ValueError(
            f"demand has {len(demand)} entries for {len(products)} products"
        )
    for d, p in zip(demand, products):
        if not (0 <= d <= p.supply):
            raise ValueError(f"demand {tuple(demand)} outside [0, supply]")
    return tuple(demand)


def activity_of(demand: Sequence[int], products: Sequence[ProductSpec]) -> int:
    """Total eligibility points of a demand vector."""
    check_demand(demand, products)
    return sum(d * p.eligibility_points for d, p in zip(demand, products))


def max_activity(products: Sequence[ProductSpec]) -> int:
    return sum(p.supply * p.eligibility_points for p in products)


def all_demands(products: Sequence[ProductSpec]) -> list[Demand]:
    """Every demand vector in the bid domain, lexicographic order."""
    return list(itertools.product(*(range(p.supply + 1) for p in products)))


def legal_demands_for_cap(products: Sequence[ProductSpec], cap: int) -> list[Demand]:
    return [d for d in all_demands(products) if activity_of(d, products) <= cap]


def activity_legal_demands(state: AuctionState, bidder: int,
                           products: Sequence[ProductSpec]) -> list[Demand]:
    """All demands the activity rule allows `bidder` to submit this round."""
    if state.terminated:
        raise TerminationError("auction already terminated")
    return legal_demands_for_cap(products, state.activity_cap[bidder])


@dataclass(frozen=True)
class ProcessingRequest:
    bidder: int
    product: int
    delta: int  # negative = drop, positive = pickup


def build_requests(previous: Sequence[Demand],
                   submitted: Sequence[Demand]) -> list[ProcessingRequest]:
    """Per-bidder demand changes, bidder ascending, drops before pickups."""
    requests = []
    for i, (prev, sub) in enumerate(zip(previous, submitted)):
        if len(prev) != len(sub):
            raise ValueError("previous/submitted length mismatch")
        drops = []
        picks = []
        for j, (a, b) in enumerate(zip(prev, sub)):
            delta = b - a
            if delta < 0:
                drops.append(ProcessingRequest(i, j, delta))
            elif delta > 0:
                picks.append(ProcessingRequest(i, j, delta))
        requests.extend(drops)
        requests.extend(picks)
    return requests


@dataclass(frozen=True, order=True)
class QueueEntry:
    """One atomic unit of the processing queue.

    Under drop-by-bidder an entry holds all of a bidder's requests; under
    drop-by-license each single-license drop is its own entry and a
    bidder's pickups form one trailing entry.
    """

    bidder: int
    requests: tuple[tuple[int, int], ...]  # (product, delta), applied in order


def bidder_queue_entries(requests: Iterable[ProcessingRequest]) -> list[QueueEntry]:
    """Drop-by-bidder queue units: one entry per bidder with any request."""
    by_bidder: dict[int, list[tuple[int, int]]] = {}
    for r in requests:
        by_bidder.setdefault(r.bidder, []).append((r.product, r.delta))
    return [
        QueueEntry(b, tuple(reqs)) for b, reqs in sorted(by_bidder.items())
    ]


def license_queue_entries(
    requests: Iterable[ProcessingRequest],
) -> tuple[list[QueueEntry], list[QueueEntry]]:
    """Drop-by-license queue units: (single-license drops, per-bidder pickups)."""
    drops: list[QueueEntry] = []
    picks_by_bidder: dict[int, list[tuple[int, int]]] = {}
    for r in requests:
        if r.delta < 0:
            drops.extend(
                QueueEntry(r.bidder, ((r.product, -1),)) for _ in range(-r.delta)
            )
        else:
            picks_by_bidder.setdefault(r.bidder, []).append((r.product, r.delta))
    pickups = [
        QueueEntry(b, tuple(reqs)) for b, reqs in sorted(picks_by_bidder.items())
    ]
    return drops, pickups


@dataclass(frozen=True)
class ProcessingOutcome:
    new_processed_demand: tuple[Demand, ...]
    submitted: tuple[Demand, ...]
    applied: tuple[ProcessingRequest, ...]      # net applied per changed cell
    unfulfilled: tuple[ProcessingRequest, ...]  # residual per uncompleted cell


def process_queue(state: AuctionState, submitted: Sequence[Demand],
                  rules: AuctionRules,
                  ordering: Sequence[QueueEntry]) -> ProcessingOutcome:
    """Run the bid-processing fixed point for one explicit queue ordering.

    Sweeps the queue repeatedly.  A drop of k licenses on product j applies
    min(k, Z_j - q_j) licenses while j is sale-guaranteed (unconstrained
    otherwise); a pickup applies as many licenses as the bidder's activity
    cap allows.  Entries with residual demand are carried to the tail for
    the next sweep; processing stops when a full sweep applies nothing.
    """
    products = rules.products
    submitted = tuple(check_demand(d, products) for d in submitted)
    for i, d in enumerate(submitted):
        if activity_of(d, products) > state.activity_cap[i]:
            raise IllegalBidError(
                f"bidder {i} bid {d} above activity cap {state.activity_cap[i]}"
            )

    working = [list(row) for row in state.processed_demand]
    agg = [sum(row[j] for row in working) for j in range(len(products))]
    queue = [(e.bidder, list(e.requests)) for e in ordering]

    while queue:
        applied_in_sweep = 0
        next_queue = []
        for bidder, reqs in queue:
            residual = []
            for product, delta in reqs:
                if delta < 0:
                    k = -delta
                    if state.sale_guaranteed[product]:
                        m = min(k, agg[product] - products[product].supply)
                        m = max(m, 0)
                    else:
                        m = k
                    working[bidder][product] -= m
                    agg[product] -= m
                    if k - m:
                        residual.append((product, -(k - m)))
                else:
                    k = delta
                    points = products[product].eligibility_points
                    room = state.activity_cap[bidder] - activity_of(
                        working[bidder], products
                    )
                    m = min(k, room // points)
                    m = max(m, 0)
                    working[bidder][product] += m
                    agg[product] += m
                    if k - m:
                        residual.append((product, k - m))
                applied_in_sweep += m
            if residual:
                next_queue.append((bidder, residual))
        if applied_in_sweep == 0:
            break
        queue = next_queue

    new_processed = tuple(tuple(row) for row in working)
    applied = []
    unfulfilled = []
    for i in range(rules.num_bidders):
        for j in range(len(products)):
            net = new_processed[i][j] - state.processed_demand[i][j]
            if net:
                applied.append(ProcessingRequest(i, j, net))
            rem = submitted[i][j] - new_processed[i][j]
            if rem:
                unfulfilled.append(ProcessingRequest(i, j, rem))
    return ProcessingOutcome(
        new_processed_demand=new_processed,
        submitted=submitted,
        applied=tuple(applied),
        unfulfilled=tuple(unfulfilled),
    )


def _distinct_permutations(items: Sequence) -> Iterable[tuple]:
    """Distinct orderings of a multiset, in lexicographic order.

    A uniform draw over all orderings of the underlying labeled items is
    uniform over these distinct orderings, so enumerating them once each
    preserves exact probabilities.
    """
    pool = sorted(items)

    def rec(remaining: list) -> Iterable[tuple]:
        if not remaining:
            yield ()
            return
        seen = set()
        for idx, item in enumerate(remaining):
            if item in seen:
                continue
            seen.add(item)
            rest = remaining[:idx] + remaining[idx + 1:]
            for tail in rec(rest):
                yield (item,) + tail

    return rec(pool)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Exact distribution over bid-processing results for one round."""

    outcomes: tuple[ProcessingOutcome, ...]
    probabilities: tuple[Fraction, ...]

    @property
    def is_lottery(self) -> bool:
        return len(self.outcomes) >= 2

    def __post_init__(self):
        assert sum(self.probabilities) == 1


def outcome_distribution(state: AuctionState, submitted: Sequence[Demand],
                         rules: AuctionRules) -> OutcomeDistribution:
    """Enumerate every queue ordering and group identical results.

    Drop-by-bidder randomizes the order of per-bidder request bundles;
    drop-by-license randomizes the order of single-license drops, with
    per-bidder pickup bundles appended afterwards in a uniformly random
    bidder order.
    """
    requests = build_requests(state.processed_demand, submitted)
    limit = rules.enumeration_limit

    if rules.processing_rule is ProcessingRule.DROP_BY_BIDDER:
        entries = bidder_queue_entries(requests)
        if math.factorial(len(entries)) > limit:
            raise EnumerationLimitError(
                f"{len(entries)}! orderings exceed the limit of {limit}"
            )
        orderings = [list(p) for p in itertools.permutations(entries)]
    else:
        drops, pickups = license_queue_entries(requests)
        total = math.factorial(len(drops)) * math.factorial(len(pickups))
        if total > limit:
            raise EnumerationLimitError(
                f"{len(drops)}! x {len(pickups)}! orderings exceed the limit of {limit}"
            )
        orderings = [
            list(d) + list(p)
            for d in _distinct_permutations(drops)
            for p in itertools.permutations(pickups)
        ]

    counts: dict[tuple[Demand, ...], int] = {}
    examples: dict[tuple[Demand, ...], ProcessingOutcome] = {}
    for ordering in orderings:
        outcome = process_queue(state, submitted, rules, ordering)
        key = outcome.new_processed_demand
        counts[key] = counts.get(key, 0) + 1
        examples.setdefault(key, outcome)

    total = sum(counts.values())
    keys = sorted(counts)  # deterministic outcome order
    return OutcomeDistribution(
        outcomes=tuple(examples[k] for k in keys),
        probabilities=tuple(Fraction(counts[k], total) for k in keys),
    )


def advance(state: AuctionState, outcome: ProcessingOutcome,
            rules: AuctionRules, was_lottery: bool = False,
            raise_prices_on: Sequence[int] | None = None) -> AuctionState:
    """Commit one round's processed demands and move the clock.

    Raises prices by the clock increment on every overdemanded product; the
    auction terminates when nothing is overdemanded.  The terminal state
    keeps the final round's start-of-round prices for settlement.
    `raise_prices_on` restricts the increment to a subset of the
    overdemanded products (used by worst-case auction-length probes).
    """
    products = rules.products
    processed = outcome.new_processed_demand
    agg = tuple(
        sum(row[j] for row in processed) for j in range(len(products))
    )
    record = RoundRecord(
        prices=state.prices,
        submitted=outcome.submitted,
        processed=processed,
        aggregate=agg,
        was_lottery=was_lottery,
    )
    caps = tuple(activity_of(row, products) for row in processed)
    guaranteed = tuple(
        g or z >= p.supply
        for g, z, p in zip(state.sale_guaranteed, agg, products)
    )
    overdemanded = [z > p.supply for z, p in zip(agg, products)]
    terminated = not any(overdemanded)
    if terminated:
        prices = state.prices
        rnd = state.round
    else:
        bump = 1 + rules.clock_increment
        raisable = overdemanded
        if raise_prices_on is not None:
            allowed = set(raise_prices_on)
            raisable = [
                over and j in allowed for j, over in enumerate(overdemanded)
            ]
        prices = tuple(
            p * bump if up else p
            for p, up in zip(state.prices, raisable)
        )
        rnd = state.round + 1
    return AuctionState(
        round=rnd,
        prices=prices,
        processed_demand=processed,
        activity_cap=caps,
        sale_guaranteed=guaranteed,
        terminated=terminated,
        history=state.history + (record,),
    )


def final_settlement(
    state: AuctionState, rules: AuctionRules
) -> tuple[tuple[Demand, ...], tuple[Fraction, ...]]:
    """Winning bundles and exact payments at the final start-of-round prices."""
    if not state.terminated:
        raise TerminationError("settlement requires a terminated auction")
    allocation = state.processed_demand
    payments = tuple(
        sum((d * p for d, p in zip(row, state.prices)), Fraction(0))
        for row in allocation
    )
    return allocation, payments


def unsold_licenses(state: AuctionState, rules: AuctionRules) -> tuple[int, ...]:
    if not state.terminated:
        raise TerminationError("unsold counts require a terminated auction")
    agg = state.aggregate_demand()
    return tuple(p.supply - z for p, z in zip(rules.products, agg))


def play_warmup(rules: AuctionRules) -> AuctionState:
    """Replay the configured warmup rounds from the opening state.

    Warmup bids must process deterministically (no lotteries), otherwise
    the strategic starting state would be ill-defined.
    """
    state = initial_state(rules)
    for rnd_bids in rules.warmup_bids:
        if state.terminated:
            break
        dist = outcome_distribution(state, rnd_bids, rules)
        if dist.is_lottery:
            raise ValueError("warmup bids must not trigger processing lotteries")
        state = advance(state, dist.outcomes[0], rules, was_lottery=False)
    return state
