"""Sigmoidal bidder valuations over bandwidth share.

A bidder type is described by a value per subscriber (its value for the
whole market), a market share (the bandwidth fraction at which it gets
half that value), and a keypoint width bounding the steep segment of its
value curve.  Values are piecewise linear in the won bandwidth fraction
through (0, 0), (ms - w, lo), (ms + w, hi), (1, 1), scaled by the value
per subscriber.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import ProductSpec, all_demands, check_demand

# Sigmoid levels at the keypoints ms - w and ms + w.  Symmetric around 0.5
# so the curve passes through (ms, 0.5); outer slopes stay below the inner
# slope for every in-range (ms, w).
DEFAULT_SIGMOID_LEVELS = (0.27, 0.73)

# Keypoints get clamped into this interval when ms +- w would leave it.
KEYPOINT_BOUNDS = (0.05, 0.95)


@dataclass(frozen=True)
class TypeParams:
    value_per_subscriber: float
    market_share: float
    keypoint_width: float
    sigmoid_levels: tuple[float, float] = DEFAULT_SIGMOID_LEVELS

    def __post_init__(self):
        if self.value_per_subscriber <= 0:
            raise ValueError("value_per_subscriber must be positive")
        if not (0.0 < self.market_share < 1.0):
            raise ValueError("market_share must be in (0, 1)")
        if self.keypoint_width <= 0:
            raise ValueError("keypoint_width must be positive")
        lo, hi = self.sigmoid_levels
        if not (0.0 < lo < 0.5 < hi < 1.0) or abs((lo + hi) - 1.0) > 1e-12:
            raise ValueError("sigmoid_levels must be symmetric around 0.5")

    def keypoints(self) -> tuple[float, float]:
        lo_b, hi_b = KEYPOINT_BOUNDS
        left = max(self.market_share - self.keypoint_width, lo_b)
        right = min(self.market_share + self.keypoint_width, hi_b)
        return left, right


def sigmoid(params: TypeParams, fraction: float) -> float:
    """Normalized value of winning `fraction` of the market's bandwidth."""
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("fraction must be in [0, 1]")
    left, right = params.keypoints()
    lo, hi = params.sigmoid_levels
    if fraction <= left:
        return lo * fraction / left
    if fraction >= right:
        return hi + (1.0 - hi) * (fraction - right) / (1.0 - right)
    return lo + (hi - lo) * (fraction - left) / (right - left)


def bandwidth_fraction(demand: Sequence[int],
                       products: Sequence[ProductSpec]) -> float:
    """Fraction of total available bandwidth a demand vector covers."""
    check_demand(demand, products)
    total = sum(p.supply * p.bandwidth_fraction for p in products)
    won = sum(d * p.bandwidth_fraction for d, p in zip(demand, products))
    return won / total


def type_value(params: TypeParams, demand: Sequence[int],
               products: Sequence[ProductSpec]) -> float:
    return params.value_per_subscriber * sigmoid(
        params, bandwidth_fraction(demand, products)
    )


@dataclass(frozen=True)
class ValueProfile:
    """Per-bidder type lists (uniform prior) with cached per-bundle values.

    `tables[i][t][b]` is bidder i's value under type t for bundle index b,
    where bundles are `all_demands(products)` in lexicographic order.
    """

    types: tuple[tuple[TypeParams, ...], ...]
    bundles: tuple[tuple[int, ...], ...]
    tables: tuple = field(compare=False, default=())

    @classmethod
    def build(cls, types: Sequence[Sequence[TypeParams]],
              products: Sequence[ProductSpec]) -> "ValueProfile":
        bundles = tuple(all_demands(products))
        tables = tuple(
            tuple(
                np.array([type_value(t, b, products) for b in bundles])
                for t in bidder_types
            )
            for bidder_types in types
        )
        return cls(
            types=tuple(tuple(ts) for ts in types),
            bundles=bundles,
            tables=tables,
        )

    @property
    def num_bidders(self) -> int:
        return len(self.types)

    def num_types(self, bidder: int) -> int:
        return len(self.types[bidder])

    def value(self, bidder: int, type_idx: int, bundle_idx: int) -> float:
        return float(self.tables[bidder][type_idx][bundle_idx])


@dataclass(frozen=True)
class SamplingConfig:
    """Type sampling ranges plus the instance rejection thresholds."""

    num_types: int = 1
    vps_range: tuple[float, float] = (20.0, 30.0)
    market_share_range: tuple[float, float] = (0.35, 0.50)
    keypoint_width: float = 0.15
    sigmoid_levels: tuple[float, float] = DEFAULT_SIGMOID_LEVELS
    max_straightforward_rounds: int = 20
    max_single_increment_rounds: float = 25.0
    single_increment_samples: int = 100
    max_infostates_per_player: int = 2000
    min_infostates_per_player: int = 0
    allocation_check: bool = True
    max_retries: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.num_types < 1:
            raise ValueError("num_types must be >= 1")
        if not (self.vps_range[0] <= self.vps_range[1]):
            raise ValueError("vps_range must be ordered")
        if not (self.market_share_range[0] <= self.market_share_range[1]):
            raise ValueError("market_share_range must be ordered")
        if self.max_infostates_per_player <= 0:
            raise ValueError("max_infostates_per_player must be positive")


def sample_type(rng: np.random.Generator, config: SamplingConfig) -> TypeParams:
    """One uniform draw of (value per subscriber, market share)."""
    vps = float(rng.uniform(*config.vps_range))
    ms = float(rng.uniform(*config.market_share_range))
    return TypeParams(
        value_per_subscriber=vps,
        market_share=ms,
        keypoint_width=config.keypoint_width,
        sigmoid_levels=config.sigmoid_levels,
    )


def sample_profile(rng: np.random.Generator, config: SamplingConfig,
                   num_bidders: int,
                   products: Sequence[ProductSpec]) -> ValueProfile:
    types = [
        [sample_type(rng, config) for _ in range(config.num_types)]
        for _ in range(num_bidders)
    ]
    return ValueProfile.build(types, products)


ALLOCATION_GUARD = 10_000_000


def _splits(supply: int, bidders: int) -> list[tuple[int, ...]]:
    """All ways to hand out at most `supply` units among `bidders`."""
    return [
        c
        for c in itertools.product(range(supply + 1), repeat=bidders)
        if sum(c) <= supply
    ]


def surplus_optimal_allocation(
    realization: Sequence[TypeParams],
    prices: Sequence,
    products: Sequence[ProductSpec],
    guard: int = ALLOCATION_GUARD,
) -> tuple[tuple[tuple[int, ...], ...], float, bool]:
    """Exhaustive surplus-maximizing allocation at the given prices.

    Searches every partition of supply (units may stay unallocated) for the
    one maximizing total value minus cost.  Returns (allocation, surplus,
    covers_all) where covers_all is True iff some optimal allocation gives
    every bidder at least one license.
    """
    n = len(realization)
    per_product = [_splits(p.supply, n) for p in products]
    count = 1
    for splits in per_product:
        count *= len(splits)
    if count > guard:
        raise RuntimeError(f"{count} candidate allocations exceed guard {guard}")

    float_prices = [float(p) for p in prices]
    best = -float("inf")
    best_alloc: tuple[tuple[int, ...], ...] | None = None
    best_covers = False
    for combo in itertools.product(*per_product):
        # combo[j][i] = units of product j handed to bidder i
        surplus = 0.0
        covers = True
        alloc = []
        for i, params in enumerate(realization):
            bundle = tuple(combo[j][i] for j in range(len(products)))
            cost = sum(b * q for b, q in zip(bundle, float_prices))
            surplus += type_value(params, bundle, products) - cost
            covers = covers and sum(bundle) >= 1
            alloc.append(bundle)
        if surplus > best + 1e-12:
            best = surplus
            best_alloc = tuple(alloc)
            best_covers = covers
        elif surplus > best - 1e-12:
            # Tie: remember coverage if any optimum covers everyone.
            if covers and not best_covers:
                best_alloc = tuple(alloc)
                best_covers = True
    assert best_alloc is not None
    return best_alloc, best, best_covers
