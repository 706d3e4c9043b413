"""Clock auction games: engine, valuations, MCCFR solver, and verification."""

from .engine import (
    AuctionRules,
    AuctionState,
    OutcomeDistribution,
    ProcessingRule,
    ProductSpec,
)
from .game import AuctionGame, GameInstance, History
from .policy import Policy, modal_policy
from .solver import SolverConfig, train
from .tree import CompiledGame, compile_game, enumerate_info_states
from .valuation import SamplingConfig, TypeParams, ValueProfile
from .verifier import brute_force_nashconv, expected_utilities, nashconv

__all__ = [
    "AuctionGame",
    "AuctionRules",
    "AuctionState",
    "CompiledGame",
    "GameInstance",
    "History",
    "OutcomeDistribution",
    "Policy",
    "ProcessingRule",
    "ProductSpec",
    "SamplingConfig",
    "SolverConfig",
    "TypeParams",
    "ValueProfile",
    "brute_force_nashconv",
    "compile_game",
    "enumerate_info_states",
    "expected_utilities",
    "modal_policy",
    "nashconv",
    "train",
]

__version__ = "0.1.0"
