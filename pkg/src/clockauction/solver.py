"""External-sampling MCCFR with regret matching plus and linear weighting.

Training alternates the updating player round-robin, one tree pass per
iteration.  Opponent actions are sampled from the current regret-matched
strategy with a small uniform tremble; trembles and per-round penalty
shaping affect training only and never appear in extracted policies.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .policy import Policy
from .tree import CompiledGame

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SolverConfig:
    iterations: int | None = 100_000
    seconds: float | None = None
    tremble_epsilon: float = 0.01
    use_rm_plus: bool = True
    use_linear_weighting: bool = True
    penalty_enabled: bool = True
    seed: int = 0
    checkpoint_every: int | None = None
    num_checkpoints: int = 6
    batch_size: int = 500

    def __post_init__(self):
        if self.iterations is None and self.seconds is None:
            raise ValueError("need an iteration or wall-clock budget")
        if self.iterations is not None and self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not (0.0 <= self.tremble_epsilon < 1.0):
            raise ValueError("tremble_epsilon must be in [0, 1)")


@dataclass
class Checkpoint:
    iteration: int
    regrets: np.ndarray
    strategy_sum: np.ndarray


@dataclass
class TrainResult:
    config: SolverConfig
    iterations_run: int
    wall_clock_s: float
    average_policy: Policy
    checkpoints: list[Checkpoint] = field(default_factory=list)

    def policy_at(self, cg: CompiledGame, checkpoint: Checkpoint) -> Policy:
        return average_policy_from_sums(cg, checkpoint.strategy_sum)


def current_strategy(regrets: np.ndarray) -> np.ndarray:
    """Regret matching over one infoset row: positive part, else uniform."""
    r = np.asarray(regrets, dtype=np.float64)
    pos = np.where(r > 0.0, r, 0.0)
    total = pos.sum()
    if total > 0.0:
        return pos / total
    return np.full(len(r), 1.0 / len(r))


def average_policy_from_sums(cg: CompiledGame, strat_sum: np.ndarray) -> Policy:
    """Normalized weighted strategy sums; unvisited states fall back to uniform."""
    pol = Policy()
    for s in cg.infosets:
        n = len(s.actions)
        row = strat_sum[s.offset:s.offset + n]
        total = row.sum()
        pol.actions[s.key] = s.actions
        if total > 0.0:
            pol[s.key] = row / total
        else:
            pol[s.key] = np.full(n, 1.0 / n)
    return pol


def seed_rng_state(seed: int) -> np.ndarray:
    # Mix the seed once so consecutive seeds do not share stream prefixes.
    state = np.array([np.uint64(seed) ^ np.uint64(0xD1B54A32D192ED03)],
                     dtype=np.uint64)
    with np.errstate(over="ignore"):
        _kernels.rng_uniform(state)
    return state


def train(cg: CompiledGame, config: SolverConfig) -> TrainResult:
    """Run ES-MCCFR on a compiled game and return the average policy.

    Deterministic for a fixed (game, config) when an iteration budget is
    used; a wall-clock budget stops at the first batch boundary past the
    deadline.
    """
    total_slots = cg.total_slots
    regrets = np.zeros(total_slots)
    strat_sum = np.zeros(total_slots)
    visits = np.zeros(len(cg.infosets), dtype=np.int64)
    rng_state = seed_rng_state(config.seed)
    util = cg.util_penalized if config.penalty_enabled else cg.util_raw

    deadline = None if config.seconds is None else time.monotonic() + config.seconds
    budget = config.iterations
    cadence = config.checkpoint_every
    if cadence is None and budget:
        cadence = max(1, -(-budget // max(1, config.num_checkpoints)))

    checkpoints: list[Checkpoint] = []
    start = time.monotonic()
    t = 0
    while True:
        if budget is not None and t >= budget:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        if budget is not None:
            step = min(config.batch_size, budget - t)
        else:
            step = config.batch_size
        if cadence:
            next_cp = (t // cadence + 1) * cadence
            step = min(step, next_cp - t)
        with np.errstate(over="ignore"):
            _kernels.run_iterations(
                t + 1, t + step, cg.num_players,
                cg.kind, cg.player, cg.infoset, cg.child_start, cg.child_count,
                cg.child_node, cg.child_prob, util,
                cg.inf_offset, regrets, strat_sum, visits,
                config.tremble_epsilon, config.use_rm_plus,
                config.use_linear_weighting, rng_state,
            )
        t += step
        if cadence and t % cadence == 0:
            checkpoints.append(Checkpoint(t, regrets.copy(), strat_sum.copy()))

    if not checkpoints or checkpoints[-1].iteration != t:
        checkpoints.append(Checkpoint(t, regrets.copy(), strat_sum.copy()))

    return TrainResult(
        config=config,
        iterations_run=t,
        wall_clock_s=time.monotonic() - start,
        average_policy=average_policy_from_sums(cg, strat_sum),
        checkpoints=checkpoints,
    )


def save_checkpoint(path, cg: CompiledGame, cp: Checkpoint) -> None:
    entries = {}
    for s in cg.infosets:
        n = len(s.actions)
        entries[s.key] = {
            "regrets": [float(x) for x in cp.regrets[s.offset:s.offset + n]],
            "strategy_sum": [
                float(x) for x in cp.strategy_sum[s.offset:s.offset + n]
            ],
        }
    with open(path, "w") as f:
        json.dump(
            {
                "schema_version": SCHEMA_VERSION,
                "iteration": cp.iteration,
                "entries": entries,
            },
            f,
        )


def load_checkpoint(path, cg: CompiledGame) -> Checkpoint:
    with open(path) as f:
        d = json.load(f)
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported checkpoint schema: {d.get('schema_version')!r}")
    regrets = np.zeros(cg.total_slots)
    strat = np.zeros(cg.total_slots)
    for s in cg.infosets:
        entry = d["entries"].get(s.key)
        if entry is None:
            continue
        n = len(s.actions)
        regrets[s.offset:s.offset + n] = entry["regrets"]
        strat[s.offset:s.offset + n] = entry["strategy_sum"]
    return Checkpoint(d["iteration"], regrets, strat)


def train_without_shaping(cg: CompiledGame, config: SolverConfig) -> TrainResult:
    """Convenience: the same run with penalties and trembles disabled."""
    return train(cg, replace(config, penalty_enabled=False, tremble_epsilon=0.0))
