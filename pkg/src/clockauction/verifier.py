"""Exact policy evaluation: expected utilities, best responses, NashConv.

All computations run on the compiled game tree and always score the
unmodified game: per-round penalties and training-time trembles never
enter the numbers reported here.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .policy import Policy
from .tree import CHANCE, DECISION, TERMINAL, CompiledGame

SCHEMA_VERSION = 1

# Best-response improvements below this are floating-point noise; report
# them as exact zeros so equilibria certify cleanly.
ZERO_TOLERANCE = 1e-12

DEFAULT_BR_TIME_LIMIT_S = 3600.0
BRUTE_FORCE_GUARD = 1_000_000


class StrategyCountError(RuntimeError):
    """Too many pure strategies for brute-force enumeration."""


class _Timeout(Exception):
    pass


def profile_table(cg: CompiledGame, profile) -> np.ndarray:
    """Flatten a profile (one Policy, or one per player) onto infoset slots."""
    if isinstance(profile, Policy):
        return profile.table_for(cg)
    policies: Sequence[Policy] = profile
    table = np.zeros(cg.total_slots)
    for s in cg.infosets:
        pol = policies[s.player]
        n = len(s.actions)
        table[s.offset:s.offset + n] = pol.action_distribution(
            s.key, list(s.actions)
        )
    return table


def expected_utilities(cg: CompiledGame, profile) -> np.ndarray:
    """Exact expectation over type chance, processing chance, and policies."""
    table = profile_table(cg, profile)
    n = cg.num_nodes
    vals = np.zeros((n, cg.num_players))
    for nid in range(n - 1, -1, -1):
        k = cg.kind[nid]
        if k == TERMINAL:
            vals[nid] = cg.util_raw[nid]
            continue
        start = cg.child_start[nid]
        cnt = cg.child_count[nid]
        kids = cg.child_node[start:start + cnt]
        if k == CHANCE:
            w = cg.child_prob[start:start + cnt]
        else:
            off = cg.inf_offset[cg.infoset[nid]]
            w = table[off:off + cnt]
        vals[nid] = w @ vals[kids]
    return vals[cg.root]


def best_response(cg: CompiledGame, profile, player: int,
                  time_limit_s: float = DEFAULT_BR_TIME_LIMIT_S,
                  ) -> tuple[float, Policy, bool]:
    """Exact best response for `player` against a fixed profile.

    Walks opponent/chance layers accumulating counterfactual reach, groups
    the player's histories by information state, and maximizes bottom-up.
    Ties break toward the lowest action index.  Returns (value, pure
    policy, timed_out); on timeout the value is a lower bound.
    """
    table = profile_table(cg, profile)
    deadline = time.monotonic() + time_limit_s
    ticks = [0]

    kind = cg.kind
    child_start = cg.child_start
    child_count = cg.child_count
    child_node = cg.child_node
    child_prob = cg.child_prob
    infoset = cg.infoset
    inf_offset = cg.inf_offset
    owner = cg.player
    util = cg.util_raw

    def check_time():
        ticks[0] += 1
        if ticks[0] % 4096 == 0 and time.monotonic() > deadline:
            raise _Timeout

    def trace(node: int, reach: float, supports: dict) -> float:
        """Terminal mass reached before hitting `player`'s next decision."""
        check_time()
        k = kind[node]
        if k == TERMINAL:
            return reach * util[node, player]
        start = child_start[node]
        cnt = child_count[node]
        if k == CHANCE:
            total = 0.0
            for i in range(cnt):
                p = child_prob[start + i]
                if p > 0.0:
                    total += trace(child_node[start + i], reach * p, supports)
            return total
        if owner[node] == player:
            supports.setdefault(infoset[node], []).append((node, reach))
            return 0.0
        off = inf_offset[infoset[node]]
        total = 0.0
        for a in range(cnt):
            p = table[off + a]
            if p > 0.0:
                total += trace(child_node[start + a], reach * p, supports)
        return total

    br_actions: dict[int, int] = {}

    def solve(sid: int, support: list) -> float:
        check_time()
        n = int(cg.inf_nact[sid])
        best_val = -math.inf
        best_a = 0
        for a in range(n):
            sub: dict[int, list] = {}
            val = 0.0
            for node, reach in support:
                child = child_node[child_start[node] + a]
                val += trace(child, reach, sub)
            for sid2 in sorted(sub):
                val += solve(sid2, sub[sid2])
            if val > best_val:
                best_val = val
                best_a = a
        br_actions[sid] = best_a
        return best_val

    timed_out = False
    value = 0.0
    try:
        supports: dict[int, list] = {}
        value = trace(cg.root, 1.0, supports)
        for sid in sorted(supports):
            value += solve(sid, supports[sid])
    except _Timeout:
        timed_out = True

    pol = Policy()
    for sid, s in enumerate(cg.infosets):
        if s.player != player:
            continue
        vec = np.zeros(len(s.actions))
        vec[br_actions.get(sid, 0)] = 1.0
        pol.actions[s.key] = s.actions
        pol[s.key] = vec
    return float(value), pol, timed_out


@dataclass
class PlayerRegret:
    on_policy: float
    best_response: float
    regret: float
    timed_out: bool = False


@dataclass
class NashConvReport:
    players: list[PlayerRegret]
    nashconv: float
    wall_clock_s: float
    exact: bool

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "nashconv": self.nashconv,
            "exact": self.exact,
            "wall_clock_s": self.wall_clock_s,
            "players": [
                {
                    "on_policy": p.on_policy,
                    "best_response": p.best_response,
                    "regret": p.regret,
                    "timed_out": p.timed_out,
                }
                for p in self.players
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)


def _snap_regret(br: float, on_policy: float) -> float:
    gain = float(br) - float(on_policy)
    if gain <= ZERO_TOLERANCE:
        return 0.0
    return gain


def nashconv(cg: CompiledGame, profile,
             time_limit_s: float = DEFAULT_BR_TIME_LIMIT_S) -> NashConvReport:
    """Sum of per-player best-response gains; zero certifies a Nash equilibrium."""
    start = time.monotonic()
    base = expected_utilities(cg, profile)
    players = []
    exact = True
    for i in range(cg.num_players):
        br, _, timed_out = best_response(cg, profile, i, time_limit_s)
        exact = exact and not timed_out
        players.append(
            PlayerRegret(
                on_policy=float(base[i]),
                best_response=br,
                regret=_snap_regret(br, base[i]),
                timed_out=timed_out,
            )
        )
    return NashConvReport(
        players=players,
        nashconv=sum(p.regret for p in players),
        wall_clock_s=time.monotonic() - start,
        exact=exact,
    )


def _terminal_weights(cg: CompiledGame, table: np.ndarray, player: int
                      ) -> dict[tuple, float]:
    """Sum of (chance x opponent reach x payoff) per own-action sequence.

    The own-action sequence of a terminal is the ordered tuple of
    (infoset, action) pairs `player` chose on the path; everything else on
    the path is folded into the weight.
    """
    weights: dict[tuple, float] = {}
    stack = [(cg.root, 1.0, ())]
    while stack:
        node, reach, seq = stack.pop()
        k = cg.kind[node]
        if k == TERMINAL:
            w = float(reach * cg.util_raw[node, player])
            weights[seq] = weights.get(seq, 0.0) + w
            continue
        start = cg.child_start[node]
        cnt = cg.child_count[node]
        if k == CHANCE:
            for i in range(cnt):
                p = cg.child_prob[start + i]
                if p > 0.0:
                    stack.append((cg.child_node[start + i], reach * p, seq))
            continue
        sid = cg.infoset[node]
        if cg.player[node] == player:
            for a in range(cnt):
                stack.append(
                    (cg.child_node[start + a], reach, seq + ((int(sid), a),))
                )
        else:
            off = cg.inf_offset[sid]
            for a in range(cnt):
                p = table[off + a]
                if p > 0.0:
                    stack.append((cg.child_node[start + a], reach * p, seq))
    return weights


def brute_force_best_response(cg: CompiledGame, profile, player: int,
                              guard: int = BRUTE_FORCE_GUARD) -> float:
    """Max utility over every pure strategy of `player`, by enumeration.

    A pure strategy assigns one action to each of the player's information
    states; each is scored directly from per-terminal reach weights.
    Independent of the `best_response` recursion above, so the two can
    cross-check each other.
    """
    table = profile_table(cg, profile)
    own = [sid for sid, s in enumerate(cg.infosets) if s.player == player]
    count = 1
    for sid in own:
        count *= int(cg.inf_nact[sid])
        if count > guard:
            raise StrategyCountError(
                f"player {player} has more than {guard} pure strategies"
            )
    pos = {sid: i for i, sid in enumerate(own)}
    seq_weights = [
        (tuple((pos[sid], a) for sid, a in seq), w)
        for seq, w in _terminal_weights(cg, table, player).items()
    ]
    best = -math.inf
    for assign in itertools.product(*(range(int(cg.inf_nact[s])) for s in own)):
        total = 0.0
        for seq, w in seq_weights:
            ok = True
            for i, a in seq:
                if assign[i] != a:
                    ok = False
                    break
            if ok:
                total += w
        if total > best:
            best = total
    return float(best)


def brute_force_nashconv(cg: CompiledGame, profile,
                         guard: int = BRUTE_FORCE_GUARD) -> NashConvReport:
    start = time.monotonic()
    base = expected_utilities(cg, profile)
    players = []
    for i in range(cg.num_players):
        br = brute_force_best_response(cg, profile, i, guard)
        players.append(
            PlayerRegret(
                on_policy=float(base[i]),
                best_response=br,
                regret=_snap_regret(br, base[i]),
            )
        )
    return NashConvReport(
        players=players,
        nashconv=sum(p.regret for p in players),
        wall_clock_s=time.monotonic() - start,
        exact=True,
    )


def policy_entropy(policy: Policy) -> float:
    """Mean Shannon entropy in bits over states with at least two actions."""
    entropies = []
    for v in policy.probs.values():
        if len(v) < 2:
            continue
        nz = v[v > 0.0]
        entropies.append(float(-(nz * np.log2(nz)).sum()))
    if not entropies:
        return 0.0
    return float(np.mean(entropies))
