"""Enumeration of the full game tree into flat arrays.

Simultaneous rounds are serialized into per-player decision nodes (each
player's information state excludes the current round's other moves, so
the serialization is information-equivalent).  The resulting arrays drive
both the MCCFR kernels and the exact verifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import AuctionState, Demand
from .game import AuctionGame, GameInstance

DECISION = 0
CHANCE = 1
TERMINAL = 2

DEFAULT_MAX_NODES = 5_000_000


class SizeGuardError(RuntimeError):
    """Game exceeds the configured enumeration size guard."""


@dataclass
class InfoSet:
    key: str
    player: int
    round: int
    actions: tuple[Demand, ...]
    penalties: np.ndarray  # per action, in [0, 1]
    offset: int = -1  # start of this infoset's slots in the flat tables


@dataclass
class CompiledGame:
    """Flat extensive-form representation of one game instance."""

    instance: GameInstance
    game: AuctionGame
    num_players: int
    kind: np.ndarray
    player: np.ndarray
    infoset: np.ndarray
    child_start: np.ndarray
    child_count: np.ndarray
    child_node: np.ndarray
    child_prob: np.ndarray
    util_raw: np.ndarray       # (nodes, players), nonzero only at terminals
    util_penalized: np.ndarray
    infosets: list[InfoSet]
    key_to_infoset: dict[str, int]
    inf_player: np.ndarray
    inf_nact: np.ndarray
    inf_offset: np.ndarray
    total_slots: int
    root: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.kind)

    def infostate_counts(self) -> list[int]:
        counts = [0] * self.num_players
        for s in self.infosets:
            counts[s.player] += 1
        return counts

    def diagnostics(self) -> dict:
        """Counts per player per round, plus totals, for JSON dumps."""
        per_round: dict[int, list[int]] = {}
        for s in self.infosets:
            per_round.setdefault(s.round, [0] * self.num_players)
            per_round[s.round][s.player] += 1
        return {
            "num_nodes": self.num_nodes,
            "num_terminals": int((self.kind == TERMINAL).sum()),
            "infostates_per_player": self.infostate_counts(),
            "infostates_per_round": {
                str(r): c for r, c in sorted(per_round.items())
            },
        }


@dataclass
class _Builder:
    game: AuctionGame
    max_infostates_per_player: int
    max_nodes: int
    kind: list = field(default_factory=list)
    player: list = field(default_factory=list)
    infoset: list = field(default_factory=list)
    children: list = field(default_factory=list)  # list[(ids, probs|None)]
    util_raw: list = field(default_factory=list)
    util_pen: list = field(default_factory=list)
    infosets: list = field(default_factory=list)
    key_to_infoset: dict = field(default_factory=dict)
    counts: list = field(default_factory=list)

    def new_node(self, kind: int, player: int = -1, infoset: int = -1) -> int:
        nid = len(self.kind)
        if nid >= self.max_nodes:
            raise SizeGuardError(f"game tree exceeds {self.max_nodes} nodes")
        self.kind.append(kind)
        self.player.append(player)
        self.infoset.append(infoset)
        self.children.append(None)
        self.util_raw.append(None)
        self.util_pen.append(None)
        return nid

    def get_infoset(self, key: str, player: int, rnd: int,
                    actions: tuple[Demand, ...],
                    penalties: np.ndarray) -> int:
        sid = self.key_to_infoset.get(key)
        if sid is not None:
            existing = self.infosets[sid]
            if existing.actions != actions:
                raise AssertionError(
                    f"histories sharing infostate {key!r} disagree on actions"
                )
            return sid
        sid = len(self.infosets)
        self.infosets.append(InfoSet(key, player, rnd, actions, penalties))
        self.key_to_infoset[key] = sid
        self.counts[player] += 1
        if self.counts[player] > self.max_infostates_per_player:
            raise SizeGuardError(
                f"player {player} exceeds {self.max_infostates_per_player} "
                "information states"
            )
        return sid


def _expand_state(b: _Builder, state: AuctionState, tp: tuple[int, ...],
                  pen: np.ndarray) -> int:
    g = b.game
    if state.terminated:
        nid = b.new_node(TERMINAL)
        u = g.terminal_utilities(state, tp)
        b.util_raw[nid] = u
        b.util_pen[nid] = u - pen
        return nid
    return _expand_decision(b, state, tp, 0, (), pen)


def _expand_decision(b: _Builder, state: AuctionState, tp: tuple[int, ...],
                     player: int, chosen: tuple[Demand, ...],
                     pen: np.ndarray) -> int:
    g = b.game
    type_idx = tp[player]
    key = g.infostate_key(player, type_idx, state)
    actions = tuple(g.legal_actions(player, type_idx, state))
    profits = g.action_profits(player, type_idx, state, actions)
    penalties = g.round_penalties(profits)
    sid = b.get_infoset(key, player, state.round, actions, penalties)
    nid = b.new_node(DECISION, player=player, infoset=sid)
    kids = []
    for a_idx, action in enumerate(actions):
        child_pen = pen.copy()
        child_pen[player] += penalties[a_idx]
        joint = chosen + (action,)
        if player + 1 < g.num_players:
            kid = _expand_decision(b, state, tp, player + 1, joint, child_pen)
        else:
            kid = _expand_chance(b, state, tp, joint, child_pen)
        kids.append(kid)
    b.children[nid] = (kids, None)
    return nid


def _expand_chance(b: _Builder, state: AuctionState, tp: tuple[int, ...],
                   joint: tuple[Demand, ...], pen: np.ndarray) -> int:
    g = b.game
    dist, succs = g.step(state, joint)
    if len(succs) == 1:
        return _expand_state(b, succs[0], tp, pen)
    nid = b.new_node(CHANCE)
    kids = [_expand_state(b, s, tp, pen) for s in succs]
    b.children[nid] = (kids, [float(p) for p in dist.probabilities])
    return nid


def compile_game(instance: GameInstance,
                 max_infostates_per_player: int = 1 << 30,
                 max_nodes: int = DEFAULT_MAX_NODES) -> CompiledGame:
    """Enumerate every reachable history of an instance into flat arrays."""
    game = AuctionGame(instance)
    b = _Builder(game, max_infostates_per_player, max_nodes)
    b.counts = [0] * game.num_players

    root_dist = game.root_chance()
    zero_pen = np.zeros(game.num_players)
    if len(root_dist) == 1:
        root = _expand_state(b, game.root_state, root_dist[0][0], zero_pen)
    else:
        root = b.new_node(CHANCE)
        kids = [
            _expand_state(b, game.root_state, tp, zero_pen)
            for tp, _ in root_dist
        ]
        b.children[root] = (kids, [float(p) for _, p in root_dist])
    assert root == 0

    n = len(b.kind)
    num_players = game.num_players
    child_start = np.zeros(n, dtype=np.int64)
    child_count = np.zeros(n, dtype=np.int32)
    child_node: list[int] = []
    child_prob: list[float] = []
    for nid in range(n):
        entry = b.children[nid]
        child_start[nid] = len(child_node)
        if entry is None:
            continue
        kids, probs = entry
        child_count[nid] = len(kids)
        child_node.extend(kids)
        child_prob.extend(probs if probs is not None else [0.0] * len(kids))

    util_raw = np.zeros((n, num_players))
    util_pen = np.zeros((n, num_players))
    for nid in range(n):
        if b.util_raw[nid] is not None:
            util_raw[nid] = b.util_raw[nid]
            util_pen[nid] = b.util_pen[nid]

    offset = 0
    inf_player = np.zeros(len(b.infosets), dtype=np.int32)
    inf_nact = np.zeros(len(b.infosets), dtype=np.int32)
    inf_offset = np.zeros(len(b.infosets), dtype=np.int64)
    for sid, s in enumerate(b.infosets):
        s.offset = offset
        inf_player[sid] = s.player
        inf_nact[sid] = len(s.actions)
        inf_offset[sid] = offset
        offset += len(s.actions)

    return CompiledGame(
        instance=instance,
        game=game,
        num_players=num_players,
        kind=np.array(b.kind, dtype=np.int8),
        player=np.array(b.player, dtype=np.int32),
        infoset=np.array(b.infoset, dtype=np.int64),
        child_start=child_start,
        child_count=child_count,
        child_node=np.array(child_node, dtype=np.int64),
        child_prob=np.array(child_prob, dtype=np.float64),
        util_raw=util_raw,
        util_penalized=util_pen,
        infosets=b.infosets,
        key_to_infoset=b.key_to_infoset,
        inf_player=inf_player,
        inf_nact=inf_nact,
        inf_offset=inf_offset,
        total_slots=offset,
    )


def enumerate_info_states(instance: GameInstance,
                          max_infostates_per_player: int = 1 << 30,
                          max_nodes: int = DEFAULT_MAX_NODES
                          ) -> tuple[list[int], CompiledGame]:
    """Per-player information state counts plus the reusable index."""
    cg = compile_game(instance, max_infostates_per_player, max_nodes)
    return cg.infostate_counts(), cg
