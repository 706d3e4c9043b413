"""Per-information-state action distributions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .engine import Demand
from .tree import CompiledGame

SCHEMA_VERSION = 1


@dataclass
class Policy:
    """Maps information-state keys to probability vectors over legal actions.

    Action order matches the information state's legal action list; states
    absent from the mapping are treated as uniform.
    """

    probs: dict[str, np.ndarray] = field(default_factory=dict)
    actions: dict[str, tuple[Demand, ...]] = field(default_factory=dict)

    def __setitem__(self, key: str, value) -> None:
        v = np.asarray(value, dtype=np.float64)
        if v.ndim != 1 or abs(v.sum() - 1.0) > 1e-12 or (v < 0).any():
            raise ValueError(f"invalid distribution for {key!r}: {v}")
        self.probs[key] = v

    def __getitem__(self, key: str) -> np.ndarray:
        return self.probs[key]

    def __contains__(self, key: str) -> bool:
        return key in self.probs

    def __len__(self) -> int:
        return len(self.probs)

    @property
    def is_pure(self) -> bool:
        return all((v == 1.0).sum() == 1 and (v == 0.0).sum() == len(v) - 1
                   for v in self.probs.values())

    def action_distribution(self, key: str, actions: list[Demand]) -> np.ndarray:
        """Distribution for a state, defaulting to uniform when unseen."""
        if key in self.probs:
            v = self.probs[key]
            if len(v) != len(actions):
                raise ValueError(f"policy entry for {key!r} has wrong arity")
            return v
        return np.full(len(actions), 1.0 / len(actions))

    def table_for(self, cg: CompiledGame) -> np.ndarray:
        """Flatten onto a compiled game's infoset slots (uniform if unseen)."""
        table = np.zeros(cg.total_slots)
        for s in cg.infosets:
            k = s.offset
            n = len(s.actions)
            table[k:k + n] = self.action_distribution(s.key, list(s.actions))
        return table

    @classmethod
    def from_table(cls, cg: CompiledGame, table: np.ndarray) -> "Policy":
        pol = cls()
        for s in cg.infosets:
            n = len(s.actions)
            pol.actions[s.key] = s.actions
            pol[s.key] = table[s.offset:s.offset + n]
        return pol

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "infostates": {
                key: {
                    "probs": [float(p) for p in self.probs[key]],
                    "actions": [list(a) for a in self.actions.get(key, ())],
                }
                for key in sorted(self.probs)
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Policy":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported policy schema: {d.get('schema_version')!r}")
        pol = cls()
        for key, entry in d["infostates"].items():
            pol[key] = np.array(entry["probs"])
            pol.actions[key] = tuple(tuple(a) for a in entry["actions"])
        return pol

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "Policy":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def modal_policy(policy: Policy) -> Policy:
    """Round to the pure policy playing each state's most probable action.

    Ties break toward the lowest action index, so rounding is deterministic.
    """
    out = Policy()
    out.actions = dict(policy.actions)
    for key, v in policy.probs.items():
        pure = np.zeros_like(v)
        pure[int(np.argmax(v))] = 1.0
        out[key] = pure
    return out
