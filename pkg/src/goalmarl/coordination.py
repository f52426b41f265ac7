"""Peer discovery and dampened weight merging between agents.

Each timestep, before acting, every active agent looks for peers allowed by
its type (any agent, or only agents sharing its goal; anywhere, or only
inside its observation square) and pulls its four networks toward the
peers' mean::

    theta_i <- (1 - alpha) * theta_i + alpha * mean_j(theta_j)

All merges in a round read from a snapshot taken before the first write.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .env import in_observation_range


class Collaboration(Enum):
    NONE = "none"
    UNRESTRICTED = "unrestricted"
    GOAL_AWARE = "goal-aware"


@dataclass(frozen=True)
class AgentTypeSpec:
    """``radius=None`` means unrestricted observation range."""

    collaboration: Collaboration
    radius: int | None = None

    def __post_init__(self):
        if self.collaboration is Collaboration.NONE and self.radius is not None:
            raise ValueError("non-collaborative agents have no observation range")
        if self.radius is not None and int(self.radius) < 1:
            raise ValueError(f"observation radius must be a positive integer, got {self.radius}")

    @property
    def limited(self) -> bool:
        return self.radius is not None


AGENT_TYPES = ("A1", "A2", "A3", "A4", "A5")


def agent_type(name: str, radius: int | None = None) -> AgentTypeSpec:
    """Build the spec for one of A1..A5. ``radius`` is required by A3/A5 and
    ignored by the others."""
    name = name.upper()
    if name not in AGENT_TYPES:
        raise ValueError(f"unknown agent type {name!r}; expected one of {', '.join(AGENT_TYPES)}")
    if name in ("A3", "A5") and radius is None:
        raise ValueError(f"{name} needs an observation radius")
    return {
        "A1": AgentTypeSpec(Collaboration.NONE),
        "A2": AgentTypeSpec(Collaboration.UNRESTRICTED),
        "A3": AgentTypeSpec(Collaboration.UNRESTRICTED, radius),
        "A4": AgentTypeSpec(Collaboration.GOAL_AWARE),
        "A5": AgentTypeSpec(Collaboration.GOAL_AWARE, radius),
    }[name]


@dataclass(frozen=True)
class CoordinationConfig:
    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


class AgentState(NamedTuple):
    position: tuple
    goal_id: int
    terminated: bool = False


def discover_peers(subject: int, states: Sequence[AgentState], spec: AgentTypeSpec) -> list[int]:
    """Ids of agents the subject may merge with, ascending. Terminated
    agents remain eligible as peers."""
    if spec.collaboration is Collaboration.NONE:
        return []
    me = states[subject]
    peers = []
    for j, other in enumerate(states):
        if j == subject:
            continue
        if spec.collaboration is Collaboration.GOAL_AWARE and other.goal_id != me.goal_id:
            continue
        if spec.limited and not in_observation_range(me.position, other.position, spec.radius):
            continue
        peers.append(j)
    return peers


def _peer_mean(peers: Sequence[np.ndarray]) -> np.ndarray:
    stacked = np.stack(peers)
    if len(peers) > 2:
        # Elementwise sort makes the sum independent of peer order, bit for bit.
        stacked.sort(axis=0)
    return stacked.sum(axis=0) / len(peers)


def merge_weights(own: np.ndarray, peers: Sequence[np.ndarray], alpha: float) -> np.ndarray:
    if not peers:
        raise ValueError("merge needs at least one peer; skip the merge instead")
    own = np.asarray(own, dtype=np.float64)
    for p in peers:
        if np.shape(p) != own.shape:
            raise ValueError(f"parameter length mismatch: {np.shape(p)} vs {own.shape}")
    if alpha == 0.0:
        return own.copy()
    mean = _peer_mean(peers)
    if alpha == 1.0:
        return mean
    # Same value as (1 - alpha) * own + alpha * mean, but exact when mean == own.
    return own + alpha * (mean - own)


def coordination_round(agents, states: Sequence[AgentState], specs, config: CoordinationConfig) -> dict[int, list[int]]:
    """Merge every active agent with its peers, in place.

    ``specs`` is one :class:`AgentTypeSpec` for all agents or one per agent.
    Returns the peer lists that were applied, keyed by agent id.
    """
    n = len(agents)
    if isinstance(specs, AgentTypeSpec):
        specs = [specs] * n
    applied = {}
    for i in range(n):
        if states[i].terminated:
            continue
        peers = discover_peers(i, states, specs[i])
        if peers:
            applied[i] = peers
    if not applied or config.alpha == 0.0:
        return applied

    involved = set(applied) | {j for ps in applied.values() for j in ps}
    snapshot = {i: [net.params.copy() for net in agents[i].networks] for i in involved}
    for i, peers in applied.items():
        for k, net in enumerate(agents[i].networks):
            net.set_params(merge_weights(snapshot[i][k], [snapshot[j][k] for j in peers], config.alpha))
    return applied
