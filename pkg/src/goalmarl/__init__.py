"""Decentralized actor-critic agents on room-structured gridworlds, with
goal-aware weight merging between neighbouring agents."""
from .agent import ActorCritic, AgentConfig, ReplayBuffer, Transition, encode_state
from .coordination import AgentState, AgentTypeSpec, Collaboration, CoordinationConfig, agent_type, coordination_round
from .env import ActionKind, GridMap, MapError, Position, RewardParams, default_map_path, load_map, parse_map
from .nn import DenseNet, init_network, load_params, save_params
from .orchestrator import RunResult, ScenarioConfig, evaluate, preset, run_scenario, summarize

__version__ = "0.1.0"

__all__ = [
    "ActionKind", "ActorCritic", "AgentConfig", "AgentState", "AgentTypeSpec", "Collaboration",
    "CoordinationConfig", "DenseNet", "GridMap", "MapError", "Position", "ReplayBuffer", "RewardParams",
    "RunResult", "ScenarioConfig", "Transition", "agent_type", "coordination_round", "default_map_path",
    "encode_state", "evaluate", "init_network", "load_map", "load_params", "parse_map", "preset",
    "run_scenario", "save_params", "summarize",
]
