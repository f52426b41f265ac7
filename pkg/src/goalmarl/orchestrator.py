"""Training loop, scenario presets, metrics and run outputs."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .agent import ActorCritic, AgentConfig, Transition, encode_state, sample_action
from .coordination import AgentState, AgentTypeSpec, CoordinationConfig, agent_type, coordination_round
from .env import GridMap, Position, RewardParams, default_map_path, load_map, reward, transition
from .nn import softmax

SMOOTHING_WINDOW = 50


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment. ``map_path`` names a ``.map`` file; ``grid`` (if set)
    replaces it with an in-memory map. ``n_agents=None`` uses every spawn."""

    map_path: str = str(default_map_path("small_10x10"))
    n_agents: int | None = None
    episodes: int = 2500
    max_steps: int = 400
    agent_type: str = "A1"
    radius: int | None = 2
    agent: AgentConfig = AgentConfig()
    coordination: CoordinationConfig = CoordinationConfig()
    reward: RewardParams = RewardParams()
    seed: int = 0
    # All agents start from the same network weights (drawn from ``seed``);
    # action and minibatch sampling stay per agent.
    shared_init: bool = True
    grid: GridMap | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.episodes < 0 or self.max_steps < 1:
            raise ValueError("episodes must be >= 0 and max_steps >= 1")
        if self.radius is not None and self.radius < 1:
            raise ValueError(f"observation radius must be positive, got {self.radius}")
        self.type_spec()  # validates agent_type/radius pairing

    def type_spec(self) -> AgentTypeSpec:
        return agent_type(self.agent_type, self.radius)

    def load_grid(self) -> GridMap:
        grid = self.grid if self.grid is not None else load_map(self.map_path)
        return grid if self.n_agents is None else grid.with_agents(self.n_agents)

    @property
    def step_budget(self) -> int:
        return self.episodes * self.max_steps

    def to_dict(self) -> dict:
        return {
            "map_path": self.map_path if self.grid is None else "<in-memory>",
            "n_agents": self.n_agents,
            "episodes": self.episodes,
            "max_steps": self.max_steps,
            "step_budget": self.step_budget,
            "agent_type": self.agent_type,
            "radius": self.radius,
            "agent": self.agent.to_dict(),
            "coordination": {"alpha": self.coordination.alpha},
            "reward": {"lambda_stay": self.reward.lambda_stay},
            "seed": self.seed,
            "shared_init": self.shared_init,
        }


def preset(name: str, **overrides) -> ScenarioConfig:
    """The three experiment rows: ``s1`` (3 agents), ``s2`` (4 agents) on the
    small map, ``s3`` (10 agents, batch 256) on the large map."""
    name = name.lower()
    if name == "s1":
        base = ScenarioConfig(map_path=str(default_map_path("small_10x10")), n_agents=3, episodes=2500, max_steps=400, radius=2)
    elif name == "s2":
        base = ScenarioConfig(map_path=str(default_map_path("small_10x10")), n_agents=4, episodes=2500, max_steps=400, radius=2)
    elif name == "s3":
        base = ScenarioConfig(map_path=str(default_map_path("large_20x20")), n_agents=10, episodes=400, max_steps=2500,
                              radius=3, agent=AgentConfig(batch_size=256))
    else:
        raise ValueError(f"unknown scenario {name!r}; expected s1, s2 or s3")
    return replace(base, **overrides)


@dataclass
class EpisodeMetrics:
    episode: int
    success: list
    steps_to_goal: list  # None where the agent failed
    rewards: list
    length: int  # environment steps taken in this episode

    @property
    def all_succeeded(self) -> bool:
        return all(self.success)

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else 0.0


def agent_seed(master_seed: int, agent_id: int) -> np.random.SeedSequence:
    """Per-agent stream; independent of how many other agents exist."""
    return np.random.SeedSequence([master_seed, agent_id])


def build_agents(config: ScenarioConfig, grid: GridMap) -> list[ActorCritic]:
    state_dim = 2 + grid.n_goals
    init = np.random.SeedSequence(config.seed) if config.shared_init else None
    return [ActorCritic(state_dim, g, config.agent, seed=agent_seed(config.seed, i), init_seed=init)
            for i, (_, g) in enumerate(grid.spawns)]


Policy = Callable[[int, ActorCritic, np.ndarray, Position], int]


def run_episode(config: ScenarioConfig, grid: GridMap, agents, episode_index: int = 0,
                learn: bool = True, policy: Policy | None = None,
                coordinate: bool | None = None) -> EpisodeMetrics:
    """Play one episode. Agents start on their spawns; an agent that reaches
    its goal stops acting and learning for the rest of the episode.

    ``policy`` replaces multinomial sampling (e.g. greedy evaluation or a
    scripted oracle); ``learn=False`` freezes local updates. ``coordinate``
    defaults to ``learn``; pass it explicitly to merge weights without learning.
    """
    if coordinate is None:
        coordinate = learn
    n = len(agents)
    spec = config.type_spec()
    w, h, n_goals = grid.width, grid.height, grid.n_goals
    positions = [p for p, _ in grid.spawns]
    goal_ids = [g for _, g in grid.spawns]
    goals = [grid.goals[g] for g in goal_ids]
    done = [positions[i] == goals[i] for i in range(n)]
    steps = [0 if d else None for d in done]
    totals = [1.0 if d else 0.0 for d in done]
    batch_size = config.agent.batch_size

    t = 0
    while t < config.max_steps and not all(done):
        t += 1
        if coordinate:
            states = [AgentState(positions[i], goal_ids[i], done[i]) for i in range(n)]
            coordination_round(agents, states, spec, config.coordination)
        for i, agent in enumerate(agents):
            if done[i]:
                continue
            s = encode_state(positions[i], goal_ids[i], w, h, n_goals)
            a = policy(i, agent, s, positions[i]) if policy else agent.select_action(s)
            new, valid = transition(grid, positions[i], a)
            r = reward(positions[i], new, goals[i], valid, config.reward)
            reached = new == goals[i]
            if learn:
                s2 = encode_state(new, goal_ids[i], w, h, n_goals)
                agent.buffer.push(Transition(s, a, r, s2, reached))
                agent.learn(agent.buffer.sample(batch_size))
                agent.soft_update()
            positions[i] = new
            totals[i] += r
            if reached:
                done[i] = True
                steps[i] = t
    return EpisodeMetrics(episode_index, list(done), steps, totals, t)


@dataclass
class RunResult:
    config: ScenarioConfig
    episodes: list
    agents: list = field(default_factory=list, repr=False)
    goal_ids: list = field(default_factory=list)

    @property
    def n_agents(self) -> int:
        return len(self.goal_ids)

    @property
    def total_steps(self) -> int:
        return sum(e.length for e in self.episodes)

    def system_rewards(self) -> np.ndarray:
        return np.array([e.mean_reward for e in self.episodes])

    def smoothed_system_rewards(self, window: int = SMOOTHING_WINDOW) -> np.ndarray:
        return moving_average(self.system_rewards(), window)

    def success_rates(self, last: int | None = None) -> list[float]:
        eps = self.episodes[-last:] if last else self.episodes
        if not eps:
            return [0.0] * self.n_agents
        return [float(np.mean([e.success[i] for e in eps])) for i in range(self.n_agents)]

    def system_success_rate(self, last: int | None = None) -> float:
        eps = self.episodes[-last:] if last else self.episodes
        return float(np.mean([e.all_succeeded for e in eps])) if eps else 0.0

    def steps_of(self, agent_id: int, last: int | None = None) -> list[int]:
        eps = self.episodes[-last:] if last else self.episodes
        return [e.steps_to_goal[agent_id] for e in eps if e.success[agent_id]]


def moving_average(values, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what exists so far."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    c = np.cumsum(np.insert(values, 0, 0.0))
    idx = np.arange(1, values.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def mean_std(values) -> tuple[float, float] | None:
    """Mean and population standard deviation, ``None`` for no values."""
    if len(values) == 0:
        return None
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), float(a.std())


def summarize(result: RunResult, window: int = SMOOTHING_WINDOW) -> dict:
    if not result.episodes:
        raise ValueError("cannot summarize a run without episodes")
    rates = result.success_rates()
    agents = []
    for i in range(result.n_agents):
        ms = mean_std(result.steps_of(i))
        agents.append({
            "agent_id": i,
            "goal_id": result.goal_ids[i],
            "success_rate": rates[i],
            "steps_mean": None if ms is None else ms[0],
            "steps_std": None if ms is None else ms[1],
        })
    rewards = result.system_rewards()
    return {
        "episodes": len(result.episodes),
        "total_env_steps": result.total_steps,
        "system_success_rate": result.system_success_rate(),
        "final_window_reward": float(rewards[-window:].mean()),
        "agents": agents,
    }


def format_steps(agent_summary: dict) -> str:
    if agent_summary["steps_mean"] is None:
        return "n/a"
    return f"{agent_summary['steps_mean']:.0f} ± {agent_summary['steps_std']:.0f}"


def run_scenario(config: ScenarioConfig, out_dir=None, progress: Callable[[EpisodeMetrics], None] | None = None) -> RunResult:
    """Train fresh agents for ``config.episodes`` episodes. Learning state
    (networks, optimizers, buffers) carries over between episodes; positions
    reset to the spawns. Deterministic given ``config.seed``."""
    grid = config.load_grid()
    agents = build_agents(config, grid)
    result = RunResult(config, [], agents, [g for _, g in grid.spawns])
    for ep in range(config.episodes):
        m = run_episode(config, grid, agents, ep)
        result.episodes.append(m)
        if progress:
            progress(m)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def metrics_csv(result: RunResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["episode", "agent_id", "success", "steps_to_goal", "episodic_reward", "smoothed_system_reward"])
    smoothed = result.smoothed_system_rewards()
    for e, sm in zip(result.episodes, smoothed):
        for i in range(result.n_agents):
            steps = "" if e.steps_to_goal[i] is None else e.steps_to_goal[i]
            writer.writerow([e.episode, i, int(e.success[i]), steps, repr(float(e.rewards[i])), repr(float(sm))])
    return buf.getvalue()


def write_outputs(result: RunResult, out_dir) -> list[Path]:
    """Write metrics.csv, summary.json and four checkpoints per agent."""
    out = Path(out_dir)
    ckpt = out / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    files = []
    path = out / "metrics.csv"
    path.write_text(metrics_csv(result), encoding="utf-8")
    files.append(path)
    summary = summarize(result) if result.episodes else {"episodes": 0, "agents": []}
    summary["seed"] = result.config.seed
    summary["config"] = result.config.to_dict()
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append(path)
    for i, agent in enumerate(result.agents):
        files.extend(agent.save(ckpt, f"agent{i:02d}"))
    return files


def evaluate(grid: GridMap, actors, episodes: int, max_steps: int, params: RewardParams = RewardParams(),
             rng: np.random.Generator | None = None) -> dict:
    """Rollouts of fixed actor networks, no learning, no merging.

    Actions are the argmax of each actor's logits, or multinomial samples
    when ``rng`` is given. ``actors[i]`` is anything with ``forward``.
    """
    goal_ids = [g for _, g in grid.spawns]
    n = len(goal_ids)
    if len(actors) != n:
        raise ValueError(f"map has {n} agents but {len(actors)} actors were given")
    eps = []
    for ep in range(episodes):
        positions = [p for p, _ in grid.spawns]
        done = [positions[i] == grid.goals[goal_ids[i]] for i in range(n)]
        steps = [0 if d else None for d in done]
        totals = [1.0 if d else 0.0 for d in done]
        t = 0
        while t < max_steps and not all(done):
            t += 1
            for i in range(n):
                if done[i]:
                    continue
                goal = grid.goals[goal_ids[i]]
                s = encode_state(positions[i], goal_ids[i], grid.width, grid.height, grid.n_goals)
                logits = actors[i].forward(s)
                if rng is None:
                    a = int(np.argmax(logits))
                else:
                    a = sample_action(softmax(logits), rng)
                new, valid = transition(grid, positions[i], a)
                totals[i] += reward(positions[i], new, goal, valid, params)
                positions[i] = new
                if new == goal:
                    done[i], steps[i] = True, t
        eps.append(EpisodeMetrics(ep, done, steps, totals, t))
    out = {"episodes": episodes, "agents": []}
    if not eps:
        return out
    out["system_success_rate"] = float(np.mean([e.all_succeeded for e in eps]))
    for i in range(n):
        ms = mean_std([e.steps_to_goal[i] for e in eps if e.success[i]])
        out["agents"].append({
            "agent_id": i,
            "success_rate": float(np.mean([e.success[i] for e in eps])),
            "steps_mean": None if ms is None else ms[0],
            "steps_std": None if ms is None else ms[1],
        })
    return out

