"""A single decentralized actor-critic agent.

The actor maps a goal-conditioned state to logits over the five moves and is
sampled multinomially. The critic scores ``(state, one_hot(action))``.
Targets follow the DDPG pattern: a target actor picks the greedy next
action, a target critic scores it, and both targets trail the online
networks by Polyak averaging.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .env import N_ACTIONS, ActionKind
from .nn import AdamState, DenseNet, init_network, load_params, log_softmax, optimizer_step, save_params, softmax


ADVANTAGE_MODES = ("expected", "baseline", "td")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    beta: float = 0.5
    tau: float = 0.01
    batch_size: int = 64
    buffer_capacity: int = 100_000
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    hidden: tuple = (64, 64)
    # Goal arrival is bootstrapped as an absorbing state that keeps paying
    # the arrival reward; with False the target is the bare reward.
    absorbing_goal: bool = True
    # Standardize advantages within each minibatch before the actor step.
    normalize_advantages: bool = False
    # "expected": Q(s, b) - V(s) for all five b, V(s) = sum_b pi(b|s) Q(s, b);
    # "baseline": y - V(s) on the taken action;  "td": y - Q(s, a)
    advantage: str = "expected"
    # Start the critic's output bias at the largest attainable return so that
    # untried actions look attractive until experience says otherwise.
    optimistic_critic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.absorbing_goal and self.gamma >= 1.0:
            raise ValueError("absorbing_goal needs gamma < 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.advantage not in ADVANTAGE_MODES:
            raise ValueError(f"advantage must be one of {ADVANTAGE_MODES}, got {self.advantage!r}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError(f"bad hidden widths {self.hidden}")

    @property
    def max_return(self) -> float:
        """Discounted return of collecting the top reward (1) forever."""
        return 1.0 / (1.0 - self.gamma) if self.gamma < 1.0 else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def encode_state(pos, goal_id: int, width: int, height: int, n_goals: int) -> np.ndarray:
    """``[x/(w-1), y/(h-1)] ++ one_hot(goal_id, n_goals)``."""
    if not 0 <= goal_id < n_goals:
        raise ValueError(f"goal id {goal_id} outside [0, {n_goals})")
    s = np.zeros(2 + n_goals)
    s[0] = pos[0] / (width - 1) if width > 1 else 0.0
    s[1] = pos[1] / (height - 1) if height > 1 else 0.0
    s[2 + goal_id] = 1.0
    return s


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    @property
    def size(self) -> int:
        return self.actions.shape[0]

    @classmethod
    def from_transitions(cls, transitions) -> "Batch":
        ts = list(transitions)
        return cls(
            np.array([t.state for t in ts], dtype=np.float64),
            np.array([int(t.action) for t in ts], dtype=np.int64),
            np.array([t.reward for t in ts], dtype=np.float64),
            np.array([t.next_state for t in ts], dtype=np.float64),
            np.array([bool(t.terminal) for t in ts], dtype=bool),
        )


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, state_dim: int, rng=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._states = np.zeros((capacity, state_dim))
        self._next = np.zeros((capacity, state_dim))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._terminals = np.zeros(capacity, dtype=bool)
        self._head = 0  # next write slot
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, t: Transition) -> None:
        i = self._head
        self._states[i] = t.state
        self._actions[i] = t.action
        self._rewards[i] = t.reward
        self._next[i] = t.next_state
        self._terminals[i] = t.terminal
        self._head = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slots(self, idx: np.ndarray) -> np.ndarray:
        # logical index 0 is the oldest stored transition
        start = (self._head - self._size) % self.capacity
        return (start + idx) % self.capacity

    def sample(self, n: int) -> Batch:
        """``n`` transitions, without replacement when the buffer holds at
        least ``n``, with replacement otherwise."""
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        if self._size >= n:
            idx = self.rng.choice(self._size, size=n, replace=False)
        else:
            idx = self.rng.integers(0, self._size, size=n)
        return self._gather(self._slots(idx))

    def _gather(self, slots) -> Batch:
        return Batch(
            self._states[slots],
            self._actions[slots],
            self._rewards[slots],
            self._next[slots],
            self._terminals[slots],
        )

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        b = self._gather(self._slots(np.arange(self._size)))
        return [Transition(b.states[k], int(b.actions[k]), float(b.rewards[k]), b.next_states[k], bool(b.terminals[k]))
                for k in range(b.size)]


def buffer_push(buffer: ReplayBuffer, t: Transition) -> None:
    buffer.push(t)


def buffer_sample(buffer: ReplayBuffer, n: int) -> Batch:
    return buffer.sample(n)


_EYE = np.eye(N_ACTIONS)


def standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / (sd + 1e-8)


def critic_input(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.concatenate([np.atleast_2d(states), _EYE[np.asarray(actions)].reshape(-1, N_ACTIONS)], axis=1)


def all_action_inputs(states: np.ndarray) -> np.ndarray:
    """Critic inputs for every (state, action) pair, state-major: row
    ``5*i + a`` pairs state ``i`` with action ``a``."""
    states = np.atleast_2d(states)
    n = states.shape[0]
    return np.concatenate([np.repeat(states, N_ACTIONS, axis=0), np.tile(_EYE, (n, 1))], axis=1)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Multinomial draw by inverse CDF, one uniform per call."""
    k = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return min(k, len(probs) - 1)  # rounding tail of cumsum


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


class ActorCritic:
    """Actor, critic, their target copies, optimizer state and replay buffer
    for one agent.

    ``seed`` (int or ``SeedSequence``) drives weight init, action sampling and
    minibatch sampling. ``init_seed``, when given, takes over weight init
    only, so several agents can start from the same networks while acting
    and sampling independently.
    """

    def __init__(self, state_dim: int, goal_id: int, config: AgentConfig = AgentConfig(), seed=0, init_seed=None):
        self.state_dim = state_dim
        self.goal_id = goal_id
        self.config = config
        actor_ss, critic_ss, policy_ss, buffer_ss = _seed_sequence(seed).spawn(4)
        if init_seed is not None:
            actor_ss, critic_ss = _seed_sequence(init_seed).spawn(2)
        hidden = list(config.hidden)
        self.actor = init_network(actor_ss, [state_dim, *hidden, N_ACTIONS])
        self.critic = init_network(critic_ss, [state_dim + N_ACTIONS, *hidden, 1])
        if config.optimistic_critic:
            self.critic.biases[-1][0] = config.max_return
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState(self.actor.n_params, lr=config.actor_lr)
        self.critic_opt = AdamState(self.critic.n_params, lr=config.critic_lr)
        self.rng = np.random.default_rng(policy_ss)
        self.buffer = ReplayBuffer(config.buffer_capacity, state_dim, np.random.default_rng(buffer_ss))

    @property
    def networks(self) -> tuple[DenseNet, DenseNet, DenseNet, DenseNet]:
        """Fixed order: actor, critic, target actor, target critic."""
        return self.actor, self.critic, self.target_actor, self.target_critic

    # -- acting ---------------------------------------------------------------

    def policy(self, state) -> np.ndarray:
        return softmax(self.actor.forward(state))

    def select_action(self, state) -> int:
        return sample_action(self.policy(state), self.rng)

    def greedy_action(self, state) -> int:
        return int(np.argmax(self.actor.forward(state)))

    # -- learning ---------------------------------------------------------------

    def td_targets(self, batch: Batch) -> np.ndarray:
        cfg = self.config
        nxt = batch.next_states
        greedy = np.argmax(self.target_actor.forward(nxt), axis=1)
        q_next = self.target_critic.forward(critic_input(nxt, greedy))[:, 0]
        y = batch.rewards + cfg.gamma * q_next
        if cfg.absorbing_goal:
            terminal_value = batch.rewards / (1.0 - cfg.gamma)
        else:
            terminal_value = batch.rewards
        return np.where(batch.terminals, terminal_value, y)

    def critic_loss_and_grad(self, batch: Batch, y: np.ndarray):
        """Squared TD loss on the taken actions. Also returns the critic's
        values for all five actions of each state, shape ``(B, 5)``."""
        n = len(y)
        q_all, acts = self.critic.forward_cached(all_action_inputs(batch.states))
        taken = np.arange(n) * N_ACTIONS + batch.actions
        err = q_all[taken, 0] - y
        loss = float(np.mean(err * err))
        grad = self.critic.backprop([h[taken] for h in acts], (2.0 / n) * err[:, None])
        return loss, grad, q_all.reshape(n, N_ACTIONS)

    def actor_loss_and_grad(self, batch: Batch, advantages: np.ndarray, cache=None):
        """Entropy-regularized policy-gradient loss and its gradient.

        ``advantages`` of shape ``(B,)`` scores the taken actions:
        ``-mean[log pi(a|s) A + beta H]``. Shape ``(B, 5)`` scores every
        action and uses the expectation of that estimator under the current
        policy: ``-mean[sum_b pi(b|s) A(s, b) + beta H]``.
        """
        beta = self.config.beta
        logits, acts = cache if cache is not None else self.actor.forward_cached(batch.states)
        logp = log_softmax(logits)
        p = np.exp(logp)
        ent = -(p * logp).sum(axis=1)
        n = logits.shape[0]
        if advantages.ndim == 2:
            expected = (p * advantages).sum(axis=1)
            loss = -float(np.mean(expected + beta * ent))
            g = -p * (advantages - expected[:, None])
        else:
            rows = np.arange(n)
            loss = -float(np.mean(logp[rows, batch.actions] * advantages + beta * ent))
            g = p * advantages[:, None]
            g[rows, batch.actions] -= advantages
        g += beta * p * (logp + ent[:, None])
        grad = self.actor.backprop(acts, g / n)
        return loss, grad

    def _advantages(self, batch, y, q_all, logits):
        if self.config.advantage == "td":
            return y - q_all[np.arange(len(y)), batch.actions]
        if self.config.advantage == "baseline":
            return y - (softmax(logits) * q_all).sum(axis=1)
        return q_all - (softmax(logits) * q_all).sum(axis=1, keepdims=True)

    def advantages(self, batch: Batch) -> np.ndarray:
        """One-step advantage under the current networks (no gradient)."""
        y = self.td_targets(batch)
        q_all = self.critic.forward(all_action_inputs(batch.states))[:, 0].reshape(len(y), N_ACTIONS)
        return self._advantages(batch, y, q_all, self.actor.forward(batch.states))

    def critic_update(self, batch: Batch) -> float:
        if batch.size == 0:
            raise ValueError("empty minibatch")
        loss, grad, _ = self.critic_loss_and_grad(batch, self.td_targets(batch))
        optimizer_step(self.critic.params, grad, self.critic_opt)
        return loss

    def actor_update(self, batch: Batch, advantages=None) -> float:
        if batch.size == 0:
            raise ValueError("empty minibatch")
        if advantages is None:
            advantages = self.advantages(batch)
        if self.config.normalize_advantages:
            advantages = standardize(advantages)
        loss, grad = self.actor_loss_and_grad(batch, advantages)
        optimizer_step(self.actor.params, grad, self.actor_opt)
        return loss

    def learn(self, batch: Batch) -> tuple[float, float]:
        """Critic step then actor step on one minibatch.

        Targets, the all-action critic pass and the actor pass are computed
        once, before either step, and shared by both updates.
        """
        if batch.size == 0:
            raise ValueError("empty minibatch")
        y = self.td_targets(batch)
        c_loss, c_grad, q_all = self.critic_loss_and_grad(batch, y)
        cache = self.actor.forward_cached(batch.states)
        adv = self._advantages(batch, y, q_all, cache[0])
        if self.config.normalize_advantages:
            adv = standardize(adv)
        a_loss, a_grad = self.actor_loss_and_grad(batch, adv, cache)
        optimizer_step(self.critic.params, c_grad, self.critic_opt)
        optimizer_step(self.actor.params, a_grad, self.actor_opt)
        return c_loss, a_loss

    def soft_update(self) -> None:
        tau = self.config.tau
        for online, target in ((self.actor, self.target_actor), (self.critic, self.target_critic)):
            target.params *= 1.0 - tau
            target.params += tau * online.params

    # -- checkpoints --------------------------------------------------------------

    CHECKPOINT_NAMES = ("actor", "critic", "target_actor", "target_critic")

    def save(self, directory, prefix: str) -> list[Path]:
        directory = Path(directory)
        paths = []
        for name, net in zip(self.CHECKPOINT_NAMES, self.networks):
            path = directory / f"{prefix}_{name}.gmrl"
            save_params(net, path)
            paths.append(path)
        return paths

    def load(self, directory, prefix: str) -> None:
        for name, net in zip(self.CHECKPOINT_NAMES, self.networks):
            loaded = load_params(Path(directory) / f"{prefix}_{name}.gmrl", expected_dims=net.layer_dims)
            net.set_params(loaded.params)


def select_action(agent: ActorCritic, state) -> ActionKind:
    return ActionKind(agent.select_action(state))


def td_target(r: float, next_state, terminal: bool, agent: ActorCritic) -> float:
    batch = Batch(np.atleast_2d(np.asarray(next_state, dtype=np.float64)), np.zeros(1, dtype=np.int64),
                  np.array([r], dtype=np.float64), np.atleast_2d(np.asarray(next_state, dtype=np.float64)),
                  np.array([terminal]))
    return float(agent.td_targets(batch)[0])


def critic_update(agent: ActorCritic, batch: Batch) -> float:
    if batch.size == 0:
        raise ValueError("empty minibatch")
    return agent.critic_update(batch)


def actor_update(agent: ActorCritic, batch: Batch) -> float:
    if batch.size == 0:
        raise ValueError("empty minibatch")
    return agent.actor_update(batch)


def soft_update(agent: ActorCritic) -> None:
    agent.soft_update()
