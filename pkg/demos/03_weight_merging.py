"""
Merging weights between agents
==============================

How one coordination round moves parameters, why the goal filter matters,
and a short three-agent training comparison. About 3 minutes in total.
"""

# %%
# Two agents with scalar "networks" 0 and 1 meet each other halfway.
import numpy as np

from goalmarl.coordination import merge_weights

a, b = np.zeros(1), np.ones(1)
for k in range(5):
    a, b = merge_weights(a, [b], 0.1), merge_weights(b, [a], 0.1)
    print(f"round {k + 1}: {a[0]:.4f} {b[0]:.4f}  gap {b[0] - a[0]:.4f} (0.8^{k + 1} = {0.8 ** (k + 1):.4f})")

# %%
# Who merges with whom: A2 merges with everyone, A4 only with same-goal
# agents, A5 only with same-goal agents inside a square of radius c.
from goalmarl.coordination import AgentState, agent_type, discover_peers

states = [AgentState((0, 0), 0), AgentState((2, 2), 0), AgentState((5, 5), 0), AgentState((1, 1), 1)]
for name in ("A1", "A2", "A3", "A4", "A5"):
    print(name, discover_peers(0, states, agent_type(name, 2)))

# %%
# Scenario 1 layout, shortened to 300 episodes: agents 0 and 1 share goal 0,
# agent 2 heads for goal 1. Compare independent learners with goal-aware merging.
from goalmarl.orchestrator import format_steps, preset, run_scenario, summarize

for kind in ("A1", "A5"):
    result = run_scenario(preset("s1", agent_type=kind, episodes=300, seed=7))
    s = summarize(result)
    steps = ", ".join(format_steps(a) for a in s["agents"])
    print(f"{kind}: final-window reward {s['final_window_reward']:.2f}, steps per agent {steps}")
