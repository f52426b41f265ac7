"""
One agent learns to cross an empty room
=======================================

A lone actor-critic agent on a 5x5 map, 300 episodes. Takes about 10 s.
"""

# %%
import numpy as np

from goalmarl.env import GridMap, shortest_path_length
from goalmarl.orchestrator import ScenarioConfig, run_scenario

grid = GridMap(5, 5, frozenset(), goals=((4, 4),), spawns=(((0, 0), 0),))
bfs = shortest_path_length(grid, (0, 0), (4, 4))
result = run_scenario(ScenarioConfig(grid=grid, episodes=300, max_steps=50, seed=0))

# %%
# Steps to goal fall toward the BFS optimum as the policy sharpens.
steps = np.array([e.steps_to_goal[0] or 50 for e in result.episodes])
for lo in (0, 10, 25, 50, 100, 200):
    chunk = steps[lo:lo + 10]
    print(f"episodes {lo:3d}-{lo + 9:3d}: mean steps {chunk.mean():5.1f}, worst {chunk.max():2d} (BFS {bfs})")

# %%
# The trained greedy policy, drawn as arrows. Cells the agent rarely
# visits can still point the wrong way.
agent = result.agents[0]
arrows = np.array(list(".^v<>"))
board = np.full((5, 5), " ")
for y in range(5):
    for x in range(5):
        board[y, x] = arrows[agent.greedy_action(np.array([x / 4, y / 4, 1.0]))]
board[4, 4] = "G"
print("\n".join("".join(row) for row in board))
