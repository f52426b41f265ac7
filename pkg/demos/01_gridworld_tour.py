"""
A tour of the grid world
========================

Maps, rooms, the reward signal and the BFS oracle, in plain numpy.
Run with ``python demos/01_gridworld_tour.py``.
"""

# %%
# The shipped small map: letters are agents, digits are goals, ``#`` is a wall.
import numpy as np

from goalmarl.env import (
    ActionKind,
    default_map_path,
    find_rooms,
    load_map,
    render_map,
    reward,
    room_index,
    room_rule_violations,
    shortest_path_length,
    transition,
)

grid = load_map(default_map_path("small_10x10"))
text, goals_of = render_map(grid)
print(text)
print("agent -> goal:", goals_of)

# %%
# Flood fill splits the free cells into rooms; doors belong to no room.
rooms = find_rooms(grid)
labels = np.full((grid.height, grid.width), -1)
for k, room in enumerate(rooms):
    for x, y in room:
        labels[y, x] = k
print(labels)
print("room of each spawn:", [room_index(rooms, p) for p, _ in grid.spawns])
print("placement warnings:", room_rule_violations(grid) or "none")

# %%
# One step of every action from agent a's spawn. Walls cost -1, staying -0.5,
# and a valid move earns the inverse distance to the goal.
start, goal_id = grid.spawns[0]
goal = grid.goals[goal_id]
for a in ActionKind:
    new, valid = transition(grid, start, a)
    print(f"{a.name:5s} -> {tuple(new)} valid={valid!s:5s} r={reward(start, new, goal, valid):+.3f}")

# %%
# Shortest paths are the yardstick for learned step counts.
for i, (p, g) in enumerate(grid.spawns):
    print(f"agent {i}: BFS distance to goal {g} = {shortest_path_length(grid, p, grid.goals[g])}")
