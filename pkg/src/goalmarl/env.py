"""Grid world: map representation, ASCII map files, movement and rewards.

Coordinates are ``(x, y)`` with ``x`` the column (increasing right) and ``y``
the row (increasing down). Map text is read row-major.

Map alphabet::

    .       free cell
    #       obstacle
    0-9     goal, the digit is the goal id
    a-t     agent spawn, ``a`` is agent 0, ``b`` agent 1, ...

Spawns carry no goal in the text; a sidecar ``.goals`` file (INI, section
``[goals]``, lines like ``a = 0``) assigns each agent its goal id.
"""
from __future__ import annotations

import configparser
import math
import warnings
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

AGENT_LETTERS = "abcdefghijklmnopqrst"


class MapError(ValueError):
    """Raised for malformed map text or inconsistent goal assignments."""


class RoomRuleWarning(UserWarning):
    """A spawn shares an enclosed room with its own goal."""


class Position(NamedTuple):
    x: int
    y: int


class ActionKind(IntEnum):
    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


N_ACTIONS = len(ActionKind)

_DELTAS = {
    ActionKind.STAY: (0, 0),
    ActionKind.UP: (0, -1),
    ActionKind.DOWN: (0, 1),
    ActionKind.LEFT: (-1, 0),
    ActionKind.RIGHT: (1, 0),
}


@dataclass(frozen=True)
class RewardParams:
    lambda_stay: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.lambda_stay < 1.0:
            raise ValueError(f"lambda_stay must lie in (0, 1), got {self.lambda_stay}")


@dataclass(frozen=True)
class StepOutcome:
    new_position: Position
    reward: float
    reached_goal: bool
    move_was_valid: bool


@dataclass(frozen=True)
class GridMap:
    """Static world. ``goals[g]`` is the cell of goal ``g``; ``spawns[i]`` is
    ``(position, goal_id)`` for agent ``i``."""

    width: int
    height: int
    obstacles: frozenset = frozenset()
    goals: tuple = ()
    spawns: tuple = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise MapError(f"map must be at least 1x1, got {self.width}x{self.height}")
        object.__setattr__(self, "obstacles", frozenset(Position(*p) for p in self.obstacles))
        object.__setattr__(self, "goals", tuple(Position(*g) for g in self.goals))
        object.__setattr__(
            self, "spawns", tuple((Position(*p), int(g)) for p, g in self.spawns)
        )
        for p in (*self.obstacles, *self.goals, *(p for p, _ in self.spawns)):
            if not self.in_bounds(p):
                raise MapError(f"position {tuple(p)} outside {self.width}x{self.height} map")
        if len(set(self.goals)) != len(self.goals):
            raise MapError("goal positions must be pairwise distinct")
        for g in self.goals:
            if g in self.obstacles:
                raise MapError(f"goal at {tuple(g)} lies on an obstacle")
        for i, (p, g) in enumerate(self.spawns):
            if p in self.obstacles:
                raise MapError(f"spawn of agent {i} at {tuple(p)} lies on an obstacle")
            if not 0 <= g < len(self.goals):
                raise MapError(f"agent {i} assigned to unknown goal {g}")

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    @property
    def n_agents(self) -> int:
        return len(self.spawns)

    def in_bounds(self, p) -> bool:
        return 0 <= p[0] < self.width and 0 <= p[1] < self.height

    def is_free(self, p) -> bool:
        return self.in_bounds(p) and Position(*p) not in self.obstacles

    def goal_of(self, agent_id: int) -> Position:
        return self.goals[self.spawns[agent_id][1]]

    def with_agents(self, n: int) -> "GridMap":
        """The same world keeping only the first ``n`` spawns."""
        if not 0 <= n <= len(self.spawns):
            raise MapError(f"map has {len(self.spawns)} spawns, cannot keep {n}")
        return GridMap(self.width, self.height, self.obstacles, self.goals, self.spawns[:n])


# -- parsing and rendering ---------------------------------------------------


def parse_map(text: str, agent_goals: Mapping[int, int] | None = None) -> GridMap:
    """Build a :class:`GridMap` from ASCII text.

    ``agent_goals`` maps agent id to goal id and must cover exactly the
    agents marked in the text. Room-rule violations are reported with
    :class:`RoomRuleWarning`.
    """
    agent_goals = dict(agent_goals or {})
    rows = text.replace("\r\n", "\n").rstrip("\n").split("\n")
    if not rows or not rows[0]:
        raise MapError("empty map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MapError("map is not rectangular: all lines must have equal length")

    obstacles = set()
    goals: dict[int, Position] = {}
    spawns: dict[int, Position] = {}
    for y, row in enumerate(rows):
        for x, ch in enumerate(row):
            p = Position(x, y)
            if ch == ".":
                continue
            if ch == "#":
                obstacles.add(p)
            elif ch.isdigit():
                gid = int(ch)
                if gid in goals:
                    raise MapError(f"duplicate goal marker {ch!r}")
                goals[gid] = p
            elif ch in AGENT_LETTERS:
                aid = AGENT_LETTERS.index(ch)
                if aid in spawns:
                    raise MapError(f"duplicate agent marker {ch!r}")
                spawns[aid] = p
            else:
                raise MapError(f"unexpected character {ch!r} at {(x, y)}")

    if sorted(goals) != list(range(len(goals))):
        raise MapError(f"goal ids must be contiguous from 0, got {sorted(goals)}")
    if sorted(spawns) != list(range(len(spawns))):
        raise MapError("agent markers must be contiguous from 'a'")
    missing = [AGENT_LETTERS[a] for a in spawns if a not in agent_goals]
    if missing:
        raise MapError(f"agents without goal assignment: {', '.join(missing)}")
    extra = [a for a in agent_goals if a not in spawns]
    if extra:
        raise MapError(f"goal assignment for agents not on the map: {extra}")

    grid = GridMap(
        width=width,
        height=len(rows),
        obstacles=frozenset(obstacles),
        goals=tuple(goals[g] for g in range(len(goals))),
        spawns=tuple((spawns[a], agent_goals[a]) for a in range(len(spawns))),
    )
    for msg in room_rule_violations(grid):
        warnings.warn(msg, RoomRuleWarning, stacklevel=2)
    return grid


def render_map(grid: GridMap) -> tuple[str, dict[int, int]]:
    """Inverse of :func:`parse_map`: returns map text and the goal assignment."""
    if len(grid.goals) > 10 or len(grid.spawns) > len(AGENT_LETTERS):
        raise MapError("too many goals or agents for the ASCII format")
    cells = [["."] * grid.width for _ in range(grid.height)]
    for p in grid.obstacles:
        cells[p.y][p.x] = "#"
    for gid, p in enumerate(grid.goals):
        cells[p.y][p.x] = str(gid)
    for aid, (p, _) in enumerate(grid.spawns):
        if cells[p.y][p.x] != ".":
            raise MapError(f"agent {aid} shares cell {tuple(p)} with another marker")
        cells[p.y][p.x] = AGENT_LETTERS[aid]
    text = "\n".join("".join(row) for row in cells) + "\n"
    return text, {aid: g for aid, (_, g) in enumerate(grid.spawns)}


def read_goal_sidecar(path: str | Path) -> dict[int, int]:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section("goals"):
        raise MapError(f"{path}: missing [goals] section")
    out = {}
    for key, value in parser.items("goals"):
        if len(key) != 1 or key not in AGENT_LETTERS:
            raise MapError(f"{path}: bad agent key {key!r}")
        out[AGENT_LETTERS.index(key)] = int(value)
    return out


def write_goal_sidecar(path: str | Path, agent_goals: Mapping[int, int]) -> None:
    lines = ["[goals]"] + [f"{AGENT_LETTERS[a]} = {g}" for a, g in sorted(agent_goals.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_map(path: str | Path) -> GridMap:
    """Read a ``.map`` file plus its ``.goals`` sidecar, if any."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    sidecar = path.with_suffix(".goals")
    agent_goals = read_goal_sidecar(sidecar) if sidecar.exists() else {}
    return parse_map(text, agent_goals)


def save_map(grid: GridMap, path: str | Path) -> None:
    path = Path(path)
    text, agent_goals = render_map(grid)
    path.write_text(text, encoding="utf-8", newline="\n")
    if agent_goals:
        write_goal_sidecar(path.with_suffix(".goals"), agent_goals)


def default_map_path(name: str) -> Path:
    """Path of a map shipped with the package (``small_10x10`` or ``large_20x20``)."""
    return Path(__file__).with_name("maps") / f"{name}.map"


# -- dynamics ----------------------------------------------------------------


def transition(grid: GridMap, pos, action) -> tuple[Position, bool]:
    """Apply ``action`` at ``pos``. Blocked moves leave the agent in place and
    report ``valid=False``. Agents never block each other."""
    dx, dy = _DELTAS[ActionKind(action)]
    target = Position(pos[0] + dx, pos[1] + dy)
    if grid.is_free(target):
        return target, True
    return Position(*pos), False


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def reward(prev, new, goal, move_was_valid: bool, params: RewardParams = RewardParams()) -> float:
    # Branch order matters: goal first, then blocked moves, then staying.
    if tuple(new) == tuple(goal):
        return 1.0
    if not move_was_valid:
        return -1.0
    if tuple(prev) == tuple(new):
        return -params.lambda_stay
    return 1.0 / distance(new, goal)


def step(grid: GridMap, pos, action, goal, params: RewardParams = RewardParams()) -> StepOutcome:
    new, valid = transition(grid, pos, action)
    r = reward(pos, new, goal, valid, params)
    return StepOutcome(new, r, new == tuple(goal), valid)


def in_observation_range(a, b, c: int) -> bool:
    """Square (Chebyshev) neighbourhood of radius ``c``."""
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) <= c


def shortest_path_length(grid: GridMap, start, goal) -> int | None:
    """Breadth-first search over free cells; ``None`` if unreachable."""
    start, goal = Position(*start), Position(*goal)
    seen = {start: 0}
    queue = deque([start])
    while queue:
        p = queue.popleft()
        if p == goal:
            return seen[p]
        for a in ActionKind:
            q, ok = transition(grid, p, a)
            if ok and q not in seen:
                seen[q] = seen[p] + 1
                queue.append(q)
    return None


# -- rooms -------------------------------------------------------------------


def _blocked(grid: GridMap, p) -> bool:
    return not grid.is_free(p)


def door_cells(grid: GridMap) -> frozenset:
    """Free cells sitting in a one-cell gap of a wall: blocked on both sides
    along one axis. Doors belong to no room. Adjacent door cells are not
    recognised as doors."""
    doors = set()
    for y in range(grid.height):
        for x in range(grid.width):
            p = Position(x, y)
            if not grid.is_free(p):
                continue
            horiz = _blocked(grid, (x - 1, y)) and _blocked(grid, (x + 1, y))
            vert = _blocked(grid, (x, y - 1)) and _blocked(grid, (x, y + 1))
            # Out-of-bounds alone does not make a door (border cells of a room).
            horiz = horiz and (Position(x - 1, y) in grid.obstacles or Position(x + 1, y) in grid.obstacles)
            vert = vert and (Position(x, y - 1) in grid.obstacles or Position(x, y + 1) in grid.obstacles)
            if horiz or vert:
                doors.add(p)
    return frozenset(doors)


def find_rooms(grid: GridMap) -> list[frozenset]:
    """Flood-fill rooms over free, non-door cells, ordered by first cell in
    row-major order."""
    doors = door_cells(grid)
    seen: set = set()
    rooms = []
    for y in range(grid.height):
        for x in range(grid.width):
            p = Position(x, y)
            if p in seen or p in doors or not grid.is_free(p):
                continue
            room = {p}
            queue = deque([p])
            seen.add(p)
            while queue:
                q = queue.popleft()
                for a in (ActionKind.UP, ActionKind.DOWN, ActionKind.LEFT, ActionKind.RIGHT):
                    r, ok = transition(grid, q, a)
                    if ok and r not in seen and r not in doors:
                        seen.add(r)
                        room.add(r)
                        queue.append(r)
            rooms.append(frozenset(room))
    return rooms


def room_index(rooms: Iterable[frozenset], p) -> int | None:
    for i, room in enumerate(rooms):
        if p in room:
            return i
    return None


def room_rule_violations(grid: GridMap) -> list[str]:
    """Messages for every spawn that starts in the same room as its goal."""
    if not grid.spawns:
        return []
    rooms = find_rooms(grid)
    out = []
    for aid, (p, g) in enumerate(grid.spawns):
        r = room_index(rooms, p)
        if r is not None and r == room_index(rooms, grid.goals[g]):
            out.append(
                f"agent {AGENT_LETTERS[aid]} at {tuple(p)} starts in room {r} "
                f"together with its own goal {g} at {tuple(grid.goals[g])}"
            )
    return out
