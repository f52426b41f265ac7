"""Command-line entry point: ``train``, ``eval`` and ``map-check``.

Exit status is 0 on success, 1 when a run fails at runtime and 2 for bad
configuration or input files.

Settings resolve in three layers. Preset or built-in defaults come first,
then an optional INI file (``--config``), then command-line flags.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import warnings
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .coordination import AGENT_TYPES, CoordinationConfig
from .env import AGENT_LETTERS, MapError, RewardParams, find_rooms, load_map, room_index, room_rule_violations
from .nn import CheckpointError, load_params
from .orchestrator import ScenarioConfig, evaluate, preset, run_scenario, summarize

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad configuration or input file; maps to exit status 2."""


# -- configuration ----------------------------------------------------------------

_AGENT_KEYS = {
    "gamma": float, "beta": float, "tau": float, "batch_size": int, "buffer_capacity": int,
    "actor_lr": float, "critic_lr": float, "absorbing_goal": "bool", "normalize_advantages": "bool",
    "advantage": str, "optimistic_critic": "bool", "hidden": "ints",
}
_SECTIONS = {
    "environment": {"map", "n_agents", "lambda_stay"},
    "agent": set(_AGENT_KEYS),
    "coordination": {"agent_type", "alpha", "range"},
    "scenario": {"preset", "episodes", "max_steps", "seed"},
}


def read_config_file(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise InputError(f"{path}: unknown section [{section}]")
        unknown = set(parser[section]) - _SECTIONS[section]
        if unknown:
            raise InputError(f"{path}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    return parser


def _agent_overrides(section) -> dict:
    out = {}
    for key, kind in _AGENT_KEYS.items():
        if key not in section:
            continue
        if kind == "bool":
            out[key] = section.getboolean(key)
        elif kind == "ints":
            out[key] = tuple(int(v) for v in section[key].replace(",", " ").split())
        else:
            out[key] = kind(section[key])
    return out


def resolve_config(args, parser: configparser.ConfigParser | None = None) -> ScenarioConfig:
    """Merge preset, file and flags into one validated :class:`ScenarioConfig`."""
    parser = parser or configparser.ConfigParser()
    env = parser["environment"] if parser.has_section("environment") else {}
    agent = parser["agent"] if parser.has_section("agent") else {}
    coord = parser["coordination"] if parser.has_section("coordination") else {}
    scen = parser["scenario"] if parser.has_section("scenario") else {}
    try:
        name = args.scenario or scen.get("preset")
        config = preset(name) if name else ScenarioConfig()

        fields = {}
        if "map" in env:
            fields["map_path"] = env["map"]
        if "n_agents" in env:
            fields["n_agents"] = int(env["n_agents"])
        if "lambda_stay" in env:
            fields["reward"] = RewardParams(float(env["lambda_stay"]))
        if agent:
            fields["agent"] = replace(config.agent, **_agent_overrides(agent))
        if "alpha" in coord:
            fields["coordination"] = CoordinationConfig(float(coord["alpha"]))
        if "agent_type" in coord:
            fields["agent_type"] = coord["agent_type"].upper()
        if "range" in coord:
            fields["radius"] = int(coord["range"])
        for key in ("episodes", "max_steps", "seed"):
            if key in scen:
                fields[key] = int(scen[key])

        flags = {
            "agent_type": args.agent_type, "seed": args.seed, "episodes": args.episodes,
            "max_steps": args.max_steps, "radius": args.range,
        }
        fields.update({k: v for k, v in flags.items() if v is not None})
        if args.alpha is not None:
            fields["coordination"] = CoordinationConfig(args.alpha)
        if getattr(args, "map", None):
            fields["map_path"] = args.map
        return replace(config, **fields)
    except (ValueError, TypeError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def load_grid_or_fail(config: ScenarioConfig):
    path = Path(config.map_path)
    if not path.is_file():
        raise InputError(f"map file not found: {path}")
    try:
        return config.load_grid()
    except (MapError, ValueError, OSError) as exc:
        raise InputError(f"{path}: {exc}") from exc


# -- commands -------------------------------------------------------------------------


def default_out_dir(config: ScenarioConfig, scenario: str | None) -> Path:
    tag = scenario or Path(config.map_path).stem
    return Path("runs") / f"{tag}_{config.agent_type}_seed{config.seed}"


def cmd_train(args) -> int:
    parser = read_config_file(args.config) if args.config else None
    config = resolve_config(args, parser)
    load_grid_or_fail(config)
    out = Path(args.out) if args.out else default_out_dir(config, args.scenario)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc

    started = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def progress(m):
        if not args.quiet and (m.episode + 1) % args.log_every == 0:
            print(f"episode {m.episode + 1}/{config.episodes}  successes {sum(m.success)}/{len(m.success)}  "
                  f"mean reward {m.mean_reward:.2f}", file=sys.stderr, flush=True)

    result = run_scenario(config, out_dir=out, progress=progress)
    files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_path": str(args.config) if args.config else None,
        "resolved_config": config.to_dict(),
        "output_dir": str(out),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "artifacts": files + ["manifest.json"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if result.episodes:
        summary = summarize(result)
        print(f"system success rate {summary['system_success_rate']:.3f}  "
              f"final-window reward {summary['final_window_reward']:.3f}  -> {out}")
    else:
        print(f"no episodes run -> {out}")
    return EXIT_OK


def _load_actors(ckpt_dir: Path, n_agents: int):
    actors = []
    for i in range(n_agents):
        path = ckpt_dir / f"agent{i:02d}_actor.gmrl"
        if not path.is_file():
            raise InputError(f"missing checkpoint {path}")
        try:
            actors.append(load_params(path))
        except CheckpointError as exc:
            raise InputError(str(exc)) from exc
    return actors


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    ckpt_dir = run_dir / "checkpoints" if (run_dir / "checkpoints").is_dir() else run_dir
    summary_path = run_dir / "summary.json"
    if args.map:
        map_path, n_agents, max_steps = args.map, None, 400
    elif summary_path.is_file():
        recorded = json.loads(summary_path.read_text(encoding="utf-8"))["config"]
        map_path, n_agents, max_steps = recorded["map_path"], recorded["n_agents"], recorded["max_steps"]
    else:
        raise InputError(f"{run_dir}: no summary.json; pass --map")
    if args.max_steps is not None:
        max_steps = args.max_steps
    config = ScenarioConfig(map_path=map_path, n_agents=n_agents, max_steps=max_steps)
    grid = load_grid_or_fail(config)
    actors = _load_actors(ckpt_dir, grid.n_agents)
    expected_in = 2 + grid.n_goals
    for i, net in enumerate(actors):
        if net.layer_dims[0] != expected_in or net.layer_dims[-1] != 5:
            raise InputError(f"agent {i}: checkpoint dims {list(net.layer_dims)} do not fit a map with "
                             f"{grid.n_goals} goals")
    rng = np.random.default_rng(args.seed) if args.policy == "sample" else None
    report = evaluate(grid, actors, args.episodes, max_steps, rng=rng)
    report["policy"] = args.policy
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_map_check(args) -> int:
    path = Path(args.map)
    if not path.is_file():
        raise InputError(f"map file not found: {path}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            grid = load_map(path)
        except (MapError, ValueError) as exc:
            raise InputError(f"{path}: {exc}") from exc
    rooms = find_rooms(grid)
    print(f"{path}: {grid.width}x{grid.height}, {len(grid.obstacles)} obstacles, "
          f"{grid.n_goals} goals, {grid.n_agents} agents, {len(rooms)} rooms")
    for r, room in enumerate(rooms):
        goals = [str(g) for g, p in enumerate(grid.goals) if p in room]
        agents = [f"{AGENT_LETTERS[a]}->{g}" for a, (p, g) in enumerate(grid.spawns) if p in room]
        print(f"  room {r}: {len(room)} cells; goals [{', '.join(goals)}]; agents [{', '.join(agents)}]")
    outside = [f"{AGENT_LETTERS[a]}" for a, (p, _) in enumerate(grid.spawns) if room_index(rooms, p) is None]
    if outside:
        print(f"  agents on door cells: {', '.join(outside)}")
    problems = room_rule_violations(grid)
    for msg in problems:
        print(f"warning: {msg}")
    if not problems:
        print("no warnings")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="goalmarl", description="Goal-aware multi-agent gridworld training.")
    sub = ap.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train agents and write metrics, summary and checkpoints")
    tr.add_argument("--config", help="INI file with [environment], [agent], [coordination], [scenario]")
    tr.add_argument("--scenario", choices=["s1", "s2", "s3"], help="experiment preset")
    tr.add_argument("--map", help="map file (overrides the preset map)")
    tr.add_argument("--agent-type", choices=AGENT_TYPES, type=str.upper)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--episodes", type=int)
    tr.add_argument("--max-steps", type=int)
    tr.add_argument("--alpha", type=float, help="merge rate")
    tr.add_argument("--range", type=int, help="observation radius for A3/A5")
    tr.add_argument("--out", help="output directory")
    tr.add_argument("--log-every", type=int, default=100, help="progress line interval in episodes")
    tr.add_argument("--quiet", action="store_true")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="roll out saved actors with learning disabled")
    ev.add_argument("run_dir", help="training output directory or a checkpoints directory")
    ev.add_argument("--map", help="map file (default: the one recorded in summary.json)")
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--max-steps", type=int)
    ev.add_argument("--policy", choices=["greedy", "sample"], default="greedy")
    ev.add_argument("--seed", type=int, default=0, help="sampling seed for --policy sample")
    ev.add_argument("--out", help="also write the report to this JSON file")
    ev.set_defaults(func=cmd_eval)

    mc = sub.add_parser("map-check", help="print rooms, entities and placement warnings for a map")
    mc.add_argument("map")
    mc.set_defaults(func=cmd_map_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "episodes", None) is not None and args.episodes < 0:
        print("error: --episodes must be >= 0", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report, don't dump a traceback
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
