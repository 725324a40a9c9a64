"""Command-line entry point.

    decake run --generate seed=42,parts=10 --report report.json
    decake run --scene scene.json --config cell.toml --report out.json --batch 8

Exit codes: 0 all parts done, 2 some parts skipped, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import SimConfig, load_config
from .errors import DecakeError
from .orchestrator import run_batch, set_brushing_budget
from .perception import render_depth, write_pgm
from .primitives import rectircle_path, spiral_path, trajectory_to_csv
from .scene import load_scene, save_scene, scene_generate


def _parse_generate(spec: str) -> dict:
    out: dict[str, float] = {}
    for item in spec.split(","):
        if not item:
            continue
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in ("seed", "parts", "mean", "sd"):
            raise ValueError(f"unknown --generate key: {key!r} "
                             "(expected seed=, parts=, mean=, sd=)")
        out[key] = float(value)
    out.setdefault("seed", 0)
    out.setdefault("parts", 10)
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="decake",
                                     description="Decaking workcell simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="simulate one or more decaking runs")
    src = runp.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", type=Path, help="scene JSON file")
    src.add_argument("--generate", type=str, metavar="seed=N,parts=K",
                     help="generate a seeded scene instead of loading one")
    runp.add_argument("--config", type=Path, help="TOML config file")
    runp.add_argument("--report", type=Path, help="write the JSON report here")
    runp.add_argument("--csv", type=Path, help="also write per-part rows as CSV")
    runp.add_argument("--dump-traces", type=Path, metavar="DIR",
                      help="dump depth render, cleaning paths, final scene")
    runp.add_argument("--batch", type=int, default=1,
                      help="run N scenarios on consecutive seeds")
    runp.add_argument("--seed", type=int, default=None,
                      help="base run seed (defaults to the scene seed)")
    runp.add_argument("--brushing-budget", type=float, default=None,
                      help="override total brushing seconds per part")
    runp.add_argument("--quiet", action="store_true", help="suppress the text table")
    return parser


def _make_scenes(args, cfg: SimConfig) -> list[tuple]:
    if args.generate:
        gen = _parse_generate(args.generate)
        base_seed = int(args.seed if args.seed is not None else gen["seed"])
        scenes = []
        for i in range(args.batch):
            seed = int(gen["seed"]) + i
            scene = scene_generate(
                seed, int(gen["parts"]),
                powder_mass_mean=gen.get("mean"),
                powder_mass_sd=gen.get("sd"),
                cfg=cfg,
            )
            scenes.append((scene, base_seed + i))
        return scenes
    scenes = []
    for i in range(args.batch):
        scene = load_scene(args.scene)
        base_seed = int(args.seed if args.seed is not None else scene.rng_seed)
        scenes.append((scene, base_seed + i))
    return scenes


def _dump_traces(directory: Path, scenes, cfg: SimConfig) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    scene = scenes[0][0]
    depth = render_depth(scene, scene.bin, resolution=cfg.scene.grid_resolution)
    write_pgm(depth.heights, directory / "bin_depth.pgm")
    cc = cfg.cleaning
    spiral = spiral_path((0.0, 0.0), cc.spiral_pitch, cc.spiral_r_max,
                         cc.path_speed, duration=cc.spiral_time,
                         sample_period=cc.sample_period)
    rect = rectircle_path((0.0, 0.0), cc.rectircle_width, cc.rectircle_height,
                          0.0, cc.path_speed, duration=cc.rectircle_time,
                          sample_period=cc.sample_period)
    trajectory_to_csv(spiral, directory / "spiral_path.csv")
    trajectory_to_csv(rect, directory / "rectircle_path.csv")
    save_scene(scene, directory / "final_scene.json")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else SimConfig()
        if args.brushing_budget is not None:
            set_brushing_budget(cfg, args.brushing_budget)
        scenes = _make_scenes(args, cfg)
        reports = run_batch(scenes, cfg)
        payload = {"runs": [r.to_dict() for r in reports]}
        text = json.dumps(payload, sort_keys=True, indent=2)
        if args.report:
            args.report.write_text(text)
        if args.csv:
            args.csv.write_text("".join(r.to_csv() for r in reports))
        if args.dump_traces:
            _dump_traces(args.dump_traces, scenes, cfg)
        if not args.quiet:
            for r in reports:
                sys.stdout.write(r.to_text())
                sys.stdout.write("\n")
        skipped = sum(r.skipped_count for r in reports)
        return 2 if skipped > 0 else 0
    except (DecakeError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
