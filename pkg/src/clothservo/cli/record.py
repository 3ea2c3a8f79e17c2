"""The record subcommand: run a seeded trajectory and dump frames plus log."""
from __future__ import annotations

import json
from pathlib import Path

from .. import scene
from ..clothsim import GripperConfig, gripper_positions, step, write_trajectory_log
from ..errors import ParameterError
from ..imaging import save_png
from ..clothsim import render
from . import config as cfgmod


def record_trajectory(
    out_dir,
    seed: int,
    frames: int,
    style: str,
    params,
    camera,
    frame_rate: float,
) -> Path:
    """Drive the seeded medley, render every control frame, and write the
    line-delimited log with one (step, r, image) record per frame."""
    if frames < 1:
        raise ParameterError(f"a recording needs at least 1 frame, got {frames}")
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    state, grippers = scene.flat_state(params)
    state = scene.settle(state, grippers, params, max_frames=60)
    targets = scene.training_targets(seed, frames, grippers, style=style)

    records = []
    for t in range(frames):
        state = step(state, GripperConfig.from_vector(targets[t]), params)
        image = render(state, camera)
        rel = f"frames/frame_{t:05d}.png"
        save_png(image, out_dir / rel)
        r = gripper_positions(state, grippers.points.shape[0]).vector
        records.append({"step": t, "r": [float(x) for x in r], "image": rel})
    log_path = out_dir / "recording.jsonl"
    write_trajectory_log(log_path, records)
    return log_path


def run(args, cfg) -> int:
    out = Path(args.out)
    params = cfgmod.build_sim_params(cfg)
    camera = cfgmod.build_camera(cfg)
    frames = args.frames if args.frames is not None else cfg["record"]["frames"]
    style = args.style or cfg["record"]["style"]
    frame_rate = cfg["record"]["frame_rate"]
    seed = args.seed

    log_path = record_trajectory(out, seed, frames, style, params, camera, frame_rate)
    meta = {
        "command": "record",
        "seed": seed,
        "frames": frames,
        "style": style,
        "frame_rate": frame_rate,
        "config_hash": cfgmod.config_hash(cfg),
        "version": _package_version(),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"recorded {frames} frames to {log_path}")
    return 0


def _package_version() -> str:
    from .. import __version__

    return __version__
