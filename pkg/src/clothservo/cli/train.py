"""The train subcommand: recordings in, feedback dictionary out."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..clothsim import read_trajectory_log
from ..dictionary import Recording, build_dictionary, sample_pairs
from ..errors import ParameterError
from ..features import FeatureSet
from ..imaging import load_png, segment_foreground
from . import config as cfgmod


def load_recording(rec_dir, feature_set: FeatureSet, background, frame_rate: float) -> Recording:
    """Replay a recorded log through the feature pipeline."""
    rec_dir = Path(rec_dir)
    log_path = rec_dir / "recording.jsonl"
    if not log_path.exists():
        raise ParameterError(f"no recording log at {log_path}")
    entries = read_trajectory_log(log_path)
    if not entries:
        raise ParameterError(f"recording log {log_path} is empty")
    configs, features = [], []
    for entry in entries:
        image = load_png(rec_dir / entry["image"])
        mask = segment_foreground(image, background)
        features.append(feature_set.extract(image, mask).values)
        configs.append(entry["r"])
    return Recording(
        configs=np.array(configs, dtype=np.float64),
        features=np.array(features, dtype=np.float64),
        layout_id=feature_set.layout_id,
        frame_rate=frame_rate,
    )


def train_dictionary(
    recordings: list,
    n_words: int,
    n_pairs: int,
    seed: int,
    feature_set: FeatureSet,
    sources=(),
):
    """Pool velocity pairs across recordings, then cluster and condense.

    Pairs never straddle recordings; the budget is split evenly with the
    remainder going to the earlier ones.
    """
    if not recordings:
        raise ParameterError("train needs at least one recording")
    rng = np.random.default_rng(seed)
    shares = [n_pairs // len(recordings)] * len(recordings)
    for i in range(n_pairs - sum(shares)):
        shares[i] += 1
    ds_parts, dr_parts = [], []
    for recording, share in zip(recordings, shares):
        if share == 0:
            continue
        ds, dr = sample_pairs(recording, share, rng)
        ds_parts.append(ds)
        dr_parts.append(dr)
    pooled = (np.concatenate(ds_parts), np.concatenate(dr_parts))
    return build_dictionary(
        recordings[0],
        n_words,
        n_pairs,
        rng,
        feature_set.to_config(),
        seed=seed,
        sources=tuple(sources),
        pairs=pooled,
    )


def run(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    feature_set = cfgmod.build_feature_set(cfg)
    background = cfgmod.build_background(cfg)
    frame_rate = cfg["record"]["frame_rate"]
    n_words = args.n_dic if args.n_dic is not None else cfg["dictionary"]["n_dic"]
    n_pairs = args.pairs if args.pairs is not None else cfg["dictionary"]["n_pairs"]

    recordings = [
        load_recording(path, feature_set, background, frame_rate)
        for path in args.recording
    ]
    dictionary = train_dictionary(
        recordings,
        n_words,
        n_pairs,
        args.seed,
        feature_set,
        sources=[str(Path(p)) for p in args.recording],
    )
    dict_path = out / "dictionary.json"
    dictionary.save(dict_path)
    meta = {
        "command": "train",
        "seed": args.seed,
        "n_dic": n_words,
        "n_pairs": n_pairs,
        "recordings": [str(Path(p)) for p in args.recording],
        "config_hash": cfgmod.config_hash(cfg),
        "version": _package_version(),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"trained {len(dictionary)}-word dictionary at {dict_path}")
    return 0


def _package_version() -> str:
    from .. import __version__

    return __version__
