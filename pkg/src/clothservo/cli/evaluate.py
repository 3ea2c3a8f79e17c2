"""The ``eval`` subcommand: benchmark studies with tables and figures.

Five studies, each writing delimited tables plus a rendered figure under
``--out``:

* ``size-alpha``: held-out velocity reconstruction error across dictionary
  sizes and sparsity levels.
* ``subjects``: the same dictionary scored on held-out pairs from its own
  recording and on a recording of a stiffer cloth seen from a nudged camera.
* ``features``: flattening success rates for wrinkle-sensitive features
  against plain color histograms.
* ``flatten``: the seeded flattening suite at default settings.
* ``hold``: perturbed holds scored against each seed's unperturbed settling
  error.

Everything is derived from the master seed and the config, so a rerun with
the same inputs reproduces every table byte for byte. Heavy intermediates
(recordings, dictionaries) are cached under ``<out>/work`` keyed by their
parameters.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..dictionary import FeedbackDictionary, Recording, build_dictionary, sample_pairs
from ..scene import crumpled_start, flat_state, hold_disturbance, hold_start, subject_variant
from ..servo import GoalSpec, run_servo
from ..sparse import SparseSolverConfig, reconstruct, solve
from ..errors import SimulationDivergedError
from .config import (
    build_background,
    build_camera,
    build_feature_set,
    build_servo_config,
    build_sim_params,
    config_hash,
)
from .record import record_trajectory
from .train import load_recording
from . import plots

STUDIES = ("size-alpha", "subjects", "features", "flatten", "hold")


@dataclass
class EvalContext:
    cfg: dict
    seed: int
    out: Path
    work: Path
    params: object
    camera: object
    background: object
    feature_set: object
    frame_rate: float


def make_context(args, cfg) -> EvalContext:
    out = Path(args.out)
    work = out / "work"
    work.mkdir(parents=True, exist_ok=True)
    return EvalContext(
        cfg=cfg,
        seed=args.seed,
        out=out,
        work=work,
        params=build_sim_params(cfg),
        camera=build_camera(cfg),
        background=build_background(cfg),
        feature_set=build_feature_set(cfg),
        frame_rate=cfg["record"]["frame_rate"],
    )


def ensure_recording(
    ctx: EvalContext,
    seed: int,
    tag: str,
    feature_set=None,
    params=None,
    camera=None,
) -> Recording:
    """Record once per (tag, seed), then replay through the feature extractor."""
    frames = ctx.cfg["record"]["frames"]
    style = ctx.cfg["record"]["style"]
    rec_dir = ctx.work / f"rec_{tag}_{seed}"
    if not (rec_dir / "recording.jsonl").exists():
        record_trajectory(
            rec_dir, seed, frames, style,
            params or ctx.params, camera or ctx.camera, ctx.frame_rate,
        )
    return load_recording(
        rec_dir, feature_set or ctx.feature_set, ctx.background, ctx.frame_rate
    )


def ensure_dictionary(
    ctx: EvalContext,
    recording: Recording,
    tag: str,
    n_words=None,
    n_pairs=None,
    feature_set=None,
    pairs=None,
) -> FeedbackDictionary:
    n_words = n_words if n_words is not None else ctx.cfg["dictionary"]["n_dic"]
    n_pairs = n_pairs if n_pairs is not None else ctx.cfg["dictionary"]["n_pairs"]
    fs = feature_set or ctx.feature_set
    path = ctx.work / f"dict_{tag}_{n_words}_{n_pairs}.json"
    if path.exists():
        return FeedbackDictionary.load(path)
    d = build_dictionary(
        recording,
        n_words=n_words,
        n_pairs=n_pairs,
        rng=np.random.default_rng(ctx.seed + 1),
        feature_config=fs.to_config(),
        seed=ctx.seed,
        sources=(tag,),
        pairs=pairs,
    )
    d.save(path)
    return d


def velocity_error(dictionary: FeedbackDictionary, delta_s, delta_r, alpha: float) -> float:
    """Mean Euclidean gap between held-out gripper velocities and the
    dictionary's sparse reconstruction of them."""
    cfg = SparseSolverConfig(alpha=alpha)
    total = 0.0
    for query, truth in zip(delta_s, delta_r):
        code = solve(dictionary.delta_s, query, cfg)
        predicted = reconstruct(code, dictionary.delta_r)
        total += float(np.linalg.norm(predicted - truth))
    return total / len(delta_s)


def _predicted_norms(dictionary, delta_s, delta_r, alpha):
    cfg = SparseSolverConfig(alpha=alpha)
    rows = []
    for query, truth in zip(delta_s, delta_r):
        code = solve(dictionary.delta_s, query, cfg)
        predicted = reconstruct(code, dictionary.delta_r)
        rows.append(
            (
                float(np.linalg.norm(truth)),
                float(np.linalg.norm(predicted)),
                float(np.linalg.norm(predicted - truth)),
            )
        )
    return rows


def _goal_features(ctx: EvalContext, feature_set=None):
    from ..clothsim import render
    from ..imaging import quantize, segment_foreground

    fs = feature_set or ctx.feature_set
    state, _ = flat_state(ctx.params)
    image = quantize(render(state, ctx.camera))
    return fs.extract(image, segment_foreground(image, ctx.background))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def study_size_alpha(ctx: EvalContext):
    """Held-out velocity error across (dictionary size, alpha)."""
    rec = ensure_recording(ctx, ctx.seed, "train")
    n_pairs = ctx.cfg["dictionary"]["n_pairs"]
    holdout = ctx.cfg["eval"]["holdout_pairs"]
    rng = np.random.default_rng(ctx.seed + 2)
    ds_all, dr_all = sample_pairs(rec, n_pairs + holdout, rng)
    train = (ds_all[:n_pairs], dr_all[:n_pairs])
    test_s, test_r = ds_all[n_pairs:], dr_all[n_pairs:]

    rows = []
    for n_dic in ctx.cfg["eval"]["n_dic_sweep"]:
        d = ensure_dictionary(ctx, rec, "sweep", n_words=n_dic, pairs=train)
        for alpha in ctx.cfg["eval"]["alpha_sweep"]:
            err = velocity_error(d, test_s, test_r, alpha)
            rows.append((n_dic, alpha, err))
    _write_csv(ctx.out / "velocity_error.csv", ("n_dic", "alpha", "velocity_error"), rows)
    plots.save_sweep_lines(
        ctx.out / "dictionary_size_sweep.png", rows, title="held-out velocity error"
    )
    return rows


def study_subjects(ctx: EvalContext):
    """Same-subject vs different-subject velocity prediction."""
    rec_a = ensure_recording(ctx, ctx.seed, "train")
    params_b, camera_b = subject_variant(ctx.params, ctx.camera)
    rec_b = ensure_recording(
        ctx, ctx.seed + 101, "subject2", params=params_b, camera=camera_b
    )

    n_pairs = ctx.cfg["dictionary"]["n_pairs"]
    holdout = ctx.cfg["eval"]["holdout_pairs"]
    rng = np.random.default_rng(ctx.seed + 3)
    ds_a, dr_a = sample_pairs(rec_a, 2 * holdout, rng)
    # a 50/50 split of the sampled pairs: even indices train the dictionary's
    # sample pool, odd ones are scored
    train_pairs = (ds_a[0::2], dr_a[0::2])
    same_s, same_r = ds_a[1::2], dr_a[1::2]
    diff_s, diff_r = sample_pairs(rec_b, holdout, np.random.default_rng(ctx.seed + 4))

    d = ensure_dictionary(ctx, rec_a, "subjects", n_pairs=holdout, pairs=train_pairs)
    alpha = ctx.cfg["servo"]["alpha"]
    groups = {}
    summary_rows = []
    pair_rows = []
    for label, qs, qr in (("same", same_s, same_r), ("different", diff_s, diff_r)):
        norms = _predicted_norms(d, qs, qr, alpha)
        groups[label] = (
            np.array([row[0] for row in norms]),
            np.array([row[1] for row in norms]),
        )
        mean_err = float(np.mean([row[2] for row in norms]))
        summary_rows.append((label, len(norms), mean_err))
        pair_rows.extend(
            (label, idx, actual, predicted, err)
            for idx, (actual, predicted, err) in enumerate(norms)
        )
    _write_csv(
        ctx.out / "subject_pairs.csv",
        ("split", "pair", "actual_speed", "predicted_speed", "velocity_error"),
        pair_rows,
    )
    _write_csv(
        ctx.out / "subject_summary.csv",
        ("split", "pairs", "mean_velocity_error"),
        summary_rows,
    )
    plots.save_pred_scatter(
        ctx.out / "subject_scatter.png", groups, title="velocity prediction by subject"
    )
    return {label: err for label, _, err in summary_rows}


def _flatten_once(ctx: EvalContext, dictionary, feature_set, goal, seed: int, servo_cfg):
    start, _ = crumpled_start(seed, ctx.params)
    try:
        trace = run_servo(
            start, [GoalSpec(features=goal, label="flat")], dictionary,
            feature_set, ctx.background, ctx.camera, ctx.params, servo_cfg,
        )
    except SimulationDivergedError as err:
        return err.trace, True
    return trace, False


def study_features(ctx: EvalContext):
    """Flattening success by feature family."""
    rec_dir_seed = ctx.seed
    seeds = ctx.cfg["eval"]["seeds"]
    servo_cfg = build_servo_config(ctx.cfg)
    rows = []
    rates = {}
    for kind in ctx.cfg["eval"]["feature_kinds"]:
        fs = build_feature_set(ctx.cfg, kind=kind)
        rec = ensure_recording(ctx, rec_dir_seed, "train", feature_set=fs)
        d = ensure_dictionary(ctx, rec, f"feat_{kind.replace('+', '_')}", feature_set=fs)
        goal = _goal_features(ctx, feature_set=fs)
        hits = 0
        for seed in seeds:
            trace, diverged = _flatten_once(ctx, d, fs, goal, seed, servo_cfg)
            success = trace.converged and not diverged
            hits += int(success)
            ratio = trace.final_error / trace.initial_error if trace.initial_error else 0.0
            rows.append(
                (kind, seed, trace.initial_error, trace.final_error, ratio,
                 trace.steps, trace.stop_reason if not diverged else "diverged",
                 int(success))
            )
        rates[kind] = hits / len(seeds)
    _write_csv(
        ctx.out / "feature_success.csv",
        ("features", "seed", "initial_error", "final_error", "ratio", "steps",
         "stop_reason", "success"),
        rows,
    )
    _write_csv(
        ctx.out / "feature_success_summary.csv",
        ("features", "success_rate"),
        sorted(rates.items()),
    )
    plots.save_success_bars(
        ctx.out / "feature_success.png", rates, title="flattening success by features"
    )
    return rates


def study_flatten(ctx: EvalContext):
    """The seeded flattening suite at default settings."""
    rec = ensure_recording(ctx, ctx.seed, "train")
    d = ensure_dictionary(ctx, rec, "default")
    goal = _goal_features(ctx)
    servo_cfg = build_servo_config(ctx.cfg)
    rows = []
    curves = {}
    for seed in ctx.cfg["eval"]["seeds"]:
        trace, diverged = _flatten_once(ctx, d, ctx.feature_set, goal, seed, servo_cfg)
        success = trace.converged and not diverged
        ratio = trace.final_error / trace.initial_error if trace.initial_error else 0.0
        rows.append(
            (seed, trace.initial_error, trace.final_error, ratio, trace.steps,
             trace.stop_reason if not diverged else "diverged", int(success))
        )
        curves[f"seed {seed}"] = trace.error_curve()
    _write_csv(
        ctx.out / "flatten_suite.csv",
        ("seed", "initial_error", "final_error", "ratio", "steps", "stop_reason", "success"),
        rows,
    )
    plots.save_error_curve(
        ctx.out / "flatten_curves.png", curves, title="flattening suite",
        threshold=servo_cfg.stop_epsilon,
    )
    return rows


def study_hold(ctx: EvalContext):
    """Perturbed holds against each seed's unperturbed settling error.

    The reference for a seed is the mean error over the last 80 steps of an
    unperturbed 200-step hold from the same start; the perturbed run passes
    if its error stays under three times that for the whole schedule.
    """
    rec = ensure_recording(ctx, ctx.seed, "train")
    d = ensure_dictionary(ctx, rec, "default")
    goal = _goal_features(ctx)
    base_cfg = replace(
        build_servo_config(ctx.cfg),
        stop_epsilon=0.0, stop_epsilon_absolute=True, max_steps=200,
    )
    pert_cfg = replace(base_cfg, max_steps=300)
    rows = []
    curves = {}
    for seed in ctx.cfg["eval"]["seeds"]:
        start, _ = hold_start(seed, ctx.params)
        goal_spec = [GoalSpec(features=goal, label="hold")]
        base = run_servo(
            start, goal_spec, d, ctx.feature_set, ctx.background, ctx.camera,
            ctx.params, base_cfg,
        )
        reference = float(np.mean(base.error_curve()[-80:]))
        script = hold_disturbance(seed)
        diverged = False
        try:
            held = run_servo(
                start, goal_spec, d, ctx.feature_set, ctx.background, ctx.camera,
                ctx.params, pert_cfg, perturbation=script,
            )
        except SimulationDivergedError as err:
            held = err.trace
            diverged = True
        errors = held.error_curve()
        bound = 3.0 * reference
        passed = (not diverged) and bool(np.all(errors < bound))
        rows.append(
            (seed, reference, bound, float(np.max(errors)), float(np.mean(errors)),
             held.steps, int(passed))
        )
        curves[f"seed {seed}"] = errors
    _write_csv(
        ctx.out / "hold_suite.csv",
        ("seed", "reference_error", "bound", "max_error", "mean_error", "steps", "passed"),
        rows,
    )
    plots.save_error_curve(ctx.out / "hold_curves.png", curves, title="perturbed holds")
    return rows


_STUDY_FUNCS = {
    "size-alpha": study_size_alpha,
    "subjects": study_subjects,
    "features": study_features,
    "flatten": study_flatten,
    "hold": study_hold,
}


def run(args, cfg) -> int:
    ctx = make_context(args, cfg)
    wanted = args.study or ["all"]
    if "all" in wanted:
        wanted = list(STUDIES)
    meta = {
        "command": "eval",
        "seed": ctx.seed,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "studies": wanted,
        "version": _package_version(),
    }
    with open(ctx.out / "eval_config.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in STUDIES:
        if name not in wanted:
            continue
        print(f"eval: running {name}")
        _STUDY_FUNCS[name](ctx)
    print(f"eval: wrote tables and figures to {ctx.out}")
    return 0


def _package_version() -> str:
    from .. import __version__

    return __version__
