"""Acceptance suite: the package's end-to-end guarantees.

One test per shipped claim, each printing a single pass/fail line so the run
log doubles as a checklist. The heavyweight ingredients (the training
recording, dictionaries, closed-loop suites) are session-scoped fixtures
shared across tests; everything derives from fixed seeds, so the suite is
reproducible.

These are slow by design. The unit test files cover the same modules at
finer grain; this file checks the assembled system.
"""
import time

import numpy as np
import pytest

from clothservo.cli import main as cli_main
from clothservo.cli.record import record_trajectory
from clothservo.cli.train import load_recording
from clothservo.dictionary import build_dictionary, sample_pairs
from clothservo.errors import SimulationDivergedError
from clothservo.features import FeatureLayout, FeatureSet, how_features
from clothservo.imaging import GaborParams, Image, Kernel, Mask, convolve, quantize, segment_foreground
from clothservo.scene import (
    crumpled_start,
    default_background,
    default_camera,
    default_sim_params,
    flat_state,
    hold_disturbance,
    hold_start,
    subject_variant,
)
from clothservo.servo import GoalSpec, ServoConfig, run_servo
from clothservo.sparse import (
    SparseSolverConfig,
    deactivation_threshold,
    kkt_violation,
    reconstruct,
    solve,
)

from oracles import conv_oracle, how_oracle, lasso_bruteforce, lasso_objective

# the reference closed-loop setup: one fixed 300-frame scripted recording,
# a 64-word dictionary condensed from 8000 sampled pairs, and the published
# solver/servo settings
RECORD_SEED = 102
RECORD_FRAMES = 300
PAIR_SEED = 7
N_PAIRS = 8000
N_WORDS = 64
FEATURE_KIND = "how"
SERVO_ALPHA = 0.1
SERVO_GAIN = 0.5
FLATTEN_SEEDS = tuple(range(10))
FRAME_RATE = 30.0


def emit(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# --- shared heavyweight fixtures ---


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def rec_dir(workdir):
    """The training recording, rendered once and replayed per feature set."""
    out = workdir / "recording"
    record_trajectory(
        out, RECORD_SEED, RECORD_FRAMES, "flatten",
        default_sim_params(), default_camera(), FRAME_RATE,
    )
    return out


def _feature_set(kind):
    return FeatureSet(kind=kind, image_dims=(64, 64))


def _load(rec_dir, kind):
    return load_recording(rec_dir, _feature_set(kind), default_background(), FRAME_RATE)


@pytest.fixture(scope="session")
def recording(rec_dir):
    return _load(rec_dir, FEATURE_KIND)


@pytest.fixture(scope="session")
def dictionary(recording):
    fs = _feature_set(FEATURE_KIND)
    return build_dictionary(
        recording, n_words=N_WORDS, n_pairs=N_PAIRS,
        rng=np.random.default_rng(PAIR_SEED), feature_config=fs.to_config(),
        seed=RECORD_SEED, sources=("acceptance",),
    )


def _goal_features(fs):
    state, _ = flat_state()
    image = quantize(state_render(state))
    return fs.extract(image, segment_foreground(image, default_background()))


def state_render(state):
    from clothservo.clothsim import render

    return render(state, default_camera())


def _servo_config(**overrides):
    base = dict(
        gain=SERVO_GAIN, alpha=SERVO_ALPHA, max_speed=0.1, max_steps=400,
        stop_epsilon=0.2,
    )
    base.update(overrides)
    return ServoConfig(**base)


def _flatten_suite(dic, kind):
    """Run the 10-seed flattening suite; one record per seed."""
    fs = _feature_set(kind)
    goal = GoalSpec(features=_goal_features(fs), label="flat")
    params = default_sim_params()
    camera = default_camera()
    background = default_background()
    cfg = _servo_config()
    rows = []
    for seed in FLATTEN_SEEDS:
        start, _ = crumpled_start(seed, params)
        t0 = time.monotonic()
        diverged = False
        try:
            trace = run_servo(start, [goal], dic, fs, background, camera, params, cfg)
        except SimulationDivergedError as err:
            trace = err.trace
            diverged = True
        wall = time.monotonic() - t0
        ratio = trace.final_error / trace.initial_error if trace.initial_error else 1.0
        rows.append(
            {
                "seed": seed,
                "ratio": ratio,
                "steps": trace.steps,
                "wall": wall,
                "converged": trace.converged and not diverged,
                "diverged": diverged,
            }
        )
    return rows


@pytest.fixture(scope="session")
def flatten_rows(dictionary):
    return _flatten_suite(dictionary, FEATURE_KIND)


# --- criterion 1: convolution against a quadruple-loop reference ---


def test_criterion_1_convolution_oracle(capsys):
    rng = np.random.default_rng(11)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(50):
        h = int(rng.integers(10, 21))
        w = int(rng.integers(10, 21))
        size = int(rng.choice([3, 5, 7, 9]))
        img = rng.uniform(-1.0, 1.0, size=(h, w))
        weights = rng.uniform(-1.0, 1.0, size=(size, size))
        got = convolve(Image(img), Kernel(weights)).data
        want = conv_oracle(img, weights)
        worst = max(worst, float(np.max(np.abs(got - want))))
    elapsed = time.monotonic() - t0
    ok = worst < 1e-9 and elapsed < 10.0
    emit(capsys, 1, ok, f"50 instances, max |diff| {worst:.2e}, {elapsed:.1f}s (< 10s)")


# --- criterion 2: wrinkle histograms against a straight-line reference ---


def test_criterion_2_feature_oracle(capsys):
    rng = np.random.default_rng(12)
    bank = (
        GaborParams(wavelength=3.0, orientation=0.3, sigma=1.2, aspect=0.6, support_radius=3),
        GaborParams(wavelength=5.0, orientation=1.4, phase=0.4, sigma=1.6, aspect=0.5, support_radius=4),
        GaborParams(wavelength=4.0, orientation=2.2, sigma=1.0, aspect=0.8, support_radius=3),
    )
    layout = FeatureLayout(filter_bank=bank, grid_sizes=(4, 7), image_dims=(18, 16))
    oracle_bank = [
        (p.wavelength, p.orientation, p.phase, p.sigma, p.aspect, p.support_radius)
        for p in bank
    ]
    t0 = time.monotonic()
    worst = 0.0
    for i in range(20):
        if i % 2 == 0:
            img = rng.uniform(0.0, 1.0, size=(16, 18))
        else:
            img = rng.uniform(0.0, 1.0, size=(16, 18, 3))
        mask = rng.uniform(size=(16, 18)) < 0.7
        got = how_features(Image.from_unit(img), Mask(mask), layout).values
        want = how_oracle(img, mask, oracle_bank, layout.grid_sizes)
        worst = max(worst, float(np.max(np.abs(got - want))))
    elapsed = time.monotonic() - t0
    ok = worst < 1e-9 and elapsed < 10.0
    emit(capsys, 2, ok, f"20 images, max |diff| {worst:.2e}, {elapsed:.1f}s (< 10s)")


# --- criterion 3: solver certificates ---


def test_criterion_3_sparse_certificates(capsys):
    rng = np.random.default_rng(13)
    t0 = time.monotonic()
    worst_kkt = 0.0
    solved = 0
    for _ in range(100):
        k = int(rng.integers(2, 65))
        d = int(rng.integers(4, 257))
        atoms = rng.normal(size=(k, d))
        query = rng.normal(size=d) * float(rng.uniform(0.5, 3.0))
        alpha = float(10.0 ** rng.uniform(-3, 0))
        code = solve(atoms, query, SparseSolverConfig(alpha=alpha))
        viol = kkt_violation(atoms, query, code.coefficients, alpha)
        worst_kkt = max(worst_kkt, viol)
        solved += int(viol <= 1e-6)
    worst_gap = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 6))
        d = int(rng.integers(2, 9))
        atoms = rng.normal(size=(k, d))
        query = rng.normal(size=d)
        alpha = float(10.0 ** rng.uniform(-2, 0.5))
        code = solve(atoms, query, SparseSolverConfig(alpha=alpha))
        got = lasso_objective(atoms, query, alpha, code.coefficients)
        _, best = lasso_bruteforce(atoms, query, alpha)
        worst_gap = max(worst_gap, got - best)
    elapsed = time.monotonic() - t0
    ok = solved == 100 and worst_gap <= 1e-6 and elapsed < 30.0
    emit(
        capsys, 3, ok,
        f"KKT {solved}/100 at 1e-6 (worst {worst_kkt:.2e}), "
        f"brute-force gap {worst_gap:.2e}, {elapsed:.1f}s (< 30s)",
    )


# --- criterion 4: closed-loop flattening suite ---


def test_criterion_4_flattening(capsys, flatten_rows):
    hits = sum(
        1
        for row in flatten_rows
        if row["ratio"] <= 0.20 and row["steps"] <= 400 and row["wall"] <= 120.0
    )
    detail = ", ".join(
        f"s{row['seed']}={row['ratio']:.2f}/{row['steps']}st/{row['wall']:.0f}s"
        for row in flatten_rows
    )
    ok = hits >= 8
    emit(capsys, 4, ok, f"{hits}/10 runs at ratio <= 0.20 within budgets ({detail})")


# --- criterion 5: perturbed hold ---


def test_criterion_5_perturbed_hold(capsys, dictionary):
    fs = _feature_set(FEATURE_KIND)
    goal = [GoalSpec(features=_goal_features(fs), label="hold")]
    params = default_sim_params()
    camera = default_camera()
    background = default_background()
    base_cfg = _servo_config(stop_epsilon=0.0, stop_epsilon_absolute=True, max_steps=200)
    pert_cfg = _servo_config(stop_epsilon=0.0, stop_epsilon_absolute=True, max_steps=300)
    passed = 0
    details = []
    for seed in FLATTEN_SEEDS:
        start, _ = hold_start(seed, params)
        base = run_servo(start, goal, dictionary, fs, background, camera, params, base_cfg)
        reference = float(np.mean(base.error_curve()[-80:]))
        script = hold_disturbance(seed)
        try:
            held = run_servo(
                start, goal, dictionary, fs, background, camera, params, pert_cfg,
                perturbation=script,
            )
            errors = held.error_curve()
            hit = bool(np.all(errors < 3.0 * reference)) and held.steps >= 300
        except SimulationDivergedError:
            hit = False
            errors = np.array([np.inf])
        passed += int(hit)
        details.append(f"s{seed}={'ok' if hit else f'{float(np.max(errors)) / reference:.1f}x'}")
    ok = passed >= 8
    emit(capsys, 5, ok, f"{passed}/10 holds under 3x steady state for 300 steps ({', '.join(details)})")


# --- criteria 6 and 7 share the held-out pair pool ---


@pytest.fixture(scope="session")
def holdout_pool(recording):
    rng = np.random.default_rng(PAIR_SEED + 1)
    ds, dr = sample_pairs(recording, N_PAIRS + 400, rng)
    return (ds[:N_PAIRS], dr[:N_PAIRS]), (ds[N_PAIRS:], dr[N_PAIRS:])


def _mean_velocity_error(dic, queries, truths, alpha):
    cfg = SparseSolverConfig(alpha=alpha)
    total = 0.0
    for q, t in zip(queries, truths):
        code = solve(dic.delta_s, q, cfg)
        total += float(np.linalg.norm(reconstruct(code, dic.delta_r) - t))
    return total / len(queries)


def test_criterion_6_dictionary_size_trend(capsys, recording, holdout_pool):
    train, (test_s, test_r) = holdout_pool
    fs = _feature_set(FEATURE_KIND)
    dics = {}
    for n in (8, 128):
        dics[n] = build_dictionary(
            recording, n_words=n, n_pairs=N_PAIRS,
            rng=np.random.default_rng(PAIR_SEED + 2),
            feature_config=fs.to_config(), pairs=train,
        )
    rows = []
    ok = True
    for alpha in (0.01, 0.1, 1.0):
        small = _mean_velocity_error(dics[8], test_s, test_r, alpha)
        large = _mean_velocity_error(dics[128], test_s, test_r, alpha)
        rows.append(f"alpha={alpha:g}: 128w {large:.4f} vs 8w {small:.4f}")
        ok = ok and large <= small
    emit(capsys, 6, ok, "; ".join(rows))


def test_criterion_7_alpha_sweep(capsys, dictionary, holdout_pool):
    _, (test_s, _) = holdout_pool
    queries = test_s[:10]
    alphas = (0.001, 0.01, 0.1, 1.0, 10.0)
    monotone = True
    for q in queries:
        l1s = []
        for alpha in alphas:
            code = solve(dictionary.delta_s, q, SparseSolverConfig(alpha=alpha))
            l1s.append(code.l1_norm)
        if any(b > a + 1e-9 for a, b in zip(l1s, l1s[1:])):
            monotone = False
    dead_exact = True
    for q in queries:
        bound = deactivation_threshold(dictionary.delta_s, q)
        code = solve(dictionary.delta_s, q, SparseSolverConfig(alpha=bound * 1.0001))
        if np.any(code.coefficients != 0.0):
            dead_exact = False
    ok = monotone and dead_exact
    emit(
        capsys, 7, ok,
        f"|beta|_1 non-increasing on {len(queries)} queries: {monotone}; "
        f"exact zero above deactivation threshold: {dead_exact}",
    )


# --- criterion 8: feature-set ordering on the flattening task ---


def test_criterion_8_feature_ordering(capsys, rec_dir, flatten_rows):
    rate_main = sum(r["converged"] for r in flatten_rows) / len(flatten_rows)
    fs_color = _feature_set("color")
    rec_color = _load(rec_dir, "color")
    dic_color = build_dictionary(
        rec_color, n_words=N_WORDS, n_pairs=N_PAIRS,
        rng=np.random.default_rng(PAIR_SEED), feature_config=fs_color.to_config(),
    )
    color_rows = _flatten_suite(dic_color, "color")
    rate_color = sum(r["converged"] for r in color_rows) / len(color_rows)
    ok = rate_main >= rate_color
    emit(
        capsys, 8, ok,
        f"wrinkle features {rate_main:.1f} vs color histograms {rate_color:.1f} success",
    )


# --- criterion 9: same- vs different-subject prediction ---


def test_criterion_9_subject_transfer(capsys, workdir, dictionary, holdout_pool):
    _, (same_s, same_r) = holdout_pool
    params_b, camera_b = subject_variant(default_sim_params(), default_camera())
    other_dir = workdir / "subject2"
    record_trajectory(
        other_dir, RECORD_SEED + 101, RECORD_FRAMES, "flatten",
        params_b, camera_b, FRAME_RATE,
    )
    fs = _feature_set(FEATURE_KIND)
    rec_b = load_recording(other_dir, fs, default_background(), FRAME_RATE)
    diff_s, diff_r = sample_pairs(rec_b, 400, np.random.default_rng(PAIR_SEED + 3))
    same_err = _mean_velocity_error(dictionary, same_s, same_r, SERVO_ALPHA)
    diff_err = _mean_velocity_error(dictionary, diff_s, diff_r, SERVO_ALPHA)
    ok = diff_err <= 2.0 * same_err
    emit(
        capsys, 9, ok,
        f"different-subject {diff_err:.4f} <= 2x same-subject {same_err:.4f}",
    )


# --- criterion 10: byte-identical reruns ---


def test_criterion_10_determinism(capsys, workdir, dictionary):
    dict_path = workdir / "dictionary.json"
    if not dict_path.exists():
        dictionary.save(dict_path)
    outputs = []
    for tag in ("first", "second"):
        out = workdir / f"rerun_{tag}"
        rc = cli_main(
            ["--seed", "0", "--out", str(out), "servo", "--task", "flatten",
             "--dictionary", str(dict_path)]
        )
        assert rc in (0, 1)
        outputs.append(out)
    trace_same = (outputs[0] / "trace.jsonl").read_bytes() == (outputs[1] / "trace.jsonl").read_bytes()
    report_same = (outputs[0] / "report.json").read_bytes() == (outputs[1] / "report.json").read_bytes()
    ok = trace_same and report_same
    emit(capsys, 10, ok, f"trace bytes equal: {trace_same}, report bytes equal: {report_same}")
