"""Reference tabletop scene: a square cloth on a ground plane, two grippers
holding the near corners, a camera looking down.

All the task setups live here: seeded crumpled starts for flattening, a
translated goal for placement, staged goals for folding, and scripted
disturbances for holding a configuration. The CLI and the evaluation suite
build everything through these helpers so runs differ only by seed.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .clothsim import (
    CameraModel,
    ClothState,
    GripperConfig,
    Perturbation,
    PerturbationScript,
    SimParams,
    kinetic_energy,
    step,
)
from .errors import ParameterError
from .features import FeatureSet
from .imaging import FlatBackground

CLOTH_WIDTH = 0.3
GRID_ROWS = 17
GRID_COLS = 17
REST_HEIGHT = 0.002
BACKGROUND_COLOR = (0.08, 0.08, 0.10)


def default_sim_params() -> SimParams:
    # mass and stiffness sized so the stiffest grid mode stays well inside
    # the stability region of the default 1/300 s substep; damping high
    # enough that the cloth tracks the grippers near-statically, which keeps
    # recorded frame pairs consistent functions of the configuration
    return SimParams(
        stiffness_structural=60.0,
        stiffness_shear=30.0,
        stiffness_bend=0.6,
        damping=8.0,
        node_mass=0.004,
        ground_height=0.0,
    )


def default_camera(image_dims=(64, 64)) -> CameraModel:
    return CameraModel(
        eye=(0.0, 0.6, 0.0),
        look_at=(0.0, 0.0, 0.0),
        up=(0.0, 0.0, -1.0),
        fov=0.7,
        image_dims=image_dims,
        light_dir=(0.25, 1.0, 0.35),
        background_color=BACKGROUND_COLOR,
        cloth_color=(0.85, 0.35, 0.25),
    )


def default_background() -> FlatBackground:
    return FlatBackground(color=BACKGROUND_COLOR, tolerance=0.05)


def default_feature_set(image_dims=(64, 64)) -> FeatureSet:
    return FeatureSet(kind="how", image_dims=image_dims)


def tabletop_cloth(
    rows: int = GRID_ROWS,
    cols: int = GRID_COLS,
    width: float = CLOTH_WIDTH,
    rest_height: float = REST_HEIGHT,
):
    """Cloth lying in the x-z plane, centered on the origin, near corners
    (low z) pinned to grippers 0 and 1."""
    spacing = width / (cols - 1)
    jj, ii = np.meshgrid(np.arange(cols, dtype=np.float64), np.arange(rows, dtype=np.float64))
    pos = np.stack(
        [
            -width / 2.0 + jj * spacing,
            np.full_like(jj, rest_height),
            -width / 2.0 + ii * spacing,
        ],
        axis=2,
    )
    pinned = {(0, 0): 0, (0, cols - 1): 1}
    state = ClothState(
        positions=pos,
        velocities=np.zeros_like(pos),
        pinned=pinned,
        spacing=spacing,
    )
    grippers = GripperConfig(np.array([pos[0, 0], pos[0, cols - 1]]))
    return state, grippers


def settle(
    state: ClothState,
    grippers: GripperConfig,
    params: SimParams,
    max_frames: int = 200,
    ke_threshold: float = 1e-7,
) -> ClothState:
    """Step with fixed gripper targets until the cloth stops moving."""
    for _ in range(max_frames):
        state = step(state, grippers, params)
        if kinetic_energy(state, params) < ke_threshold:
            break
    return state


def drive_to(
    state: ClothState,
    target: GripperConfig,
    params: SimParams,
    frames: int,
) -> ClothState:
    """Hold the target for a fixed number of frames; the speed clamp turns
    the jump into a steady approach."""
    for _ in range(frames):
        state = step(state, target, params)
    return state


def flat_state(params: SimParams | None = None):
    """The taut resting configuration; the goal for flattening and holding."""
    params = params or default_sim_params()
    state, grippers = tabletop_cloth()
    return settle(state, grippers, params, max_frames=120), grippers


def crumpled_start(seed: int, params: SimParams | None = None):
    """A seeded wrinkled configuration.

    The grippers push inward and slightly up while the interior gets a small
    seeded lift, so the compressed cloth buckles out of plane instead of
    densifying flat; lowering the grippers back to the table and settling
    leaves ridges held in place by the shortened span.
    """
    params = params or default_sim_params()
    rng = np.random.default_rng(seed)
    state, grippers = tabletop_cloth()
    state = settle(state, grippers, params, max_frames=120)

    lift = rng.uniform(0.0, 0.012, size=(state.rows, state.cols))
    lift[0, :] = 0.0  # leave the pinned edge row alone
    pos = state.positions.copy()
    pos[:, :, 1] += lift
    state = replace(state, positions=pos)

    base = grippers.points
    inward = np.array(
        [
            [rng.uniform(0.03, 0.08), rng.uniform(0.02, 0.05), rng.uniform(0.02, 0.07)],
            [-rng.uniform(0.03, 0.08), rng.uniform(0.02, 0.05), rng.uniform(0.02, 0.07)],
        ]
    )
    raised = GripperConfig(base + inward)
    state = drive_to(state, raised, params, frames=45)
    lowered = GripperConfig(
        np.column_stack([raised.points[:, 0], np.full(2, REST_HEIGHT), raised.points[:, 2]])
    )
    state = drive_to(state, lowered, params, frames=35)
    state = settle(state, lowered, params, max_frames=80)
    return state, lowered


def hold_start(seed: int, params: SimParams | None = None, offset_scale: float = 0.008):
    """An arrived-at-goal state for holding tasks: the flat configuration
    with a seeded residual gripper offset about the size of the loop's
    terminal precision, so the unperturbed loop still has a little work to
    do and its settling error is a measurable reference."""
    params = params or default_sim_params()
    rng = np.random.default_rng(seed)
    state, grippers = flat_state(params)
    delta = rng.uniform(-offset_scale, offset_scale, size=grippers.points.shape)
    delta[:, 1] = np.abs(delta[:, 1]) * 0.5  # keep the grippers above the table
    moved = GripperConfig(grippers.points + delta)
    state = drive_to(state, moved, params, frames=20)
    state = settle(state, moved, params, max_frames=60)
    return state, moved


def translated_goal(offset, params: SimParams | None = None):
    """The flat cloth moved rigidly by ``offset``; the placement target."""
    params = params or default_sim_params()
    state, grippers = flat_state(params)
    shift = np.asarray(offset, dtype=np.float64)
    pos = state.positions + shift[None, None, :]
    moved = ClothState(
        positions=pos,
        velocities=np.zeros_like(pos),
        pinned=dict(state.pinned),
        spacing=state.spacing,
    )
    moved_grippers = GripperConfig(grippers.points + shift[None, :])
    return settle(moved, moved_grippers, params, max_frames=60), moved_grippers


def fold_stages(params: SimParams | None = None):
    """Two staged configurations for a corner-led fold: the held edge lifted
    and carried halfway, then laid down near the far edge. Returns
    [(state, grippers), (state, grippers)] in task order."""
    params = params or default_sim_params()
    state, grippers = flat_state(params)
    base = grippers.points

    mid = base + np.array([[0.0, 0.09, 0.13], [0.0, 0.09, 0.13]])
    state_mid = drive_to(state, GripperConfig(mid), params, frames=60)
    state_mid = settle(state_mid, GripperConfig(mid), params, max_frames=50)

    down = base + np.array([[0.0, 0.015, 0.26], [0.0, 0.015, 0.26]])
    state_down = drive_to(state_mid, GripperConfig(down), params, frames=60)
    state_down = settle(state_down, GripperConfig(down), params, max_frames=50)
    return [(state_mid, GripperConfig(mid)), (state_down, GripperConfig(down))]


def hold_disturbance(seed: int, amplitude: float = 0.025) -> PerturbationScript:
    """A seeded sinusoidal tug just beside one grasped corner.

    The displaced vertex neighbors a pinned one, so the disturbance rocks the
    cloth near a grip point every frame and the loop has to keep leaning
    against it.
    """
    rng = np.random.default_rng(seed)
    corner_col = 0 if rng.integers(0, 2) == 0 else GRID_COLS - 1
    vertex = (1, corner_col) if rng.integers(0, 2) == 0 else (0, abs(corner_col - 1))
    direction = rng.normal(size=3)
    direction[1] = abs(direction[1])  # shake away from the table, never into it
    direction /= np.linalg.norm(direction)
    sway = Perturbation(
        vertex=vertex,
        offset=tuple(direction * amplitude),
        kind="sinusoid",
        frequency=float(rng.uniform(0.015, 0.035)),
        phase=float(rng.uniform(0.0, 2.0 * math.pi)),
    )
    return PerturbationScript(entries=(sway,))


def training_targets(
    seed: int,
    n_frames: int,
    base: GripperConfig,
    style: str = "flatten",
) -> list:
    """Per-frame gripper target vectors for a training recording.

    The grippers wander between waypoints that always keep the held edge at
    or beyond its rest separation. Taut cloth tracks the grippers as a
    near-unique function of their placement, so a feature difference between
    any two recorded frames is actually explained by the gripper motion
    between them; wrinkled intermediate states would break that and teach
    words whose appearance change has nothing to do with their motion. The
    ``"flatten"`` style stays on the table; ``"full"`` adds taut lifts and
    advances for tasks that raise or fold the cloth. Cosine easing over
    variable-length segments varies the speeds, and each move ends in a
    short hold so the cloth settles.
    """
    rng = np.random.default_rng(seed)
    corners = base.points.copy()
    n_grippers = corners.shape[0]
    half_rest = abs(corners[0, 0] - corners[1, 0]) / 2.0 if n_grippers == 2 else CLOTH_WIDTH / 2.0
    edge_z = float(np.mean(corners[:, 2]))

    def _edge(cx, cz, half, skew, y_left, y_right):
        out = corners.copy()
        signs = np.sign(corners[:, 0])
        signs[signs == 0] = 1.0
        out[:, 0] = cx + signs * half
        out[:, 1] = (y_left, y_right)[: n_grippers] if n_grippers <= 2 else REST_HEIGHT
        out[:, 2] = edge_z + cz - signs * skew
        return out

    def wander_target():
        # a fresh taut placement anywhere in view
        return _edge(
            cx=rng.uniform(-0.03, 0.03),
            cz=rng.uniform(-0.045, 0.045),
            half=rng.uniform(half_rest, half_rest * 1.05),
            skew=rng.uniform(-0.025, 0.025),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )

    def rest_target():
        return _edge(
            cx=rng.uniform(-0.008, 0.008),
            cz=rng.uniform(-0.008, 0.008),
            half=rng.uniform(half_rest, half_rest * 1.02),
            skew=rng.uniform(-0.006, 0.006),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )

    def _clamp_taut(out):
        if n_grippers == 2:
            span = abs(out[0, 0] - out[1, 0])
            if span < 2.0 * half_rest:
                grow = (2.0 * half_rest - span) / 2.0 + 1e-6
                out[:, 0] += np.sign(out[:, 0] - np.mean(out[:, 0])) * grow
        return out

    def jiggle_target(current):
        # small corrections around the current placement, the regime a
        # converging servo lives in; separation still clamped taut
        out = current.copy()
        out[:, 0] += rng.uniform(-0.012, 0.012, size=n_grippers)
        out[:, 1] = REST_HEIGHT
        out[:, 2] += rng.uniform(-0.012, 0.012, size=n_grippers)
        return _clamp_taut(out)

    def fine_target(current):
        # millimeter moves anchored at the rest placement, where the loop
        # spends its endgame. Rotations (opposite z) and shears (opposite x)
        # are drawn explicitly: left to chance they are rare, and they are
        # exactly the residuals a near-converged loop has to cancel.
        out = _edge(
            cx=rng.uniform(-0.004, 0.004),
            cz=rng.uniform(-0.004, 0.004),
            half=rng.uniform(half_rest, half_rest * 1.01),
            skew=rng.uniform(-0.003, 0.003),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )
        mode = rng.integers(0, 3)
        amp = rng.uniform(0.003, 0.009)
        if mode == 0 and n_grippers == 2:     # rotate: differential z
            out[0, 2] += amp
            out[1, 2] -= amp
        elif mode == 1 and n_grippers == 2:   # shear: differential x
            out[0, 0] += amp
            out[1, 0] -= amp
        else:                                  # free per-gripper wiggle
            out[:, 0] += rng.uniform(-0.005, 0.005, size=n_grippers)
            out[:, 2] += rng.uniform(-0.005, 0.005, size=n_grippers)
        return _clamp_taut(out)

    def lift_target(current):
        # raise the held edge while advancing it, the taut fold carry
        out = current.copy()
        out[:, 1] = rng.uniform(0.04, 0.09)
        out[:, 2] += rng.uniform(0.04, 0.12)
        return out

    def pinch_target():
        # the one wrinkling excursion: both grippers push in along a fixed
        # inward direction, buckling the span. A single pinch family keeps
        # every wrinkled frame on one corridor, so frame pairs that cross it
        # still describe motion that actually caused their appearance change;
        # a second independently placed pinch would break that.
        out = corners.copy()
        amp = rng.uniform(0.035, 0.055)
        signs = np.sign(corners[:, 0])
        signs[signs == 0] = 1.0
        out[:, 0] = corners[:, 0] - signs * amp
        out[:, 1] = REST_HEIGHT
        out[:, 2] = edge_z + amp * rng.uniform(0.4, 0.8)
        return out

    def _placement(cur):
        # decompose a 2-gripper target into (cx, cz, half, skew)
        cx = float(np.mean(cur[:, 0]))
        cz = float(np.mean(cur[:, 2])) - edge_z
        half = abs(cur[0, 0] - cur[1, 0]) / 2.0
        s0 = np.sign(corners[0, 0]) or 1.0
        skew = float((cur[0, 2] - cur[1, 2]) / 2.0) * float(-s0)
        return cx, cz, half, skew

    def sweep_rot(current):
        # steady slow rotation through the rest pose. While the motion is
        # steady the sheet trails the grippers by a fixed lag that cancels in
        # frame differences, so pairs inside the sweep are honest rotation
        # rates even though the sheet itself never finishes settling (the
        # slowest visual mode at these settings).
        _, _, _, skew = _placement(current)
        sign = -1.0 if skew > 0 else 1.0
        return _edge(
            cx=rng.uniform(-0.002, 0.002),
            cz=rng.uniform(-0.002, 0.002),
            half=rng.uniform(half_rest, half_rest * 1.005),
            skew=sign * rng.uniform(0.005, 0.0075),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )

    def sweep_cx(current):
        cx, _, _, _ = _placement(current)
        sign = -1.0 if cx > 0 else 1.0
        return _edge(
            cx=sign * rng.uniform(0.004, 0.007),
            cz=rng.uniform(-0.002, 0.002),
            half=rng.uniform(half_rest, half_rest * 1.005),
            skew=rng.uniform(-0.001, 0.001),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )

    def sweep_cz(current):
        _, cz, _, _ = _placement(current)
        sign = -1.0 if cz > 0 else 1.0
        return _edge(
            cx=rng.uniform(-0.002, 0.002),
            cz=sign * rng.uniform(0.004, 0.007),
            half=rng.uniform(half_rest, half_rest * 1.005),
            skew=rng.uniform(-0.001, 0.001),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )

    def pinch_one(side):
        # one gripper pushes in while the other holds station, slackening and
        # buckling just that side; stays on the same forward corridor as the
        # symmetric pinch so wrinkled frames from any episode remain motion-
        # consistent with each other
        out = corners.copy()
        amp = rng.uniform(0.04, 0.06)
        sign = np.sign(corners[side, 0]) or 1.0
        out[side, 0] = corners[side, 0] - sign * amp
        out[side, 1] = REST_HEIGHT
        out[side, 2] = edge_z + amp * rng.uniform(0.3, 0.6)
        return out

    def release_target():
        # pull back out past rest so the pinch wrinkles leave cleanly
        return _edge(
            cx=rng.uniform(-0.005, 0.005),
            cz=rng.uniform(-0.005, 0.005),
            half=rng.uniform(half_rest * 1.005, half_rest * 1.025),
            skew=rng.uniform(-0.004, 0.004),
            y_left=REST_HEIGHT,
            y_right=REST_HEIGHT,
        )

    if style == "flatten":
        moves = (
            "pinch", "release", "sweep_rot", "sweep_cx", "sweep_rot",
            "sweep_cz", "pinch_left", "pinch_right", "release",
            "sweep_rot", "fine", "sweep_cx", "sweep_cz", "fine",
            "wander", "jiggle", "rest",
        )
    elif style == "full":
        moves = (
            "pinch", "release", "sweep_rot", "sweep_cx", "rest",
            "lift", "rest", "sweep_rot",
            "sweep_cz", "fine", "rest", "jiggle", "wander", "fine",
        )
    else:
        raise ParameterError(f"unknown trajectory style {style!r}")
    generators = {
        "pinch": lambda current: pinch_target(),
        "pinch_left": lambda current: pinch_one(0),
        "pinch_right": lambda current: pinch_one(1 if n_grippers > 1 else 0),
        "release": lambda current: release_target(),
        "rest": lambda current: rest_target(),
        "wander": lambda current: wander_target(),
        "jiggle": jiggle_target,
        "fine": fine_target,
        "sweep_rot": sweep_rot,
        "sweep_cx": sweep_cx,
        "sweep_cz": sweep_cz,
        "lift": lift_target,
    }

    # per-frame speed budgets, meters. Motion must stay quasi-static: the
    # cloth trails the grippers by a few frames of travel, so adjacent-frame
    # feature rates are honest velocity pairs only when travel per frame is
    # small. Fine moves get the tightest budget because their millimeter
    # signals are the first thing ringing buries.
    _SPEED = {"fine": 0.00045, "jiggle": 0.0008, "pinch": 0.002,
              "pinch_left": 0.002, "pinch_right": 0.002, "release": 0.0024,
              "lift": 0.0025, "sweep_rot": 0.00035, "sweep_cx": 0.0004,
              "sweep_cz": 0.0004}

    def segment_lengths(kind, seg_from, seg_to):
        speed = _SPEED.get(kind, 0.0011)
        dist = float(np.max(np.linalg.norm(seg_to - seg_from, axis=-1)))
        move = int(np.clip(round(dist / speed), 6, 46))
        if kind.startswith("sweep") or kind == "fine":
            hold = int(rng.integers(4, 8))
        elif kind == "jiggle":
            hold = int(rng.integers(5, 9))
        else:
            hold = int(rng.integers(8, 12))
        return move, hold

    # each segment is a move followed by a short hold. Ordinary moves get
    # cosine easing; sweeps run at constant speed, since their whole point is
    # a steady-state stretch of frames with a fixed tracking lag
    paths = np.empty((n_frames, n_grippers, 3))
    seg_from = corners.copy()
    kind = moves[0]
    seg_to = generators[kind](seg_from)
    seg_len, hold_len = segment_lengths(kind, seg_from, seg_to)
    phase = "move"
    frame = 0
    move_idx = 0
    for t in range(n_frames):
        if phase == "move" and frame >= seg_len:
            phase = "hold"
            frame = 0
        if phase == "hold" and frame >= hold_len:
            seg_from = seg_to
            move_idx += 1
            kind = moves[move_idx % len(moves)]
            seg_to = generators[kind](seg_from)
            seg_len, hold_len = segment_lengths(kind, seg_from, seg_to)
            phase = "move"
            frame = 0
        if phase == "move":
            tau = (frame + 1) / seg_len
            if kind.startswith("sweep"):
                ease = tau
            else:
                ease = (1.0 - math.cos(math.pi * tau)) / 2.0
            paths[t] = seg_from + (seg_to - seg_from) * ease
        else:
            paths[t] = seg_to
        frame += 1
    return [paths[t].ravel().copy() for t in range(n_frames)]


def subject_variant(params: SimParams, camera: CameraModel, stiffness_factor: float = 1.25):
    """A second cloth subject: stiffer springs and a nudged camera, for
    probing how a dictionary trained on one subject transfers to another."""
    new_params = replace(
        params,
        stiffness_structural=params.stiffness_structural * stiffness_factor,
        stiffness_shear=params.stiffness_shear * stiffness_factor,
        stiffness_bend=params.stiffness_bend * stiffness_factor,
    )
    eye = (camera.eye[0] + 0.015, camera.eye[1] - 0.01, camera.eye[2] + 0.012)
    new_camera = replace(camera, eye=eye)
    return new_params, new_camera
