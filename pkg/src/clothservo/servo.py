"""Closed-loop control from visual features via the feedback dictionary.

Each control step codes the current feature error over the dictionary's
feature-space velocities and commands the negated, gain-scaled combination of
the paired gripper velocities. Goal handling comes in three modes: a single
fixed goal, a hidden goal inferred as the one needing the least motion, and a
sequential list worked through by a cost ordering with satisfied goals
retired as the error enters their satisfaction radius.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clothsim import (
    CameraModel,
    ClothState,
    GripperConfig,
    PerturbationScript,
    SimParams,
    apply_perturbation,
    gripper_positions,
    render,
    step,
)
from .dictionary import FeedbackDictionary
from .errors import ContractError, LayoutMismatchError, ParameterError, SimulationDivergedError
from .features import FeatureSet, FeatureVector
from .imaging import BackgroundModel, quantize, segment_foreground
from .sparse import SparseCode, SparseSolverConfig, reconstruct, solve

SERVO_MODES = ("single", "hidden", "sequential")


@dataclass(frozen=True)
class GoalSpec:
    """A target appearance, with an ordering cost for sequential tasks."""

    features: FeatureVector
    cost: float = 0.0
    label: str = ""


@dataclass(frozen=True)
class ServoConfig:
    gain: float = 0.5                  # feedback gain on the reconstructed velocity
    alpha: float = 0.1                 # sparsity penalty for the coder
    max_speed: float = 0.1             # cap on any velocity component (m/s)
    max_steps: int = 400
    stop_epsilon: float = 0.05         # fraction of the initial error, or absolute
    stop_epsilon_absolute: bool = False
    satisfaction_radius: float = 0.05  # sequential mode: goal retired below this
    mode: str = "single"
    solver_tol: float = 1e-10
    solver_max_iter: int = 2000

    def __post_init__(self):
        if self.mode not in SERVO_MODES:
            raise ParameterError(f"mode must be one of {SERVO_MODES}, got {self.mode!r}")
        if not (self.gain > 0):
            raise ParameterError("gain must be > 0")
        if not (self.max_speed > 0):
            raise ParameterError("max_speed must be > 0")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be >= 1")
        if self.stop_epsilon < 0:
            raise ParameterError("stop_epsilon must be >= 0")
        if self.satisfaction_radius < 0:
            raise ParameterError("satisfaction_radius must be >= 0")

    def solver_config(self) -> SparseSolverConfig:
        return SparseSolverConfig(
            alpha=self.alpha, max_iter=self.solver_max_iter, tol=self.solver_tol
        )


@dataclass(frozen=True)
class ControlDecision:
    velocity: np.ndarray        # commanded gripper velocity, gain applied, capped
    goal_index: int             # which goal the step pursued
    error_norm: float           # feature error to that goal
    code: SparseCode
    raw_velocity: np.ndarray    # dictionary reconstruction before gain and cap


def _cap_speed(v: np.ndarray, max_speed: float) -> np.ndarray:
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak > max_speed:
        return v * (max_speed / peak)
    return v


def control_step(
    current: FeatureVector,
    goals,
    dictionary: FeedbackDictionary,
    config: ServoConfig,
    remaining=None,
) -> ControlDecision:
    """One open-loop decision: code the error, pick a goal, command a velocity.

    ``remaining`` restricts the candidate goals by index (sequential mode
    keeps it; other callers usually leave it None for all goals). The function
    holds no state between calls.
    """
    if current.layout_id != dictionary.layout_id:
        raise LayoutMismatchError(
            "current features do not match the dictionary's feature layout"
        )
    goals = list(goals)
    if not goals:
        raise ContractError("control_step needs at least one goal")
    candidates = list(range(len(goals))) if remaining is None else list(remaining)
    if not candidates:
        raise ContractError("no goals left to pursue")
    if config.mode == "single" and len(candidates) != 1:
        raise ContractError(f"single-goal mode got {len(candidates)} candidate goals")

    solver = config.solver_config()
    evaluated = []
    for idx in candidates:
        error = current - goals[idx].features   # layout check happens here
        code = solve(dictionary.delta_s, error.values, solver)
        raw_v = reconstruct(code, dictionary.delta_r)
        evaluated.append((idx, error.norm(), code, raw_v))

    if config.mode == "hidden":
        # the goal whose explanation needs the least motion is taken as the
        # actual hidden state of the scene
        best = min(range(len(evaluated)), key=lambda e: float(np.linalg.norm(evaluated[e][3])))
    elif config.mode == "sequential":
        best = min(
            range(len(evaluated)),
            key=lambda e: goals[evaluated[e][0]].cost
            - config.gain * float(np.linalg.norm(evaluated[e][3])),
        )
    else:
        best = 0
    idx, err, code, raw_v = evaluated[best]
    velocity = _cap_speed(-config.gain * raw_v, config.max_speed)
    return ControlDecision(
        velocity=velocity,
        goal_index=idx,
        error_norm=err,
        code=code,
        raw_velocity=raw_v,
    )


@dataclass(frozen=True)
class TraceRecord:
    step: int
    config: tuple               # gripper configuration vector
    goal_index: int
    error_norm: float
    velocity: tuple             # commanded velocity (zeros on the final record)
    sparse_l1: float
    residual_norm: float

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "config": list(self.config),
            "goal_index": self.goal_index,
            "error_norm": self.error_norm,
            "velocity": list(self.velocity),
            "sparse_l1": self.sparse_l1,
            "residual_norm": self.residual_norm,
        }


@dataclass(frozen=True)
class ServoTrace:
    records: tuple
    converged: bool
    stop_reason: str            # "converged" | "max_steps" | "diverged"
    initial_error: float
    final_error: float
    final_state: ClothState | None = field(default=None, compare=False)

    @property
    def steps(self) -> int:
        return max(0, len(self.records) - 1)

    def error_curve(self) -> np.ndarray:
        return np.array([rec.error_norm for rec in self.records])


def run_servo(
    initial_state: ClothState,
    goals,
    dictionary: FeedbackDictionary,
    feature_set: FeatureSet,
    background: BackgroundModel,
    camera: CameraModel,
    sim_params: SimParams,
    config: ServoConfig,
    perturbation: PerturbationScript | None = None,
) -> ServoTrace:
    """Drive the simulated cloth until the feature error is inside the stop
    threshold, every sequential goal is retired, or the step budget runs out.

    Commanded velocities integrate at the dictionary's recording frame rate,
    so a dictionary trained at 30 Hz commands 1/30 s of motion per step. If
    the simulation diverges, the partial trace is attached to the raised
    error as ``exc.trace``.
    """
    goals = list(goals)
    if not goals:
        raise ContractError("run_servo needs at least one goal")
    n_grippers, rem = divmod(dictionary.n_dof, 3)
    if rem != 0:
        raise ContractError(f"dictionary n_dof {dictionary.n_dof} is not gripper-shaped")

    def observe(state: ClothState) -> FeatureVector:
        # quantize so live observations share the 8-bit pixel grid of the
        # recorded frames the dictionary was trained from
        image = quantize(render(state, camera))
        mask = segment_foreground(image, background)
        return feature_set.extract(image, mask)

    state = initial_state
    if perturbation is not None:
        # the disturbance lands before the frame is observed, so the very
        # first decision already sees (and corrects) it
        state = apply_perturbation(state, perturbation, 0)
    features = observe(state)
    remaining = list(range(len(goals))) if config.mode == "sequential" else None
    records = []
    threshold = None
    initial_error = None
    stop_reason = "max_steps"
    converged = False

    t = 0
    while True:
        if remaining is not None:
            still = []
            for idx in remaining:
                err = (features - goals[idx].features).norm()
                if err > config.satisfaction_radius:
                    still.append(idx)
            remaining = still
            if not remaining:
                converged = True
                stop_reason = "converged"
                final_err = min((features - g.features).norm() for g in goals)
                records.append(
                    TraceRecord(
                        step=t,
                        config=tuple(gripper_positions(state, n_grippers).vector),
                        goal_index=-1,
                        error_norm=final_err,
                        velocity=(0.0,) * dictionary.n_dof,
                        sparse_l1=0.0,
                        residual_norm=0.0,
                    )
                )
                break

        decision = control_step(features, goals, dictionary, config, remaining)
        if initial_error is None:
            initial_error = decision.error_norm
            threshold = (
                config.stop_epsilon
                if config.stop_epsilon_absolute
                else config.stop_epsilon * initial_error
            )

        if remaining is None and decision.error_norm <= threshold:
            converged = True
            stop_reason = "converged"
            records.append(
                TraceRecord(
                    step=t,
                    config=tuple(gripper_positions(state, n_grippers).vector),
                    goal_index=decision.goal_index,
                    error_norm=decision.error_norm,
                    velocity=(0.0,) * dictionary.n_dof,
                    sparse_l1=decision.code.l1_norm,
                    residual_norm=decision.code.residual_norm,
                )
            )
            break
        if t >= config.max_steps:
            stop_reason = "max_steps"
            records.append(
                TraceRecord(
                    step=t,
                    config=tuple(gripper_positions(state, n_grippers).vector),
                    goal_index=decision.goal_index,
                    error_norm=decision.error_norm,
                    velocity=(0.0,) * dictionary.n_dof,
                    sparse_l1=decision.code.l1_norm,
                    residual_norm=decision.code.residual_norm,
                )
            )
            break

        r_now = gripper_positions(state, n_grippers).vector
        records.append(
            TraceRecord(
                step=t,
                config=tuple(r_now),
                goal_index=decision.goal_index,
                error_norm=decision.error_norm,
                velocity=tuple(decision.velocity),
                sparse_l1=decision.code.l1_norm,
                residual_norm=decision.code.residual_norm,
            )
        )
        target = GripperConfig.from_vector(
            r_now + decision.velocity / dictionary.frame_rate
        )
        try:
            state = step(state, target, sim_params)
        except SimulationDivergedError as err:
            err.trace = ServoTrace(
                records=tuple(records),
                converged=False,
                stop_reason="diverged",
                initial_error=initial_error,
                final_error=records[-1].error_norm,
                final_state=None,
            )
            raise
        t += 1
        if perturbation is not None:
            state = apply_perturbation(state, perturbation, t)
        features = observe(state)

    final_error = records[-1].error_norm
    if initial_error is None:
        initial_error = final_error
    return ServoTrace(
        records=tuple(records),
        converged=converged,
        stop_reason=stop_reason,
        initial_error=initial_error,
        final_error=final_error,
        final_state=state,
    )
