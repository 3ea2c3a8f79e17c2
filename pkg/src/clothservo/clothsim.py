"""Mass-spring cloth simulator with gripper constraints and a shaded renderer.

The simulator stands in for robot, cloth, and camera: a rectangular vertex
grid with structural, shear, and weak bending springs, integrated by
semi-implicit Euler in fixed substeps, plus a small software rasterizer that
turns the cloth surface into the RGB frames the feature pipeline consumes.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, ParameterError, SimulationDivergedError
from .imaging import Image, Mask, quantize

DIVERGENCE_LIMIT = 1e3


@dataclass(frozen=True)
class GripperConfig:
    """Cartesian gripper positions; the controllable configuration vector."""

    points: np.ndarray  # (k, 3)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ContractError(f"gripper points must be (k, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ContractError("gripper positions must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def n_dof(self) -> int:
        return 3 * self.points.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.points.ravel().copy()

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "GripperConfig":
        v = np.asarray(vec, dtype=np.float64).ravel()
        if v.size % 3 != 0:
            raise ContractError(f"gripper vector length {v.size} is not a multiple of 3")
        return cls(v.reshape(-1, 3))


@dataclass(frozen=True)
class SimParams:
    stiffness_structural: float = 60.0   # N/m
    stiffness_shear: float = 30.0
    stiffness_bend: float = 0.6          # ~1% of structural: near-zero bending energy
    damping: float = 4.0                 # 1/s velocity decay
    gravity: float = 9.81                # m/s^2, acts along -y
    timestep: float = 1.0 / 300.0        # physics substep
    substeps: int = 10                   # substeps per control frame (30 Hz frames)
    max_gripper_speed: float = 0.25      # m/s
    node_mass: float = 0.008             # kg per vertex
    ground_height: float | None = None   # optional floor plane (y = value)

    def __post_init__(self):
        if not (self.timestep > 0):
            raise ParameterError("timestep must be > 0")
        for name in ("stiffness_structural", "stiffness_shear", "stiffness_bend"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if not (self.max_gripper_speed > 0):
            raise ParameterError("max_gripper_speed must be > 0")
        if self.substeps < 1:
            raise ParameterError("substeps must be >= 1")
        if self.node_mass <= 0:
            raise ParameterError("node_mass must be > 0")

    @property
    def frame_duration(self) -> float:
        return self.timestep * self.substeps


@dataclass(frozen=True)
class ClothState:
    """Vertex grid state. Grid topology and pin assignments never change."""

    positions: np.ndarray                     # (rows, cols, 3)
    velocities: np.ndarray                    # (rows, cols, 3)
    pinned: dict                              # (i, j) -> gripper index
    anchors: dict = field(default_factory=dict)  # (i, j) -> fixed world point
    spacing: float = 0.3 / 16.0               # structural rest length

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        v = np.asarray(self.velocities, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3 or v.shape != p.shape:
            raise ContractError(f"bad state arrays: positions {p.shape}, velocities {v.shape}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ContractError("state arrays must be finite")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "velocities", v)
        rows, cols = p.shape[:2]
        for (i, j) in list(self.pinned) + list(self.anchors):
            if not (0 <= i < rows and 0 <= j < cols):
                raise ContractError(f"pinned vertex {(i, j)} outside {rows}x{cols} grid")

    @property
    def rows(self) -> int:
        return self.positions.shape[0]

    @property
    def cols(self) -> int:
        return self.positions.shape[1]


def flat_grid(
    rows: int,
    cols: int,
    spacing: float,
    origin=(0.0, 0.0, 0.0),
    pinned: dict | None = None,
) -> ClothState:
    """Rest-length grid hanging in the x-y plane: x spans columns, y drops
    with row index, z = const."""
    ox, oy, oz = origin
    ii, jj = np.mgrid[0:rows, 0:cols].astype(np.float64)
    pos = np.stack([ox + jj * spacing, oy - ii * spacing, np.full_like(ii, oz)], axis=2)
    return ClothState(
        positions=pos,
        velocities=np.zeros_like(pos),
        pinned=dict(pinned or {}),
        spacing=spacing,
    )


@functools.lru_cache(maxsize=8)
def _spring_topology(rows: int, cols: int):
    """Index pairs per spring class, on flattened vertex ids."""

    def vid(i, j):
        return i * cols + j

    structural, shear, bend = [], [], []
    for i in range(rows):
        for j in range(cols):
            if j + 1 < cols:
                structural.append((vid(i, j), vid(i, j + 1)))
            if i + 1 < rows:
                structural.append((vid(i, j), vid(i + 1, j)))
            if i + 1 < rows and j + 1 < cols:
                shear.append((vid(i, j), vid(i + 1, j + 1)))
                shear.append((vid(i + 1, j), vid(i, j + 1)))
            if j + 2 < cols:
                bend.append((vid(i, j), vid(i, j + 2)))
            if i + 2 < rows:
                bend.append((vid(i, j), vid(i + 2, j)))
    return tuple(np.array(pairs, dtype=np.intp).reshape(-1, 2) for pairs in (structural, shear, bend))


def _spring_forces(flat_pos: np.ndarray, state: ClothState, params: SimParams) -> np.ndarray:
    forces = np.zeros_like(flat_pos)
    topo = _spring_topology(state.rows, state.cols)
    rests = (state.spacing, state.spacing * math.sqrt(2.0), state.spacing * 2.0)
    ks = (params.stiffness_structural, params.stiffness_shear, params.stiffness_bend)
    for pairs, rest, k in zip(topo, rests, ks):
        if k == 0.0 or len(pairs) == 0:
            continue
        a, b = pairs[:, 0], pairs[:, 1]
        delta = flat_pos[b] - flat_pos[a]
        length = np.linalg.norm(delta, axis=1)
        length = np.maximum(length, 1e-12)
        f = (k * (length - rest) / length)[:, None] * delta
        np.add.at(forces, a, f)
        np.add.at(forces, b, -f)
    return forces


def step(state: ClothState, grippers: GripperConfig, params: SimParams) -> ClothState:
    """Advance one control frame: ``substeps`` semi-implicit Euler substeps.

    Pinned vertices are hard-set to their gripper position each substep, with
    the gripper approaching the commanded point at most ``max_gripper_speed``.
    """
    for (i, j), g in state.pinned.items():
        if not (0 <= g < grippers.points.shape[0]):
            raise ContractError(f"vertex {(i, j)} pinned to missing gripper {g}")
    pos = state.positions.reshape(-1, 3).copy()
    vel = state.velocities.reshape(-1, 3).copy()
    cols = state.cols
    dt = params.timestep
    pin_ids = np.array([i * cols + j for (i, j) in state.pinned], dtype=np.intp)
    pin_targets = np.array([grippers.points[g] for g in state.pinned.values()])
    anchor_ids = np.array([i * cols + j for (i, j) in state.anchors], dtype=np.intp)
    anchor_pos = (
        np.array([state.anchors[k] for k in state.anchors], dtype=np.float64)
        if state.anchors
        else np.zeros((0, 3))
    )

    gripper_prev = state.positions.reshape(-1, 3)[pin_ids] if len(pin_ids) else None
    for _ in range(params.substeps):
        accel = _spring_forces(pos, state, params) / params.node_mass
        accel[:, 1] -= params.gravity
        accel -= params.damping * vel
        vel += dt * accel
        pos += dt * vel

        if len(pin_ids):
            # pinned vertices ignore the free integration above; the gripper
            # walks toward its commanded point at most max_gripper_speed
            delta = pin_targets - gripper_prev
            dist = np.linalg.norm(delta, axis=1)
            max_move = params.max_gripper_speed * dt
            scale = np.where(dist > max_move, max_move / np.maximum(dist, 1e-300), 1.0)
            new_pin = gripper_prev + delta * scale[:, None]
            pos[pin_ids] = new_pin
            vel[pin_ids] = (new_pin - gripper_prev) / dt
            gripper_prev = new_pin
        if len(anchor_ids):
            pos[anchor_ids] = anchor_pos
            vel[anchor_ids] = 0.0
        if params.ground_height is not None:
            below = pos[:, 1] < params.ground_height
            pos[below, 1] = params.ground_height
            vel[below, 1] = np.maximum(vel[below, 1], 0.0)

    if not np.all(np.isfinite(pos)) or np.max(np.abs(pos)) > DIVERGENCE_LIMIT:
        raise SimulationDivergedError(
            f"cloth positions exploded (max |p| = {np.max(np.abs(pos)):.3g})"
        )
    shape = state.positions.shape
    return replace(state, positions=pos.reshape(shape), velocities=vel.reshape(shape))


def gripper_positions(state: ClothState, n_grippers: int) -> GripperConfig:
    """Current gripper points, read back from their pinned vertices."""
    points = np.zeros((n_grippers, 3))
    seen = set()
    for (i, j), g in state.pinned.items():
        if g not in seen:
            points[g] = state.positions[i, j]
            seen.add(g)
    return GripperConfig(points)


def kinetic_energy(state: ClothState, params: SimParams) -> float:
    return float(0.5 * params.node_mass * np.sum(state.velocities ** 2))


def mechanical_energy(state: ClothState, params: SimParams) -> float:
    """Kinetic + spring + gravitational potential energy."""
    total = kinetic_energy(state, params)
    flat = state.positions.reshape(-1, 3)
    topo = _spring_topology(state.rows, state.cols)
    rests = (state.spacing, state.spacing * math.sqrt(2.0), state.spacing * 2.0)
    ks = (params.stiffness_structural, params.stiffness_shear, params.stiffness_bend)
    for pairs, rest, k in zip(topo, rests, ks):
        if len(pairs) == 0:
            continue
        delta = flat[pairs[:, 1]] - flat[pairs[:, 0]]
        length = np.linalg.norm(delta, axis=1)
        total += float(0.5 * k * np.sum((length - rest) ** 2))
    total += float(params.node_mass * params.gravity * np.sum(flat[:, 1]))
    return total


# --- scripted perturbations (the human stand-in) ---


@dataclass(frozen=True)
class Perturbation:
    """One scripted grasp point: displaces a vertex each frame it is active."""

    vertex: tuple[int, int]
    offset: tuple[float, float, float]
    kind: str = "constant"          # "constant" | "sinusoid"
    frequency: float = 0.0          # cycles per control frame (sinusoid)
    phase: float = 0.0
    start: int = 0
    stop: int | None = None

    def displacement(self, t: int) -> np.ndarray | None:
        if t < self.start or (self.stop is not None and t >= self.stop):
            return None
        base = np.asarray(self.offset, dtype=np.float64)
        if self.kind == "sinusoid":
            return base * math.sin(2.0 * math.pi * self.frequency * t + self.phase)
        if self.kind == "constant":
            return base
        raise ParameterError(f"unknown perturbation kind {self.kind!r}")


@dataclass(frozen=True)
class PerturbationScript:
    entries: tuple[Perturbation, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


def apply_perturbation(state: ClothState, script: PerturbationScript, t: int) -> ClothState:
    """Displace scripted vertices by their offset for frame ``t``, pre-step."""
    moves = []
    for entry in script.entries:
        i, j = entry.vertex
        if not (0 <= i < state.rows and 0 <= j < state.cols):
            raise ContractError(f"perturbation references vertex {(i, j)} outside grid")
        d = entry.displacement(t)
        if d is not None:
            moves.append(((i, j), d))
    if not moves:
        return state
    pos = state.positions.copy()
    for (i, j), d in moves:
        pos[i, j] = pos[i, j] + d
    return replace(state, positions=pos)


# --- camera and software rasterizer ---


@dataclass(frozen=True)
class CameraModel:
    eye: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    fov: float = math.radians(40.0)           # vertical field of view
    image_dims: tuple[int, int] = (64, 64)    # (width, height)
    light_dir: tuple[float, float, float] = (0.35, 0.3, 1.0)
    background_color: tuple[float, float, float] = (0.08, 0.08, 0.10)
    cloth_color: tuple[float, float, float] = (0.85, 0.35, 0.25)

    def basis(self):
        eye = np.asarray(self.eye, dtype=np.float64)
        fwd = np.asarray(self.look_at, dtype=np.float64) - eye
        norm = np.linalg.norm(fwd)
        if norm < 1e-12 or not (0.0 < self.fov < math.pi):
            raise ParameterError("degenerate camera: zero view volume")
        fwd = fwd / norm
        up = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise ParameterError("degenerate camera: up parallel to view direction")
        right /= rn
        true_up = np.cross(right, fwd)
        return eye, right, true_up, fwd


def _vertex_normals(positions: np.ndarray) -> np.ndarray:
    """Smooth per-vertex normals from grid tangents (central differences)."""
    t_i = np.gradient(positions, axis=0)
    t_j = np.gradient(positions, axis=1)
    n = np.cross(t_i, t_j)
    norms = np.linalg.norm(n, axis=2, keepdims=True)
    return n / np.maximum(norms, 1e-12)


def render_with_coverage(state: ClothState, camera: CameraModel) -> tuple[Image, Mask]:
    """Rasterize the cloth; returns the shaded frame and its coverage mask.

    Lambertian shading ``max(0, n . light_dir)`` on interpolated vertex
    normals, z-buffered, over a uniform background. Output intensities are
    snapped to the 8-bit grid so in-memory frames match their PNG round trip.
    """
    eye, right, true_up, fwd = camera.basis()
    w, h = camera.image_dims
    light = np.asarray(camera.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)

    pts = state.positions.reshape(-1, 3)
    rel = pts - eye
    xv = rel @ right
    yv = rel @ true_up
    zv = rel @ fwd
    half_h = math.tan(camera.fov / 2.0)
    half_w = half_h * (w / h)
    with np.errstate(divide="ignore", invalid="ignore"):
        px = (xv / (zv * half_w) + 1.0) * 0.5 * w
        py = (1.0 - yv / (zv * half_h)) * 0.5 * h

    normals = _vertex_normals(state.positions).reshape(-1, 3)
    shade = np.maximum(0.0, normals @ light)

    zbuf = np.full((h, w), np.inf)
    shadebuf = np.zeros((h, w))
    covered = np.zeros((h, w), dtype=bool)

    rows, cols = state.rows, state.cols
    idx = np.arange(rows * cols).reshape(rows, cols)
    quad_a = np.stack(
        [idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[:-1, 1:].ravel()], axis=1
    )
    quad_b = np.stack(
        [idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()], axis=1
    )
    triangles = np.concatenate([quad_a, quad_b], axis=0)

    near = 1e-3
    for tri in triangles:
        if np.any(zv[tri] <= near):
            continue
        tx, ty, tz = px[tri], py[tri], zv[tri]
        x0 = max(int(math.floor(tx.min() - 0.5)), 0)
        x1 = min(int(math.ceil(tx.max() + 0.5)), w - 1)
        y0 = max(int(math.floor(ty.min() - 0.5)), 0)
        y1 = min(int(math.ceil(ty.max() + 0.5)), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        gx, gy = np.meshgrid(
            np.arange(x0, x1 + 1) + 0.5, np.arange(y0, y1 + 1) + 0.5
        )
        d01 = (tx[1] - tx[0], ty[1] - ty[0])
        d02 = (tx[2] - tx[0], ty[2] - ty[0])
        area = d01[0] * d02[1] - d01[1] * d02[0]
        if abs(area) < 1e-12:
            continue
        ex, ey = gx - tx[0], gy - ty[0]
        w1 = (ex * d02[1] - ey * d02[0]) / area
        w2 = (ey * d01[0] - ex * d01[1]) / area
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        inv_z = w0 / tz[0] + w1 / tz[1] + w2 / tz[2]
        depth = 1.0 / inv_z
        ys, xs = np.nonzero(inside)
        yy, xx = ys + y0, xs + x0
        closer = depth[ys, xs] < zbuf[yy, xx]
        yy, xx, ys, xs = yy[closer], xx[closer], ys[closer], xs[closer]
        if len(yy) == 0:
            continue
        n_interp = (
            w0[ys, xs, None] * normals[tri[0]]
            + w1[ys, xs, None] * normals[tri[1]]
            + w2[ys, xs, None] * normals[tri[2]]
        )
        n_len = np.linalg.norm(n_interp, axis=1)
        lam = np.maximum(0.0, (n_interp @ light) / np.maximum(n_len, 1e-12))
        zbuf[yy, xx] = depth[ys, xs]
        shadebuf[yy, xx] = lam
        covered[yy, xx] = True

    frame = np.empty((h, w, 3))
    frame[:] = np.asarray(camera.background_color)
    cloth = np.asarray(camera.cloth_color)
    frame[covered] = shadebuf[covered, None] * cloth
    return quantize(Image(frame)), Mask(covered)


def render(state: ClothState, camera: CameraModel) -> Image:
    frame, _ = render_with_coverage(state, camera)
    return frame


# --- trajectory logs (the recording the dictionary trains on) ---


def write_trajectory_log(path, records: list[dict]) -> None:
    """One JSON object per control frame: step index, gripper vector, image path."""
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_trajectory_log(path) -> list[dict]:
    path = Path(path)
    records = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
