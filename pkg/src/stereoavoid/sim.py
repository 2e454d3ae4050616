"""
Deterministic closed-loop flight simulation.

World frame: ``x`` forward (the flight direction), ``y`` left, ``z`` up.
The left camera sits at the vehicle position looking along ``+x`` with image
``u`` pointing to world ``-y`` and image ``v`` to world ``-z``; the right
camera is displaced by the baseline towards ``-y``. Obstacles are
axis-aligned boxes and upright cylinders standing on a flat ground plane.

Kinematics are first order: the commanded velocity is applied immediately.
"""
from __future__ import annotations

import functools
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .avoid import AvoidanceCommand, AvoidanceConfig, AvoidanceState, Direction, avoidance_step
from .imgio import DisparityMap, GrayImage, write_disparity
from .rectify import StereoCalibration


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its centre and edge lengths (metres)."""

    center: tuple
    size: tuple

    def __post_init__(self):
        if len(self.center) != 3 or len(self.size) != 3:
            raise ValueError("box centre and size need three components")
        if min(self.size) <= 0:
            raise ValueError("box edges must be positive")

    @property
    def lo(self):
        return np.asarray(self.center, float) - 0.5 * np.asarray(self.size, float)

    @property
    def hi(self):
        return np.asarray(self.center, float) + 0.5 * np.asarray(self.size, float)


@dataclass(frozen=True)
class Cylinder:
    """Upright cylinder with axis at ``(x, y)`` from ``base_z`` up to ``base_z + height``."""

    x: float
    y: float
    radius: float
    height: float
    base_z: float = 0.0

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder radius and height must be positive")


Shape = Union[Box, Cylinder]


@dataclass(frozen=True)
class Scene:
    obstacles: tuple = ()
    ground_z: float = 0.0
    goal: tuple = (30.0, 0.0, 1.0)
    start: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if tuple(self.goal[:2]) == tuple(self.start):
            raise ValueError("goal must differ from the start position")


@dataclass(frozen=True)
class VehicleState:
    position: tuple
    velocity: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (*self.position, *self.velocity)):
            raise ValueError("vehicle state must be finite")


@dataclass(frozen=True)
class Noise:
    """Disparity corruption for ideal renders: Gaussian jitter then random dropout."""

    sigma: float = 0.0
    dropout: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class SimConfig:
    width: int = 320
    height: int = 180
    dt: float = 0.1
    vehicle_radius: float = 0.3
    takeoff_altitude: float = 1.0
    texture_seed: int = 7


def default_calibration(width: int = 320, height: int = 180) -> StereoCalibration:
    return StereoCalibration(baseline_m=0.2, focal_px=width / 2.0, cx=width / 2.0, cy=height / 2.0, d_max=32)


# --- scene files ----------------------------------------------------------

def parse_scene(text: str) -> Scene:
    """
    Read a line-oriented scene description.

    Lines: ``box x y z sx sy sz`` (centre and size), ``cylinder x y r h``,
    ``goal x y z``, ``ground z`` and ``start x y``. ``#`` starts a comment.
    """
    obstacles: List[Shape] = []
    kw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            nums = [float(v) for v in rest]
        except ValueError:
            raise ValueError(f"scene line {lineno}: non-numeric value in {line!r}") from None
        expect = {"box": 6, "cylinder": 4, "goal": 3, "ground": 1, "start": 2}
        if head not in expect:
            raise ValueError(f"scene line {lineno}: unknown entry {head!r}")
        if len(nums) != expect[head]:
            raise ValueError(f"scene line {lineno}: {head} needs {expect[head]} numbers, got {len(nums)}")
        if head == "box":
            obstacles.append(Box(tuple(nums[:3]), tuple(nums[3:])))
        elif head == "cylinder":
            obstacles.append(Cylinder(*nums))
        elif head == "goal":
            kw["goal"] = tuple(nums)
        elif head == "ground":
            kw["ground_z"] = nums[0]
        else:
            kw["start"] = tuple(nums)
    ground = kw.get("ground_z", 0.0)
    obstacles = [replace(o, base_z=ground) if isinstance(o, Cylinder) else o for o in obstacles]
    return Scene(tuple(obstacles), **kw)


def load_scene(path) -> Scene:
    with open(path) as f:
        return parse_scene(f.read())


def format_scene(scene: Scene) -> str:
    lines = [f"ground {scene.ground_z:g}", f"start {scene.start[0]:g} {scene.start[1]:g}"]
    for o in scene.obstacles:
        if isinstance(o, Box):
            lines.append("box " + " ".join(f"{v:g}" for v in (*o.center, *o.size)))
        else:
            lines.append(f"cylinder {o.x:g} {o.y:g} {o.radius:g} {o.height:g}")
    lines.append("goal " + " ".join(f"{v:g}" for v in scene.goal))
    return "\n".join(lines) + "\n"


def empty_scene() -> Scene:
    return Scene((), goal=(20.0, 0.0, 1.0))


def single_box_scene(distance: float = 10.0, size: float = 2.0) -> Scene:
    """A ``size``-metre cube on the ground whose front face is ``distance`` ahead."""
    return Scene((Box((distance + size / 2, 0.0, size / 2), (size, size, size)),), goal=(25.0, 0.0, 1.0))


def staggered_boxes_scene() -> Scene:
    return Scene(
        (
            Box((11.0, 0.0, 1.0), (2.0, 2.0, 2.0)),
            Box((20.0, -3.0, 1.0), (2.0, 2.0, 2.0)),
        ),
        goal=(32.0, 0.0, 1.0),
    )


# --- ray casting ----------------------------------------------------------

@functools.lru_cache(maxsize=8)
def pixel_rays(calib: StereoCalibration, width: int, height: int):
    """Unnormalised ray directions with unit forward component, each (H, W), read-only."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    dy = -(u - calib.cx) / calib.focal_px
    dz = -(v - calib.cy) / calib.focal_px
    dy.flags.writeable = False
    dz.flags.writeable = False
    return dy, dz


def _footprint(o, lo, hi, calib, width, height):
    """Pixel window covering a box that lies wholly in front of the camera, else the full frame."""
    if lo[0] - o[0] <= 1e-6:
        return slice(0, height), slice(0, width)
    xs = np.array([lo[0], hi[0]]) - o[0]
    ys = np.array([lo[1], hi[1]]) - o[1]
    zs = np.array([lo[2], hi[2]]) - o[2]
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    u = calib.cx - calib.focal_px * Y / X
    v = calib.cy - calib.focal_px * Z / X
    u0, u1 = int(np.floor(u.min())), int(np.ceil(u.max())) + 1
    v0, v1 = int(np.floor(v.min())), int(np.ceil(v.max())) + 1
    u0, v0 = max(u0, 0), max(v0, 0)
    u1, v1 = min(u1, width), min(v1, height)
    return slice(v0, max(v0, v1)), slice(u0, max(u0, u1))


def _hit_box(o, dy, dz, box: Box):
    lo, hi = box.lo - o, box.hi - o
    # x component of every ray is 1
    tx0, tx1 = lo[0], hi[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ty0, ty1 = lo[1] / dy, hi[1] / dy
        tz0, tz1 = lo[2] / dz, hi[2] / dz
    ty_near = np.where(dy == 0, np.where((lo[1] <= 0) & (hi[1] >= 0), -np.inf, np.inf), np.minimum(ty0, ty1))
    ty_far = np.where(dy == 0, np.where((lo[1] <= 0) & (hi[1] >= 0), np.inf, -np.inf), np.maximum(ty0, ty1))
    tz_near = np.where(dz == 0, np.where((lo[2] <= 0) & (hi[2] >= 0), -np.inf, np.inf), np.minimum(tz0, tz1))
    tz_far = np.where(dz == 0, np.where((lo[2] <= 0) & (hi[2] >= 0), np.inf, -np.inf), np.maximum(tz0, tz1))
    t_near = np.maximum(np.maximum(min(tx0, tx1), ty_near), tz_near)
    t_far = np.minimum(np.minimum(max(tx0, tx1), ty_far), tz_far)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def _hit_cylinder(o, dy, dz, cyl: Cylinder):
    ox, oy = o[0] - cyl.x, o[1] - cyl.y
    a = 1.0 + dy * dy
    b = 2.0 * (ox + oy * dy)
    c = ox * ox + oy * oy - cyl.radius ** 2
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore"):
        t_side = (-b - np.sqrt(disc)) / (2 * a)
    z = o[2] + t_side * dz
    side_ok = (disc >= 0) & (t_side > 0) & (z >= cyl.base_z) & (z <= cyl.base_z + cyl.height)
    t = np.where(side_ok, t_side, np.inf)
    top = cyl.base_z + cyl.height
    if o[2] > top:
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cap = (top - o[2]) / dz
        px, py = ox + t_cap, oy + t_cap * dy
        cap_ok = (dz < 0) & (t_cap > 0) & (px * px + py * py <= cyl.radius ** 2)
        t = np.where(cap_ok & (t_cap < t), t_cap, t)
    return t


def cast(scene: Scene, origin, calib: StereoCalibration, width: int, height: int,
         with_ground: bool = True):
    """
    Depth (distance along ``+x``) of the first surface seen by every pixel.

    Returns ``(depth, dy, dz)``; ``depth`` is ``inf`` where nothing is hit.
    """
    o = np.asarray(origin, dtype=np.float64)
    dy, dz = pixel_rays(calib, width, height)
    depth = np.full((height, width), np.inf)
    for ob in scene.obstacles:
        if isinstance(ob, Box):
            win = _footprint(o, ob.lo, ob.hi, calib, width, height)
            depth[win] = np.minimum(depth[win], _hit_box(o, dy[win], dz[win], ob))
        else:
            depth = np.minimum(depth, _hit_cylinder(o, dy, dz, ob))
    if with_ground and o[2] > scene.ground_z:
        with np.errstate(divide="ignore"):
            tg = np.where(dz < 0, (scene.ground_z - o[2]) / dz, np.inf)
        depth = np.minimum(depth, tg)
    return depth, dy, dz


def render_ideal_disparity(scene: Scene, state: VehicleState, calib: StereoCalibration,
                           noise: Optional[Noise] = None, width: int = 320, height: int = 180) -> DisparityMap:
    """
    Disparity the rig would ideally measure: ``round(f * b / Z)`` per pixel.

    Values are clamped to ``[0, d_max)``; pixels that see nothing are invalid.
    With ``noise``, Gaussian jitter is added before rounding and pixels are
    dropped with probability ``noise.dropout``, both from a generator seeded
    with ``noise.seed``.
    """
    depth, _, _ = cast(scene, state.position, calib, width, height)
    valid = np.isfinite(depth)
    exact = np.zeros_like(depth)
    exact[valid] = calib.focal_px * calib.baseline_m / depth[valid]
    if noise is not None and (noise.sigma > 0 or noise.dropout > 0):
        rng = np.random.default_rng(noise.seed)
        exact = exact + rng.normal(0.0, noise.sigma, exact.shape) if noise.sigma > 0 else exact
        if noise.dropout > 0:
            valid &= rng.random(exact.shape) >= noise.dropout
    d = np.clip(np.rint(exact), 0, calib.d_max - 1).astype(np.int32)
    return DisparityMap(d, valid, calib.d_max)


# --- procedural texture ---------------------------------------------------

class SolidTexture:
    """Seeded 3-D value noise, two octaves, sampled at world points."""

    def __init__(self, seed: int, cells=(0.25, 0.08), weights=(0.6, 0.4)):
        rng = np.random.default_rng(seed)
        self.perm = np.concatenate([rng.permutation(256)] * 2)
        self.values = rng.random(256)
        self.cells = cells
        self.weights = weights

    def _lattice(self, ix, iy, iz):
        p = self.perm
        return self.values[p[(p[(p[ix & 255] + iy) & 255] + iz) & 255]]

    def _octave(self, pts, cell):
        q = pts / cell
        i = np.floor(q).astype(np.int64)
        f = q - i
        s = f * f * (3 - 2 * f)
        out = 0.0
        for cx in (0, 1):
            wx = s[..., 0] if cx else 1 - s[..., 0]
            for cy in (0, 1):
                wy = s[..., 1] if cy else 1 - s[..., 1]
                for cz in (0, 1):
                    wz = s[..., 2] if cz else 1 - s[..., 2]
                    out = out + wx * wy * wz * self._lattice(i[..., 0] + cx, i[..., 1] + cy, i[..., 2] + cz)
        return out

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        total = sum(w * self._octave(pts, c) for c, w in zip(self.cells, self.weights))
        return total / sum(self.weights)


def _render_view(scene, origin, calib, width, height, texture) -> np.ndarray:
    depth, dy, dz = cast(scene, origin, calib, width, height)
    img = np.full((height, width), 128, dtype=np.uint8)
    hit = np.isfinite(depth)
    t = depth[hit]
    o = np.asarray(origin, dtype=np.float64)
    pts = np.stack([o[0] + t, o[1] + t * dy[hit], o[2] + t * dz[hit]], axis=-1)
    img[hit] = np.clip(np.rint(30 + 200 * texture(pts)), 0, 255).astype(np.uint8)
    return img


def render_stereo_pair(scene: Scene, state: VehicleState, calib: StereoCalibration,
                       texture_seed: int = 7, width: int = 320, height: int = 180):
    """
    Textured left/right images of the scene.

    Surfaces carry a seeded solid noise texture, so both cameras see the same
    surface pattern at the geometrically exact positions. Background is 128.
    """
    tex = SolidTexture(texture_seed)
    p = np.asarray(state.position, dtype=np.float64)
    left = _render_view(scene, p, calib, width, height, tex)
    right = _render_view(scene, p + np.array([0.0, -calib.baseline_m, 0.0]), calib, width, height, tex)
    return GrayImage(left), GrayImage(right)


# --- kinematics -----------------------------------------------------------

def command_velocity(cmd: AvoidanceCommand, cfg: AvoidanceConfig) -> tuple:
    s = cfg.lateral_speed
    return {
        Direction.FORWARD: (cfg.forward_speed, 0.0, 0.0),
        Direction.LEFT: (0.0, s, 0.0),
        Direction.RIGHT: (0.0, -s, 0.0),
        Direction.UP: (0.0, 0.0, s),
        Direction.DOWN: (0.0, 0.0, -s),
        Direction.HOLD: (0.0, 0.0, 0.0),
    }[cmd.direction]


def step_vehicle(state: VehicleState, cmd: AvoidanceCommand, cfg: AvoidanceConfig, dt: float) -> VehicleState:
    """Apply the commanded velocity for ``dt`` seconds."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = command_velocity(cmd, cfg)
    pos = tuple(p + vi * dt for p, vi in zip(state.position, v))
    return VehicleState(pos, v)


def surface_distance(p, ob: Shape) -> float:
    """Distance from ``p`` to the obstacle surface; negative inside the obstacle."""
    p = np.asarray(p, dtype=np.float64)
    if isinstance(ob, Box):
        q = np.maximum(np.maximum(ob.lo - p, p - ob.hi), 0.0)
        outside = float(np.linalg.norm(q))
        if outside > 0:
            return outside
        return -float(min((p - ob.lo).min(), (ob.hi - p).min()))
    radial = math.hypot(p[0] - ob.x, p[1] - ob.y) - ob.radius
    below = ob.base_z - p[2]
    above = p[2] - (ob.base_z + ob.height)
    vertical = max(below, above)
    if radial <= 0 and vertical <= 0:
        return float(max(radial, vertical))
    return float(math.hypot(max(radial, 0.0), max(vertical, 0.0)))


def clearance(p, scene: Scene) -> float:
    if not scene.obstacles:
        return math.inf
    return min(surface_distance(p, ob) for ob in scene.obstacles)


# --- episodes -------------------------------------------------------------

@dataclass
class EpisodeReport:
    times: List[float] = field(default_factory=list)
    positions: List[tuple] = field(default_factory=list)
    velocities: List[tuple] = field(default_factory=list)
    commands: List[str] = field(default_factory=list)
    min_clearance: float = math.inf
    goal_reached: bool = False
    collision: bool = False
    mode: str = "ideal"
    avoidance: bool = True
    wall_time_s: float = 0.0

    @property
    def final_position(self):
        return self.positions[-1] if self.positions else None

    def max_lateral_offset(self) -> float:
        return max((abs(p[1]) for p in self.positions), default=0.0)

    def to_text(self) -> str:
        """Structured text; wall-clock time is deliberately left out so reruns compare equal."""
        lines = [
            f"mode: {self.mode}",
            f"avoidance: {'on' if self.avoidance else 'off'}",
            f"frames: {len(self.times)}",
            f"goal_reached: {str(self.goal_reached).lower()}",
            f"collision: {str(self.collision).lower()}",
            f"min_clearance_m: {'inf' if math.isinf(self.min_clearance) else f'{self.min_clearance:.4f}'}",
        ]
        if self.positions:
            x, y, z = self.positions[-1]
            lines.append(f"final_position: ({x:.4f},{y:.4f},{z:.4f})")
        lines.append("trajectory:")
        for t, p, v, c in zip(self.times, self.positions, self.velocities, self.commands):
            lines.append(f"t={t:.2f} cmd={c} v=({v[0]:.2f},{v[1]:.2f},{v[2]:.2f}) "
                         f"p=({p[0]:.4f},{p[1]:.4f},{p[2]:.4f})")
        return "\n".join(lines) + "\n"


def run_episode(
    scene: Scene,
    calib: Optional[StereoCalibration] = None,
    pipeline_cfg=None,
    avoid_cfg: Optional[AvoidanceConfig] = None,
    max_t: float = 30.0,
    mode: str = "ideal",
    sim: Optional[SimConfig] = None,
    avoidance: bool = True,
    noise: Optional[Noise] = None,
    frames_dir=None,
    on_command: Optional[Callable[[str], None]] = None,
) -> EpisodeReport:
    """
    Fly one episode: take off, then render -> decide -> move at a fixed step.

    Args:
        scene: obstacles and goal; the goal counts as reached once the vehicle
            crosses the goal's ``x`` plane.
        calib: stereo rig, :func:`default_calibration` when omitted.
        pipeline_cfg: stereo configuration for ``mode="full"``; its ``d_max``
            is forced to the rig's.
        avoid_cfg: decision parameters.
        max_t: simulated time budget in seconds, take-off included.
        mode: ``"ideal"`` renders disparity directly, ``"full"`` renders a
            textured stereo pair and runs the matching pipeline on it.
        sim: image size, time step, vehicle radius, take-off altitude.
        avoidance: when False every frame commands Forward (control runs).
        noise: corruption for ideal renders.
        frames_dir: if given, every frame's disparity is written there as a
            colour PNG.
        on_command: called with each frame's ``t=... cmd=... v=(...)`` line.
    """
    from .config import PipelineConfig
    from .sgm import compute_disparity

    if mode not in ("ideal", "full"):
        raise ValueError(f"mode must be ideal or full, got {mode!r}")
    sim = sim or SimConfig()
    calib = calib or default_calibration(sim.width, sim.height)
    avoid_cfg = avoid_cfg or AvoidanceConfig()
    if mode == "full":
        pipeline_cfg = replace(pipeline_cfg or PipelineConfig(), d_max=calib.d_max)
    if frames_dir is not None:
        os.makedirs(frames_dir, exist_ok=True)

    report = EpisodeReport(mode=mode, avoidance=avoidance)
    wall0 = time.perf_counter()
    dt = sim.dt
    state = VehicleState((scene.start[0], scene.start[1], scene.ground_z))
    t = 0.0
    climb = AvoidanceCommand(Direction.UP, avoid_cfg.lateral_speed)

    def record(cmd_name):
        report.times.append(round(t, 6))
        report.positions.append(tuple(float(v) for v in state.position))
        report.velocities.append(tuple(float(v) for v in state.velocity))
        report.commands.append(cmd_name)
        report.min_clearance = min(report.min_clearance, clearance(state.position, scene))
        if on_command is not None:
            from .avoid import format_command
            on_command(format_command(t, AvoidanceCommand(Direction(cmd_name)), state.velocity))

    target_z = scene.ground_z + sim.takeoff_altitude
    while state.position[2] < target_z - 1e-9 and t < max_t:
        step = min(dt, (target_z - state.position[2]) / avoid_cfg.lateral_speed)
        state = step_vehicle(state, climb, avoid_cfg, step)
        t += step
        record(climb.direction.value)

    astate = AvoidanceState(avoid_cfg.vote_window)
    frame = 0
    while t < max_t - 1e-9:
        if mode == "ideal":
            disp = render_ideal_disparity(scene, state, calib, noise, sim.width, sim.height)
        else:
            left, right = render_stereo_pair(scene, state, calib, sim.texture_seed, sim.width, sim.height)
            disp = compute_disparity(left, right, pipeline_cfg)
        if frames_dir is not None:
            write_disparity(disp, os.path.join(frames_dir, f"frame_{frame:04d}.png"), "colorized", calib.d_max)
        if avoidance:
            cmd = avoidance_step(disp, calib, avoid_cfg, astate)
        else:
            cmd = AvoidanceCommand(Direction.FORWARD, avoid_cfg.forward_speed)
        state = step_vehicle(state, cmd, avoid_cfg, dt)
        t += dt
        frame += 1
        record(cmd.direction.value)
        if report.min_clearance < sim.vehicle_radius:
            report.collision = True
            break
        if state.position[0] >= scene.goal[0]:
            report.goal_reached = True
            break
    report.wall_time_s = time.perf_counter() - wall0
    return report
