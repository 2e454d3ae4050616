"""
Reactive avoidance decisions.

Per frame: detect obstacles, pick the nearest one that is both closer than
the critical distance and inside the central flight corridor, and choose the
sidestep (left/right/up/down) needing the fewest pixels to clear its edge.
A majority vote over the last few frames suppresses one-frame false alarms.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Optional, Sequence

from .imgio import DisparityMap
from .rectify import StereoCalibration
from .uvmap import DetectionConfig, Obstacle, detect_obstacles


class Direction(str, enum.Enum):
    FORWARD = "Forward"
    LEFT = "Left"
    RIGHT = "Right"
    UP = "Up"
    DOWN = "Down"
    HOLD = "Hold"

    def __str__(self):
        return self.value


# tie-break order for equal clearance costs
ESCAPE_ORDER = (Direction.RIGHT, Direction.LEFT, Direction.UP, Direction.DOWN)


@dataclass(frozen=True)
class AvoidanceCommand:
    direction: Direction
    lateral_speed: float = 0.0
    reason: Optional[Obstacle] = None


@dataclass(frozen=True)
class AvoidanceConfig:
    critical_distance_m: float = 5.0
    safety_margin_px: int = 0
    vote_window: int = 5
    forward_speed: float = 2.0
    lateral_speed: float = 1.0
    corridor_frac: float = 0.4
    detection: DetectionConfig = field(default_factory=DetectionConfig)

    def __post_init__(self):
        for name in ("critical_distance_m", "forward_speed", "lateral_speed", "corridor_frac"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.safety_margin_px < 0:
            raise ValueError("safety_margin_px must be non-negative")
        if self.vote_window < 1 or self.vote_window % 2 == 0:
            raise ValueError("vote_window must be a positive odd number")


def in_corridor(ob: Obstacle, frame_w: int, frame_h: int, cx: float, cy: float, frac: float) -> bool:
    hw, hh = 0.5 * frac * frame_w, 0.5 * frac * frame_h
    return ob.u_max >= cx - hw and ob.u_min <= cx + hw and ob.v_max >= cy - hh and ob.v_min <= cy + hh


def select_critical(obstacles: Sequence[Obstacle], cfg: AvoidanceConfig,
                    frame_w: int, frame_h: int, cx: float, cy: float) -> Optional[Obstacle]:
    """Nearest obstacle within the critical distance that overlaps the flight corridor."""
    hits = [ob for ob in obstacles
            if ob.depth_m <= cfg.critical_distance_m
            and in_corridor(ob, frame_w, frame_h, cx, cy, cfg.corridor_frac)]
    if not hits:
        return None
    return min(hits, key=lambda ob: ob.depth_m)


def escape_costs(ob: Obstacle, cx: float, cy: float, margin: float) -> dict:
    """Pixels the obstacle edge must move to clear the image centre, per sidestep direction."""
    costs = {
        Direction.LEFT: cx - ob.u_min + margin,
        Direction.RIGHT: ob.u_max - cx + margin,
        Direction.UP: cy - ob.v_min + margin,
        Direction.DOWN: ob.v_max - cy + margin,
    }
    costs = {k: max(0.0, float(v)) for k, v in costs.items()}
    if ob.grounded:
        # nothing to fly under
        costs[Direction.DOWN] = float("inf")
    return costs


def plan_escape(ob: Obstacle, frame_w: int, frame_h: int, cx: float, cy: float,
                margin: float = 0, lateral_speed: float = 1.0) -> AvoidanceCommand:
    """Cheapest sidestep; ties resolve in the order Right, Left, Up, Down."""
    costs = escape_costs(ob, cx, cy, margin)
    best = min(ESCAPE_ORDER, key=lambda k: (costs[k], ESCAPE_ORDER.index(k)))
    return AvoidanceCommand(best, lateral_speed, ob)


def temporal_filter(history: Sequence[AvoidanceCommand], current: AvoidanceCommand,
                    window: int, previous: Optional[AvoidanceCommand] = None) -> AvoidanceCommand:
    """
    Majority vote over the last ``window`` raw commands, ``current`` included.

    ``history`` holds earlier raw commands, oldest first. Until the window is
    full the result is Hold, unless ``current`` is Forward. Without a strict
    majority the previously emitted command is repeated.
    """
    votes = (list(history) + [current])[-window:]
    if len(votes) < window:
        if current.direction == Direction.FORWARD:
            return current
        return AvoidanceCommand(Direction.HOLD, 0.0, current.reason)
    tally = {}
    for c in votes:
        tally[c.direction] = tally.get(c.direction, 0) + 1
    winner, n = max(tally.items(), key=lambda kv: kv[1])
    if 2 * n > window:
        for c in reversed(votes):
            if c.direction == winner:
                return c
    if previous is not None:
        return previous
    return AvoidanceCommand(Direction.HOLD, 0.0, current.reason)


@dataclass
class AvoidanceState:
    """Per-vehicle decision memory."""

    window: int
    history: Deque[AvoidanceCommand] = field(default=None)
    last: Optional[AvoidanceCommand] = None
    last_raw: Optional[AvoidanceCommand] = None
    last_obstacles: list = field(default_factory=list)

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=max(self.window - 1, 1))


def decide(obstacles: Sequence[Obstacle], calib: StereoCalibration, cfg: AvoidanceConfig,
           frame_w: int, frame_h: int) -> AvoidanceCommand:
    """Unfiltered per-frame decision."""
    ob = select_critical(obstacles, cfg, frame_w, frame_h, calib.cx, calib.cy)
    if ob is None:
        return AvoidanceCommand(Direction.FORWARD, cfg.forward_speed)
    return plan_escape(ob, frame_w, frame_h, calib.cx, calib.cy, cfg.safety_margin_px, cfg.lateral_speed)


def avoidance_step(d: DisparityMap, calib: StereoCalibration, cfg: AvoidanceConfig,
                   state: Optional[AvoidanceState] = None) -> AvoidanceCommand:
    """
    One perception-decision cycle on a disparity map.

    Updates ``state`` in place and returns the filtered command.
    """
    if state is None:
        state = AvoidanceState(cfg.vote_window)
    det = detect_obstacles(d, calib, cfg.detection)
    raw = decide(det.obstacles, calib, cfg, d.width, d.height)
    out = temporal_filter(state.history, raw, cfg.vote_window, state.last)
    state.history.append(raw)
    state.last = out
    state.last_raw = raw
    state.last_obstacles = det.obstacles
    return out


class Avoider:
    """Stateful wrapper: ``Avoider(calib, cfg).step(disparity)``."""

    def __init__(self, calib: StereoCalibration, cfg: Optional[AvoidanceConfig] = None):
        self.calib = calib
        self.cfg = cfg or AvoidanceConfig()
        self.state = AvoidanceState(self.cfg.vote_window)

    def step(self, d: DisparityMap) -> AvoidanceCommand:
        return avoidance_step(d, self.calib, self.cfg, self.state)


def format_command(t: float, cmd: AvoidanceCommand, velocity) -> str:
    vx, vy, vz = velocity
    return f"t={t:.2f} cmd={cmd.direction.value} v=({vx:.2f},{vy:.2f},{vz:.2f})"
