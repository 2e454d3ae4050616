"""Fly the three reference scenes with and without avoidance and summarise each episode."""
import sys

from stereoavoid.config import PipelineConfig
from stereoavoid.sim import default_calibration, empty_scene, run_episode, single_box_scene, staggered_boxes_scene

mode = sys.argv[1] if len(sys.argv) > 1 else "ideal"
calib = default_calibration()
cfg = PipelineConfig(d_max=calib.d_max, engine="streaming") if mode == "full" else None

runs = [("empty", empty_scene(), True), ("box", single_box_scene(), True),
        ("box, no avoidance", single_box_scene(), False), ("staggered", staggered_boxes_scene(), True)]
for name, scene, avoid in runs:
    rep = run_episode(scene, calib, cfg, mode=mode, avoidance=avoid)
    used = sorted(set(rep.commands))
    print(f"{name:18s} goal={rep.goal_reached!s:5s} collision={rep.collision!s:5s} "
          f"clearance={rep.min_clearance:6.2f} m  lateral={rep.max_lateral_offset():.2f} m  "
          f"commands={','.join(used)}  ({rep.wall_time_s:.1f} s)")
