"""Render a textured stereo pair, match it with census SGM and compare to ground truth."""
import sys

from stereoavoid.bench import evaluate
from stereoavoid.config import PipelineConfig
from stereoavoid.imgio import save_gray, write_disparity
from stereoavoid.rectify import StereoCalibration
from stereoavoid.sgm import compute_disparity
from stereoavoid.sim import Box, Scene, VehicleState, render_ideal_disparity, render_stereo_pair

out = sys.argv[1] if len(sys.argv) > 1 else "."
calib = StereoCalibration(0.2, 200.0, 160.0, 90.0, 32)
scene = Scene((Box((6.0, 0.0, 1.0), (2.0, 2.0, 2.0)), Box((9.0, 2.5, 1.5), (1.0, 1.0, 3.0))),
              goal=(20.0, 0.0, 1.0))
state = VehicleState((0.0, 0.0, 1.0))

left, right = render_stereo_pair(scene, state, calib)
save_gray(left, f"{out}/left.png")
save_gray(right, f"{out}/right.png")
gt = render_ideal_disparity(scene, state, calib)

for cost in ("census", "sad"):
    d = compute_disparity(left, right, PipelineConfig.for_cost(cost, d_max=32))
    write_disparity(d, f"{out}/disp_{cost}.png", "colorized")
    r = evaluate(d, gt)
    print(f"{cost:6s} density {100 * r.density:5.1f}%  correct {100 * r.correct:5.1f}%  "
          f"centre d={d.values[90, 160]} (truth {gt.values[90, 160]})")
print("front face depth from d=8:", calib.focal_px * calib.baseline_m / 8, "m")
print("images written to", out)
