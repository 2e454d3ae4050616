"""Detect obstacles in a rendered disparity map through its U- and V-disparity projections."""
import sys

from stereoavoid.imgio import GrayImage, save_gray, save_rgb
from stereoavoid.sim import Box, Cylinder, Scene, VehicleState, default_calibration, render_ideal_disparity
from stereoavoid.uvmap import annotate, detect_obstacles, format_obstacle, map_image

out = sys.argv[1] if len(sys.argv) > 1 else "."
calib = default_calibration()
scene = Scene((Box((7.0, 1.5, 1.0), (1.5, 1.5, 2.0)), Cylinder(10.0, -2.0, 0.5, 3.0)), goal=(30.0, 0.0, 1.0))
d = render_ideal_disparity(scene, VehicleState((0.0, 0.0, 1.0)), calib)

det = detect_obstacles(d, calib)
if det.ground is not None:
    print(f"ground line: d = {det.ground.slope:.3f} * v + {det.ground.intercept:.2f}")
for ob in det.obstacles:
    print(format_obstacle(ob), f"width={ob.width_m:.2f}m height={ob.height_m:.2f}m grounded={ob.grounded}")

save_gray(GrayImage(map_image(det.umap.counts)), f"{out}/umap.png")
save_gray(GrayImage(map_image(det.vmap.counts)), f"{out}/vmap.png")
save_rgb(annotate(d, det, calib.d_max), f"{out}/annotated.png")
