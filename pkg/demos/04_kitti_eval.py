"""
Census against SAD on KITTI 2015 training frames.

Pass the training directory (the one holding image_2, image_3, disp_noc_0)
and optionally a frame count.
"""
import sys

from stereoavoid.bench import run_kitti, summary_table
from stereoavoid.config import PipelineConfig

if len(sys.argv) < 2:
    sys.exit("usage: 04_kitti_eval.py KITTI_TRAINING_DIR [FRAMES]")
root = sys.argv[1]
frames = int(sys.argv[2]) if len(sys.argv) > 2 else 20
reports = [run_kitti(root, PipelineConfig.for_cost(c), frames=frames, workers=4) for c in ("census", "sad")]
print(summary_table(reports), end="")
for r in reports:
    if r.seconds:
        print(f"{r.cost}: {sum(r.seconds) / len(r.seconds):.2f} s/frame")
