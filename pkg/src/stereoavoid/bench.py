"""
KITTI Stereo 2015 evaluation: disparity density and the 3 px correctness rate.

Expected layout under the dataset root (training split)::

    image_2/000000_10.png    left colour image
    image_3/000000_10.png    right colour image
    disp_noc_0/000000_10.png non-occluded ground truth, 16-bit (value / 256)

Every frame is cropped to a fixed region of interest before matching, so the
ground truth and the estimate share one raster.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .config import PipelineConfig
from .imgio import DecodeError, DisparityMap, crop_disparity, crop_roi, load_gray, load_kitti_disparity
from .sgm import compute_disparity

log = logging.getLogger(__name__)

BAD_PIXEL_THRESHOLD = 3.0
DEFAULT_ROI = (0, 0, 640, 360)


@dataclass(frozen=True)
class EvalResult:
    density: float
    correct: float
    evaluated_pixels: int
    frame_id: str = ""


def evaluate(est: DisparityMap, gt: DisparityMap, frame_id: str = "") -> EvalResult:
    """
    Compare an estimate against ground truth of the same size.

    Args:
        est: estimated disparity.
        gt: ground truth, already cropped to the estimate's region.
        frame_id: label carried into the result.

    Returns:
        density = pixels valid in both / pixels valid in ``gt``; correct =
        share of the jointly valid pixels whose error is below 3 px. Both
        are 0 when their denominator is empty.
    """
    if est.shape != gt.shape:
        raise IndexError(f"estimate {est.shape} and ground truth {gt.shape} differ in size")
    both = est.valid & gt.valid
    n_gt = int(gt.valid.sum())
    n = int(both.sum())
    err = np.abs(est.values[both].astype(np.float64) - gt.values[both].astype(np.float64))
    n_ok = int((err < BAD_PIXEL_THRESHOLD).sum())
    density = n / n_gt if n_gt else 0.0
    correct = n_ok / n if n else 0.0
    return EvalResult(density, correct, n, frame_id)


@dataclass
class KittiReport:
    """Per-frame results for one pipeline configuration."""

    cost: str
    frames: List[EvalResult] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    # wall time per evaluated frame; kept out of the written report
    seconds: List[float] = field(default_factory=list)

    @property
    def mean_density(self) -> float:
        return float(np.mean([r.density for r in self.frames])) if self.frames else 0.0

    @property
    def mean_correct(self) -> float:
        return float(np.mean([r.correct for r in self.frames])) if self.frames else 0.0

    def to_text(self) -> str:
        rows = [("frame", "density", "correct", "pixels")]
        for r in self.frames:
            rows.append((r.frame_id, f"{100 * r.density:.2f}", f"{100 * r.correct:.2f}", str(r.evaluated_pixels)))
        rows.append(("mean", f"{100 * self.mean_density:.2f}", f"{100 * self.mean_correct:.2f}",
                     str(sum(r.evaluated_pixels for r in self.frames))))
        widths = [max(len(row[i]) for row in rows) for i in range(4)]
        lines = [f"# cost={self.cost} frames={len(self.frames)} skipped={len(self.skipped)}"]
        for row in rows:
            lines.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))))
        for msg in self.skipped:
            lines.append(f"# skipped {msg}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cost", "frame", "density", "correct", "evaluated_pixels"])
        for r in self.frames:
            w.writerow([self.cost, r.frame_id, f"{r.density:.6f}", f"{r.correct:.6f}", r.evaluated_pixels])
        return buf.getvalue()


def summary_table(reports: Sequence[KittiReport]) -> str:
    """One row per cost function: mean density and correct pixels in percent."""
    lines = [f"{'cost':<8}{'density %':>11}{'correct %':>11}{'frames':>8}"]
    for rep in reports:
        lines.append(f"{rep.cost:<8}{100 * rep.mean_density:>11.1f}{100 * rep.mean_correct:>11.1f}{len(rep.frames):>8d}")
    return "\n".join(lines) + "\n"


def write_reports(reports: Sequence[KittiReport], path) -> None:
    """Aligned text to ``path`` and the CSV next to it (``.csv`` suffix)."""
    text = "".join(r.to_text() + "\n" for r in reports) + summary_table(reports)
    with open(path, "w") as f:
        f.write(text)
    root, _ = os.path.splitext(str(path))
    with open(root + ".csv", "w") as f:
        for i, r in enumerate(reports):
            body = r.to_csv()
            f.write(body if i == 0 else body.split("\n", 1)[1])


def list_frames(dataset_dir) -> List[str]:
    """Frame ids (``000000_10``) with a left image, in sorted order."""
    left_dir = os.path.join(dataset_dir, "image_2")
    if not os.path.isdir(left_dir):
        raise FileNotFoundError(f"no image_2 directory under {dataset_dir}")
    return sorted(os.path.splitext(n)[0] for n in os.listdir(left_dir) if n.endswith("_10.png"))


def _eval_frame(args):
    dataset_dir, frame_id, cfg, roi = args
    paths = [os.path.join(dataset_dir, sub, frame_id + ".png") for sub in ("image_2", "image_3", "disp_noc_0")]
    missing = [p for p in paths if not os.path.exists(p)]
    if missing:
        return frame_id, None, f"{frame_id}: missing {', '.join(os.path.relpath(p, dataset_dir) for p in missing)}", 0.0
    try:
        left = crop_roi(load_gray(paths[0], allow_color=True), *roi)
        right = crop_roi(load_gray(paths[1], allow_color=True), *roi)
        gt = crop_disparity(load_kitti_disparity(paths[2]), *roi)
    except (DecodeError, IndexError, OSError) as e:
        return frame_id, None, f"{frame_id}: {e}", 0.0
    t0 = time.perf_counter()
    est = compute_disparity(left, right, cfg)
    dt = time.perf_counter() - t0
    return frame_id, evaluate(est, gt, frame_id), None, dt


def run_kitti(dataset_dir, cfg: Optional[PipelineConfig] = None, frames: Union[str, int, Sequence[str]] = "all",
              roi: tuple = DEFAULT_ROI, workers: int = 1) -> KittiReport:
    """
    Evaluate the pipeline over KITTI training frames.

    Args:
        dataset_dir: KITTI 2015 training directory.
        cfg: pipeline configuration; census defaults when omitted.
        frames: ``"all"``, the first ``n`` frames, or explicit frame ids.
        roi: ``(x0, y0, width, height)`` crop applied to every frame.
        workers: process count; results are ordered by frame id regardless.

    Returns:
        A :class:`KittiReport`. Frames with missing or unreadable files are
        listed in ``skipped`` and logged as warnings.
    """
    cfg = cfg or PipelineConfig()
    if isinstance(frames, str):
        if frames != "all":
            raise ValueError(f"frames must be 'all', a count or a list, got {frames!r}")
        ids = list_frames(dataset_dir)
    elif isinstance(frames, int):
        ids = list_frames(dataset_dir)[:frames]
    else:
        ids = sorted(frames)
    jobs = [(str(dataset_dir), fid, cfg, tuple(roi)) for fid in ids]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_eval_frame, jobs))
    else:
        results = [_eval_frame(j) for j in jobs]

    report = KittiReport(cfg.cost)
    for fid, res, warning, dt in results:
        if res is None:
            log.warning("skipping %s", warning)
            report.skipped.append(warning)
        else:
            report.frames.append(res)
            report.seconds.append(dt)
    return report
