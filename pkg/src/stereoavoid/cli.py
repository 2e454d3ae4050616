"""
Command-line front end.

Subcommands: ``disparity``, ``detect``, ``simulate`` and ``eval-kitti``.
Exit codes: 0 success, 1 usage or configuration error, 2 I/O error. The
resolved configuration and all diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys

import numpy as np

from .config import ConfigError, PipelineConfig, parse_config

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2

log = logging.getLogger("stereoavoid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for I/O here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _add_pipeline_args(p):
    g = p.add_argument_group("matching pipeline")
    g.add_argument("--config", help="key = value configuration file")
    g.add_argument("--cost", choices=["census", "sad"])
    g.add_argument("--dmax", type=int, help="number of disparity candidates")
    g.add_argument("--p1", type=int)
    g.add_argument("--p2", type=int)
    g.add_argument("--radius", type=int, help="support window radius")
    g.add_argument("--paths", type=int, choices=[4, 8])
    g.add_argument("--engine", choices=["reference", "streaming"])
    g.add_argument("--lr-tol", type=int)
    g.add_argument("--median-k", type=int)


def _pipeline_config(args) -> PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("cost", "p1", "p2", "radius", "paths", "engine", "lr_tol", "median_k")}
    overrides["d_max"] = getattr(args, "dmax", None)
    for k in ("rect_left", "rect_right"):
        if getattr(args, k, None) is not None:
            overrides[k] = getattr(args, k)
    cfg = parse_config(overrides, getattr(args, "config", None))
    if getattr(args, "no_rectify", False):
        cfg = PipelineConfig(**{**cfg.__dict__, "rect_left": None, "rect_right": None})
    log.info("config: %s", cfg.describe())
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stereoavoid", description="Stereo disparity, U/V obstacle detection and avoidance.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("disparity", help="compute a disparity map from a stereo pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--mode", choices=["raw16", "colorized"], default="raw16")
    p.add_argument("--rect-left", help="left rectification map (.rmap)")
    p.add_argument("--rect-right", help="right rectification map (.rmap)")
    p.add_argument("--no-rectify", action="store_true", help="ignore maps named in the config file")
    _add_pipeline_args(p)

    p = sub.add_parser("detect", help="find obstacles in a 16-bit disparity PNG")
    p.add_argument("--disparity", required=True)
    p.add_argument("--dmax", type=int, help="histogram range; default covers the map")
    p.add_argument("--focal", type=float, help="focal length in pixels (default: width / 2)")
    p.add_argument("--baseline", type=float, default=0.2, help="baseline in metres")
    p.add_argument("--threshold", type=float, default=12, help="U/V-map count threshold")
    p.add_argument("--umap-out")
    p.add_argument("--vmap-out")
    p.add_argument("--annotate-out")

    p = sub.add_parser("simulate", help="fly a closed-loop avoidance episode")
    p.add_argument("--scene", help="scene file; default is a single box 10 m ahead")
    p.add_argument("--mode", choices=["ideal", "full"], default="ideal")
    p.add_argument("--max-t", type=float, default=30.0)
    p.add_argument("--no-avoid", action="store_true", help="control run: always fly forward")
    p.add_argument("--headless", action="store_true", help="print one command line per frame")
    p.add_argument("--report", help="write the episode report here")
    p.add_argument("--frames-dir", help="write colour disparity PNGs per frame")
    p.add_argument("--critical-distance", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=7, help="texture seed for full mode")
    _add_pipeline_args(p)

    p = sub.add_parser("eval-kitti", help="density and 3 px correctness on KITTI 2015 training")
    p.add_argument("--dir", required=True, help="KITTI training directory")
    p.add_argument("--frames", default="all", help="'all' or the number of leading frames")
    p.add_argument("--report", help="text report path; a .csv is written next to it")
    p.add_argument("--roi", type=int, nargs=4, metavar=("X0", "Y0", "W", "H"), default=[0, 0, 640, 360])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--both", action="store_true", help="evaluate census and SAD for the two-row summary")
    _add_pipeline_args(p)
    return parser


def cmd_disparity(args) -> int:
    from .imgio import load_gray, write_disparity
    from .sgm import compute_disparity

    cfg = _pipeline_config(args)
    left = load_gray(args.left)
    right = load_gray(args.right)
    d = compute_disparity(left, right, cfg)
    write_disparity(d, args.out, args.mode, cfg.d_max)
    log.info("valid pixels: %d of %d", d.num_valid(), d.values.size)
    return EXIT_OK


def cmd_detect(args) -> int:
    from .imgio import load_kitti_disparity, save_gray, save_rgb
    from .rectify import StereoCalibration
    from .uvmap import DetectionConfig, annotate, detect_obstacles, format_obstacle, map_image
    from .imgio import GrayImage

    d = load_kitti_disparity(args.disparity)
    top = int(np.floor(d.values[d.valid].max())) + 1 if d.valid.any() else 1
    d_max = args.dmax or max(60, top)
    if top > d_max:
        raise UsageError(f"--dmax {d_max} is below the largest disparity in the map ({top - 1})")
    H, W = d.shape
    focal = args.focal or W / 2.0
    calib = StereoCalibration(args.baseline, focal, W / 2.0, H / 2.0, d_max)
    log.info("calibration: f=%.1f b=%.3f cx=%.1f cy=%.1f d_max=%d", focal, args.baseline, W / 2.0, H / 2.0, d_max)
    det = detect_obstacles(d, calib, DetectionConfig(count_threshold=args.threshold))
    if det.ground is not None:
        log.info("ground: d = %.4f * v + %.3f", det.ground.slope, det.ground.intercept)
    for ob in det.obstacles:
        print(format_obstacle(ob))
    if args.umap_out:
        save_gray(GrayImage(map_image(det.umap.counts)), args.umap_out)
    if args.vmap_out:
        save_gray(GrayImage(map_image(det.vmap.counts)), args.vmap_out)
    if args.annotate_out:
        save_rgb(annotate(d, det, d_max), args.annotate_out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .avoid import AvoidanceConfig
    from .sim import default_calibration, load_scene, run_episode, single_box_scene, SimConfig

    if args.scene:
        try:
            scene = load_scene(args.scene)
        except ValueError as e:
            raise UsageError(str(e)) from None
    else:
        scene = single_box_scene()
    calib = default_calibration()
    cfg = _pipeline_config(args) if args.mode == "full" else None
    avoid_cfg = AvoidanceConfig(critical_distance_m=args.critical_distance)
    log.info("simulate: mode=%s max_t=%g avoidance=%s critical_distance=%g",
             args.mode, args.max_t, "off" if args.no_avoid else "on", args.critical_distance)
    on_command = print if args.headless else None
    rep = run_episode(scene, calib, cfg, avoid_cfg, max_t=args.max_t, mode=args.mode,
                      sim=SimConfig(texture_seed=args.seed), avoidance=not args.no_avoid,
                      frames_dir=args.frames_dir, on_command=on_command)
    text = rep.to_text()
    if args.report:
        with open(args.report, "w") as f:
            f.write(text)
    elif not args.headless:
        sys.stdout.write(text)
    clear = "inf" if math.isinf(rep.min_clearance) else f"{rep.min_clearance:.3f}"
    log.info("goal_reached=%s collision=%s min_clearance=%s wall=%.2fs",
             rep.goal_reached, rep.collision, clear, rep.wall_time_s)
    return EXIT_OK


def cmd_eval_kitti(args) -> int:
    from .bench import run_kitti, summary_table, write_reports

    if args.frames == "all":
        frames = "all"
    else:
        try:
            frames = int(args.frames)
        except ValueError:
            raise UsageError(f"--frames must be 'all' or an integer, got {args.frames!r}") from None
    cfg = _pipeline_config(args)
    configs = [cfg]
    if args.both:
        other = "sad" if cfg.cost == "census" else "census"
        configs.append(parse_config({"cost": other, "d_max": cfg.d_max}, None))
    reports = []
    for c in configs:
        rep = run_kitti(args.dir, c, frames, tuple(args.roi), args.workers)
        if rep.seconds:
            log.info("%s: %d frames, %.2f s/frame", c.cost, len(rep.frames), float(np.mean(rep.seconds)))
        reports.append(rep)
    if args.report:
        write_reports(reports, args.report)
    sys.stdout.write(summary_table(reports))
    return EXIT_OK


COMMANDS = {
    "disparity": cmd_disparity,
    "detect": cmd_detect,
    "simulate": cmd_simulate,
    "eval-kitti": cmd_eval_kitti,
}


def main(argv=None) -> int:
    from .imgio import DecodeError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (IndexError, ValueError) as e:
        # size mismatches between inputs, bad scene or map contents
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
