"""Command line: ``gaugescout {bench,detect,scene,annotate} ...``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import ConfigError, ExperimentConfig, default_config, make_trial, run_column, run_episode, run_grid, write_outputs
from .detect_background import BackgroundAnnotation, make_annotation
from .imgcore import write_png
from .ptzsim import PtzState, SimulatedCamera
from .scene import SceneSpec, generate_scene


class UsageError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = default_config()
    over = {}
    if getattr(args, "trials", None) is not None:
        over["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        over["base_seed"] = args.seed
    if over:
        cfg = ExperimentConfig.from_dict({**cfg.data, **over})
    return cfg


def cmd_bench_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir or cfg.out_dir)
    log = (lambda col: print(f"  {col[0].shape} {col[0].diameter:g}px: " +
                             ", ".join(f"{c.method} {'-' if c.skipped else f'{c.successes}/{c.trials}'}" for c in col),
                             file=sys.stderr, flush=True)) if not args.quiet else None
    table = run_grid(cfg, workers=args.workers, progress=log)
    p_csv, p_md = write_outputs(table, out)
    print(table.to_markdown())
    print(f"wrote {p_csv} and {p_md}")
    return 0


def cmd_bench_cell(args) -> int:
    cfg = _config(args)
    c = run_column(cfg, args.shape, args.diameter, [args.method])[0]
    if c.skipped:
        print(f"{args.shape} {args.diameter:g}px {args.method}: skipped")
        return 0
    print(f"{c.shape} {c.diameter:g}px {c.method}: {c.successes}/{c.trials} mean_iou={c.mean_iou:.3f} "
          f"mean_ms={c.mean_ms:.1f}")
    for t, r in enumerate(c.reasons):
        if r:
            print(f"  trial {t}: {r}")
    return 0


def cmd_bench_defaults(args) -> int:
    print(default_config().to_json())
    return 0


def cmd_detect(args) -> int:
    cfg = _config(args)
    if args.scene:
        scene = SceneSpec.load(args.scene)
        cfg = ExperimentConfig.from_dict({**cfg.data, "base_seed": args.seed or 0})
        from .ptzsim import perturb_pose
        import math
        pn = cfg.data["pose_noise"]
        seed = cfg.base_seed
        prepared = (seed, scene, perturb_pose(scene.nominal_pose, seed, pn["sigma_xy"], math.radians(pn["sigma_yaw_deg"])))
        shape, diameter = scene.shape, scene.diameter_at_wide
    else:
        if args.shape is None or args.diameter is None:
            raise UsageError("detect needs --scene or both --shape and --diameter")
        shape, diameter = args.shape, args.diameter
        prepared = make_trial(cfg, shape, diameter, 0)
    ann = None
    if args.annotation_dir and args.method == "background":
        ann = BackgroundAnnotation.load(Path(args.annotation_dir) / "annotation.json")
    ep = run_episode(cfg, shape, diameter, args.method, 0, prepared, annotation=ann, keep=True)
    seed, scene, pose = prepared
    print(f"method={args.method} shape={shape} diameter={diameter:g} seed={seed}")
    print(f"true pose: x={pose.x:.3f} y={pose.y:.3f} yaw={pose.yaw:.4f} (nominal x={scene.nominal_pose.x:.3f} "
          f"y={scene.nominal_pose.y:.3f})")
    res = ep.result
    if res is not None:
        print(f"found = {str(res.found).lower()}  confidence={res.confidence:.2f}  reason={res.reason}")
        if res.region is not None:
            r = res.region
            print(f"region = ({r.x:.1f}, {r.y:.1f}, {r.w:.1f}, {r.h:.1f}) at zoom {res.ptz.zoom:.2f}")
    else:
        print(f"found = false  error={ep.reason}")
    print(f"final IoU = {ep.iou:.3f}  success = {str(ep.found).lower()}  ({ep.ms:.0f} ms)")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for k, (ptz, img) in enumerate(ep.frames or []):
            write_png(out / f"frame{k:02d}_z{ptz.zoom:.2f}.png", img)
        print(f"dumped {len(ep.frames or [])} views to {out}")
    return 0


def cmd_scene_gen(args) -> int:
    cfg = _config(args)
    sc = cfg.data["scene"]
    scene, gt = generate_scene(args.seed or 0, args.shape, args.diameter, sc["clutter_level"],
                               cfg.camera_config(), sc["standoff"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene.save(out / "scene.json", out / "wall.png")
    cam = SimulatedCamera(scene, scene.nominal_pose, scene.camera, PtzState(), cfg.sensor_model(), seed=args.seed or 0)
    write_png(out / "wide.png", cam.capture())
    r = gt.region("m0", scene.nominal_pose)
    print(f"wrote {out / 'scene.json'}; meter m0 at nominal pose: ({r.x:.1f}, {r.y:.1f}, {r.w:.1f}, {r.h:.1f})")
    return 0


def cmd_annotate_make(args) -> int:
    cfg = _config(args)
    scene = SceneSpec.load(args.scene)
    ann = make_annotation(scene, args.meter_id, sensor=cfg.sensor_model(), seed=[args.seed or 0, 2])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ann.save(out / "annotation.json")
    r = ann.region(args.meter_id)
    print(f"wrote {out / 'annotation.json'}: {args.meter_id} at ({r.x:.1f}, {r.y:.1f}, {r.w:.1f}, {r.h:.1f}), "
          f"{len(ann.features)} surround features")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gaugescout", description="PTZ meter detection experiments")
    sub = p.add_subparsers(dest="cmd", required=True)

    bench = sub.add_parser("bench", help="detection-rate experiments").add_subparsers(dest="sub", required=True)
    b = bench.add_parser("run", help="run the full grid from a config file")
    b.add_argument("--config", required=True)
    b.add_argument("--out-dir")
    b.add_argument("--workers", type=int)
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(fn=cmd_bench_run)
    b = bench.add_parser("cell", help="run one table cell")
    b.add_argument("--config")
    b.add_argument("--shape", choices=["circle", "rect"], required=True)
    b.add_argument("--diameter", type=float, required=True)
    b.add_argument("--method", choices=["shape", "texture", "background"], required=True)
    b.add_argument("--trials", type=int)
    b.add_argument("--seed", type=int, help="base seed")
    b.set_defaults(fn=cmd_bench_cell)
    b = bench.add_parser("defaults", help="print the default config")
    b.set_defaults(fn=cmd_bench_defaults)

    d = sub.add_parser("detect", help="one detection episode, dumping the captured views")
    d.add_argument("--method", choices=["shape", "texture", "background"], required=True)
    d.add_argument("--scene", help="scene.json from `scene gen`")
    d.add_argument("--shape", choices=["circle", "rect"])
    d.add_argument("--diameter", type=float)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--config")
    d.add_argument("--annotation-dir")
    d.add_argument("--out-dir")
    d.set_defaults(fn=cmd_detect)

    s = sub.add_parser("scene", help="synthetic scenes").add_subparsers(dest="sub", required=True)
    g = s.add_parser("gen", help="write a scene, its wall texture and the nominal wide view")
    g.add_argument("--shape", choices=["circle", "rect"], default="circle")
    g.add_argument("--diameter", type=float, default=120.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_scene_gen)

    a = sub.add_parser("annotate", help="background annotations").add_subparsers(dest="sub", required=True)
    m = a.add_parser("make", help="annotate a simulated wide shot of a scene")
    m.add_argument("--scene", required=True)
    m.add_argument("--meter-id", default="m0")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--config")
    m.add_argument("--out", required=True)
    m.set_defaults(fn=cmd_annotate_make)
    return p


def main(argv=None) -> int:
    p = build_parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
