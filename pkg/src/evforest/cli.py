"""Command-line entry point: ``evforest <subcommand> [flags]``.

Exit status: 0 success, 1 validation or I/O error, 2 tensor comparison mismatch.
Any subcommand accepts ``--config file.json`` whose keys are that
subcommand's flag names (dashes or underscores); explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from evforest import backend, bench, containers
from evforest import events as ev
from evforest.errors import ComparisonMismatch, ValidationError
from evforest.render import (CameraPose, RenderConfig, load_trajectory, make_trajectory,
                             render_frames, render_intensity, save_trajectory)
from evforest.reward import (CommandInput, RewardTerms, RewardWeights, evaluate_episode,
                             trajectory_rewards, write_episode_report)
from evforest.scene import (PoissonConfig, WorldBox, load_scene, sample_forest, save_scene,
                            student_distance_map, teacher_distance_map)

logger = logging.getLogger("evforest")


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}", field=name) from None
    if n is not None and len(vals) != n:
        raise ValidationError(f"expected {n} numbers, got {len(vals)}", field=name)
    return vals


def _fmt(v):
    return f"{v:.9g}"


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _contrast_args(p):
    p.add_argument("--contrast", type=float, required=False, help="contrast threshold (log units)")
    p.add_argument("--offset", type=float, default=0.0, help="reference offset (log units)")
    p.add_argument("--direction", type=int, default=1, choices=(1, -1),
                   help="sign of the virtual initial crossing")
    p.add_argument("--bins", type=int, default=5, help="temporal bins")
    p.add_argument("--epsilon", type=float, default=1e-3, help="log offset for u8 input")


def _contrast_cfg(args):
    if args.contrast is None:
        raise ValidationError("--contrast is required", field="contrast")
    return ev.ContrastConfig(args.contrast, args.offset, args.direction)


# subcommands


def cmd_gen_scene(args):
    w, d = args.world_size
    world = WorldBox(0.0, w, 0.0, d, args.world_height)
    cfg = PoissonConfig(delta=args.delta, r_min=args.r_min, r_max=args.r_max, world=world,
                        min_clearance=args.clearance)
    scene = sample_forest(cfg, args.seed)
    save_scene(scene, args.out)
    logger.info("wrote %d trees to %s", len(scene), args.out)
    return 0


def cmd_gen_trajectory(args):
    waypoints = None
    if args.waypoints:
        pts = [_floats(p, name="waypoints") for p in args.waypoints.split(";") if p.strip()]
        waypoints = np.asarray(pts)
    traj = make_trajectory(args.kind, speed=args.speed, frame_rate=args.frame_rate,
                           start=_floats(args.start, 3, "start"), yaw=math.radians(args.yaw_deg),
                           length=args.length, curvature=args.curvature, waypoints=waypoints)
    save_trajectory(traj, args.out)
    return 0


def _render_cfg(args):
    return RenderConfig(args.width, args.height, math.radians(args.fov_deg), args.max_range,
                        args.epsilon)


def cmd_render(args):
    scene = load_scene(args.scene)
    traj = load_trajectory(args.trajectory)
    cfg = _render_cfg(args)
    out = _out_dir(args.out)
    stack, depth = render_frames(scene, traj, cfg)
    if args.intensity_format == "u8":
        containers.write_evf(out / "intensity.evf", render_intensity(scene, traj, cfg),
                             containers.DTYPE_U8_INTENSITY, traj.frame_period)
    else:
        containers.write_evf(out / "intensity.evf", stack.frames, containers.DTYPE_F32_LOG,
                             traj.frame_period)
    containers.write_evf(out / "depth.evf", depth.depths, containers.DTYPE_F32_DEPTH, traj.frame_period)
    return 0


def _load_stack(args):
    try:
        return containers.load_log_stack(args.input, args.epsilon)
    except ValidationError as exc:
        raise ValidationError(str(exc.args[0]).split(" | ")[0], field=exc.field,
                              source=args.input) from None


def cmd_events(args):
    stack = _load_stack(args)
    tensor = ev.vectorized_event_tensor(stack, _contrast_cfg(args), ev.BinningConfig(args.bins))
    containers.write_evt(args.out, tensor)
    return 0


def cmd_oracle(args):
    stack = _load_stack(args)
    bins = ev.BinningConfig(args.bins)
    stream = ev.oracle_event_stream(stack, _contrast_cfg(args))
    tensor = ev.accumulate_tensor(stream, stack.frames.shape[0], bins)
    out = _out_dir(args.out)
    containers.write_evs(out / "events.evs", stream)
    containers.write_evt(out / "tensor.evt", tensor)
    return 0


def cmd_compare(args):
    lhs = containers.read_evt(args.lhs)
    rhs = containers.read_evt(args.rhs)
    try:
        report = ev.diff_tensors(lhs, rhs)
    except ValidationError as exc:
        raise ValidationError(str(exc), field="counts", source=f"{args.lhs}, {args.rhs}") from None
    same_bins = bool(np.array_equal(lhs.bin_boundaries, rhs.bin_boundaries))
    text = json.dumps({**report.to_dict(), "bin_boundaries_equal": same_bins}, sort_keys=True)
    _emit(args, text)
    return 0 if report.equal and same_bins else 2


def _emit(args, text):
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def cmd_distmap(args):
    span = math.radians(args.span_deg)
    rows = []
    if args.depth:
        frames, code, _ = containers.read_evf(args.depth)
        if code != containers.DTYPE_F32_DEPTH:
            raise ValidationError("expected an EVF1 depth file (dtype 2)", field="dtype",
                                  source=args.depth)
        if not 0 <= args.frame < frames.shape[0]:
            raise ValidationError(f"frame index out of range 0..{frames.shape[0] - 1}", field="frame",
                                  source=args.depth)
        m = student_distance_map(frames[args.frame], math.radians(args.fov_deg), args.num_bins,
                                 span, args.max_range)
        for b, name in enumerate(("top", "middle", "bottom")):
            rows += [(name, i, m.bands[b, i]) for i in range(args.num_bins)]
    elif args.scene:
        if args.pose is None:
            raise ValidationError("--pose x,y,z,yaw_deg,pitch_deg,roll_deg is required with --scene",
                                  field="pose")
        x, y, z, yaw, pitch, roll = _floats(args.pose, 6, "pose")
        pose = CameraPose((x, y, z), math.radians(yaw), math.radians(pitch), math.radians(roll))
        m = teacher_distance_map(load_scene(args.scene), pose, args.num_bins, span, args.max_range)
        rows = [("teacher", i, v) for i, v in enumerate(m.bins)]
    else:
        raise ValidationError("give either --scene with --pose or --depth", field="scene/depth")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("band", "bin", "distance_m"))
        for name, i, v in rows:
            w.writerow((name, i, _fmt(v)))
    return 0


def _load_weights(text):
    if not text:
        return RewardWeights()
    source = None
    if os.path.exists(text):
        source = text
        text = Path(text).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"weights are not valid JSON: {exc}", field="weights", source=source) from None
    if not isinstance(d, dict):
        raise ValidationError("weights must be a JSON object", field="weights", source=source)
    return RewardWeights.from_dict(d, source=source)


def cmd_reward_eval(args):
    scene = load_scene(args.scene)
    traj = load_trajectory(args.trajectory)
    cmd = CommandInput(_floats(args.command, 3, "command"))
    weights = _load_weights(args.weights)
    out = _out_dir(args.out)
    terms = trajectory_rewards(scene, traj, cmd, weights, quad_radius=args.quad_radius,
                               max_range=args.max_range)
    with open(out / "rewards.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "time", "total") + RewardTerms.COMPONENTS)
        for i, t in enumerate(terms):
            w.writerow([i, _fmt(traj.times[i]), _fmt(t.total)] +
                       [_fmt(getattr(t, c)) for c in RewardTerms.COMPONENTS])
    stats = evaluate_episode(scene, traj, cmd, args.quad_radius, args.threshold)
    write_episode_report([(args.episode_id, scene.seed, args.delta, stats)], out / "episode.csv")
    with open(out / "weights.json", "w") as fh:
        json.dump(weights.__dict__, fh, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_bench(args):
    counts = [int(v) for v in _floats(args.env_counts, name="env_counts")]
    cfg = bench.BenchConfig(env_counts=tuple(counts), height=args.height, width=args.width,
                            frames=args.frames, contrast=args.contrast or 0.2, num_bins=args.bins,
                            repetitions=args.reps, seed=args.seed)
    report = bench.run_benchmark(cfg)
    bench.write_report(report, args.out)
    bench.write_sidecar(report, str(Path(args.out).with_suffix(".json")))
    for r in report.rows:
        print(f"{r.method:10s} envs={r.env_count:3d} mean={r.mean_runtime_s:.4f}s "
              f"max={r.max_runtime_s:.4f}s peak={r.peak_bytes}B correct={r.correct}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag values for this subcommand")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="OpenMP threads for compiled kernels")
    common.add_argument("--backend", choices=("compiled", "python"), default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="evforest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", parents=[common], help="sample a Poisson forest")
    p.add_argument("--delta", type=float, default=0.04, help="trees per square meter")
    p.add_argument("--world-size", type=float, nargs=2, default=(100.0, 100.0), metavar=("X", "Y"))
    p.add_argument("--world-height", type=float, default=10.0)
    p.add_argument("--r-min", type=float, default=0.2)
    p.add_argument("--r-max", type=float, default=0.5)
    p.add_argument("--clearance", type=float, default=2.0)
    p.add_argument("--out", default="scene.json")
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("gen-trajectory", parents=[common], help="write a trajectory CSV")
    p.add_argument("--kind", choices=("straight", "arc", "spline"), default="straight")
    p.add_argument("--length", type=float, default=45.0)
    p.add_argument("--speed", type=float, default=5.0)
    p.add_argument("--frame-rate", type=float, default=100.0)
    p.add_argument("--start", default="0,50,1.5")
    p.add_argument("--yaw-deg", type=float, default=0.0)
    p.add_argument("--curvature", type=float, default=0.0)
    p.add_argument("--waypoints", default=None, help="x,y[,z];x,y[,z];...")
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(func=cmd_gen_trajectory)

    p = sub.add_parser("render", parents=[common], help="render intensity and depth containers")
    p.add_argument("--scene", required=False)
    p.add_argument("--trajectory", required=False)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--fov-deg", type=float, default=90.0)
    p.add_argument("--max-range", type=float, default=50.0)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--intensity-format", choices=("log", "u8"), default="log")
    p.add_argument("--out", default="render")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("events", parents=[common], help="EVF1 -> EVT1 via band crossings")
    p.add_argument("--input", required=False)
    _contrast_args(p)
    p.add_argument("--out", default="tensor.evt")
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("oracle", parents=[common], help="EVF1 -> EVS1 + EVT1 via reference levels")
    p.add_argument("--input", required=False)
    _contrast_args(p)
    p.add_argument("--out", default="oracle")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", parents=[common], help="diff two EVT1 files")
    p.add_argument("lhs")
    p.add_argument("rhs")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("distmap", parents=[common], help="teacher or student distance map CSV")
    p.add_argument("--scene")
    p.add_argument("--pose", help="x,y,z,yaw_deg,pitch_deg,roll_deg")
    p.add_argument("--depth", help="EVF1 depth container")
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--fov-deg", type=float, default=90.0)
    p.add_argument("--num-bins", type=int, default=10)
    p.add_argument("--span-deg", type=float, default=11.25)
    p.add_argument("--max-range", type=float, default=50.0)
    p.add_argument("--out", default="distmap.csv")
    p.set_defaults(func=cmd_distmap)

    p = sub.add_parser("reward-eval", parents=[common], help="per-step rewards and episode stats")
    p.add_argument("--scene")
    p.add_argument("--trajectory")
    p.add_argument("--command", default="1,0,0", help="commanded velocity vx,vy,vz (m/s)")
    p.add_argument("--weights", default=None, help="JSON object or file of lambda weights")
    p.add_argument("--quad-radius", type=float, default=0.15)
    p.add_argument("--threshold", type=float, default=40.0)
    p.add_argument("--max-range", type=float, default=50.0)
    p.add_argument("--delta", type=float, default=None, help="Poisson delta recorded in the report")
    p.add_argument("--episode-id", type=int, default=0)
    p.add_argument("--out", default="reward")
    p.set_defaults(func=cmd_reward_eval)

    p = sub.add_parser("bench", parents=[common], help="vectorized vs oracle benchmark")
    p.add_argument("--env-counts", default="1,5,10,15,20,25")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--frames", type=int, default=240)
    p.add_argument("--contrast", type=float, default=0.2)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)
    return parser


_REQUIRED = {
    "render": ("scene", "trajectory"),
    "events": ("input",),
    "oracle": ("input",),
    "reward-eval": ("scene", "trajectory"),
}


def _apply_config(parser, argv, args):
    """Re-parse with values from --config as defaults so explicit flags win."""
    path = args.config
    try:
        with open(path) as fh:
            values = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc.strerror}", source=path) from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc}", source=path) from None
    if not isinstance(values, dict):
        raise ValidationError("config must be a JSON object", source=path)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in subparser._actions} - {"help", "config", "func"}
    clean = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise ValidationError(f"unknown config key {key!r}", field=key, source=path)
        if isinstance(value, list) and dest in ("env_counts",):
            value = ",".join(str(v) for v in value)
        clean[dest] = value
    subparser.set_defaults(**clean)
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        for name in _REQUIRED.get(args.command, ()):
            if getattr(args, name) is None:
                raise ValidationError(f"--{name} is required", field=name)
        if args.backend:
            if args.backend not in backend.available_backends():
                raise ValidationError(f"backend {args.backend!r} is not built", field="backend")
            backend.set_backend(args.backend)
        if args.threads is not None:
            if args.threads < 1:
                raise ValidationError("--threads must be >= 1", field="threads")
            backend.set_num_threads(args.threads)
        return args.func(args)
    except ComparisonMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc} ({exc.filename or ''})", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
