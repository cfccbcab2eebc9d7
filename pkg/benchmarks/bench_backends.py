"""Compiled extension vs numpy fallback on the three hot kernels.

    python benchmarks/bench_backends.py [--height 240 --width 320 --frames 120 --reps 3]

Outputs are checked for equality before timing is reported.
"""
import argparse
import csv
import math
import sys
import time

import numpy as np

from evforest import backend
from evforest.bench import generate_log_frames
from evforest.events import (BinningConfig, ContrastConfig, LogFrameStack, oracle_event_stream,
                             vectorized_event_tensor)
from evforest.render import CameraPose, RenderConfig, render_depth_intensity
from evforest.scene import PoissonConfig, sample_forest


def best_of(fn, reps):
    out, times = None, []
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, min(times), float(np.mean(times))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--contrast", type=float, default=0.2)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="optional CSV path")
    args = p.parse_args(argv)

    if "compiled" not in backend.available_backends():
        sys.exit("compiled extension is not built; run pip install -e . --no-build-isolation")
    backend.set_num_threads(args.threads)

    stack = LogFrameStack(generate_log_frames(1, args.frames, args.height, args.width, seed=0)[0])
    cfg, bins = ContrastConfig(args.contrast), BinningConfig(5)
    scene = sample_forest(PoissonConfig(delta=0.05), 0)
    pose = CameraPose((5.0, 50.0, 1.5), 0.1)
    rcfg = RenderConfig(args.width, args.height, math.radians(90))

    cases = {
        "vectorized": lambda k: vectorized_event_tensor(stack, cfg, bins, k).counts,
        "oracle": lambda k: oracle_event_stream(stack, cfg, k).events.tobytes(),
        "raycast": lambda k: render_depth_intensity(scene, pose, rcfg, kernels=k)[0],
    }
    rows = []
    for name, fn in cases.items():
        results = {}
        for which in ("compiled", "python"):
            k = backend.get_kernels(which)
            fn(k)
            results[which] = best_of(lambda: fn(k), args.reps)
        a, b = results["compiled"][0], results["python"][0]
        same = a == b if isinstance(a, bytes) else np.allclose(a, b, rtol=1e-12, atol=1e-12)
        if not same:
            sys.exit(f"{name}: compiled and python outputs differ")
        fast, slow = results["compiled"][1], results["python"][1]
        rows.append((name, fast, slow, slow / fast))
        print(f"{name:10s} compiled {fast:8.4f} s  python {slow:8.4f} s  speedup {slow / fast:6.1f}x")

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("kernel", "compiled_s", "python_s", "speedup"))
            for name, fast, slow, ratio in rows:
                w.writerow((name, f"{fast:.9g}", f"{slow:.9g}", f"{ratio:.9g}"))


if __name__ == "__main__":
    main()
