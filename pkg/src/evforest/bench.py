"""Runtime and logical-memory comparison of the two event-tensor routes.

``vectorized`` builds tensors straight from band crossings; ``oracle`` first
generates every environment's full event stream and then bins it. Memory is
accounted by a deterministic model: each path registers the buffers it holds,
and peak/mean are taken over the sequence of registrations, not measured.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from evforest import backend
from evforest.errors import ComparisonMismatch, ValidationError
from evforest.events import BinningConfig, ContrastConfig, diff_tensors, oracle_batch, vectorized_batch

logger = logging.getLogger(__name__)

METHODS = ("oracle", "vectorized")
REPORT_COLUMNS = ("method", "env_count", "mean_runtime_s", "max_runtime_s", "peak_bytes",
                  "mean_bytes", "correct")


class MemoryTracker:
    """Named buffer registry; peak is the largest concurrent total."""

    def __init__(self):
        self.live = {}
        self.current = 0
        self.peak = 0
        self.samples = []

    def alloc(self, name, nbytes):
        if name in self.live:
            raise KeyError(f"buffer {name!r} already registered")
        self.live[name] = int(nbytes)
        self.current += int(nbytes)
        self.peak = max(self.peak, self.current)
        self.samples.append(self.current)

    def free(self, name):
        self.current -= self.live.pop(name)
        self.samples.append(self.current)

    def rename(self, old, new):
        self.live[new] = self.live.pop(old)

    @property
    def mean(self):
        return float(np.mean(self.samples)) if self.samples else 0.0


@dataclass(frozen=True)
class BenchConfig:
    env_counts: tuple = (1, 5, 10, 15, 20, 25)
    height: int = 240
    width: int = 320
    frames: int = 240
    contrast: float = 0.2
    num_bins: int = 5
    repetitions: int = 3
    seed: int = 0
    ou_theta: float = 0.02
    ou_sigma: float = 0.03

    def __post_init__(self):
        counts = tuple(int(c) for c in self.env_counts)
        if not counts or min(counts) < 1:
            raise ValidationError("env_counts must be a non-empty list of positive integers",
                                  field="env_counts")
        if self.repetitions < 3:
            raise ValidationError("repetitions must be >= 3", field="repetitions")
        if self.frames < 2 or self.height < 1 or self.width < 1:
            raise ValidationError("need frames >= 2 and a positive resolution", field="frames")
        object.__setattr__(self, "env_counts", counts)


@dataclass
class BenchRow:
    method: str
    env_count: int
    mean_runtime_s: float
    max_runtime_s: float
    peak_bytes: int
    mean_bytes: float
    correct: bool


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    config: BenchConfig = None
    backend: str = ""

    def row(self, method, env_count):
        for r in self.rows:
            if r.method == method and r.env_count == env_count:
                return r
        raise KeyError((method, env_count))


def generate_log_frames(env_count, frames, height, width, seed, theta=0.02, sigma=0.03):
    """Per-environment Ornstein-Uhlenbeck walks in log intensity, float32 (E, T, H, W).

    Environment i depends only on (seed, i), so a smaller batch is a prefix of
    a larger one.
    """
    out = np.empty((env_count, frames, height, width), dtype=np.float32)
    mean_level = np.log(0.3)
    for e in range(env_count):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(e,)))
        level = rng.uniform(np.log(0.05), 0.0, size=(height, width))
        out[e, 0] = level
        for t in range(1, frames):
            level = level + theta * (mean_level - level) + sigma * rng.standard_normal((height, width))
            out[e, t] = level
    return out


def _run(method, frames, cfg, bins, tracker=None):
    fn = vectorized_batch if method == "vectorized" else oracle_batch
    return fn(frames, cfg, bins, tracker=tracker)


def run_benchmark(cfg, backend_name=None):
    """Time both routes for every environment count; abort if they disagree."""
    if backend_name is not None:
        backend.set_backend(backend_name)
    contrast = ContrastConfig(cfg.contrast)
    bins = BinningConfig(cfg.num_bins)
    all_frames = generate_log_frames(max(cfg.env_counts), cfg.frames, cfg.height, cfg.width,
                                     cfg.seed, cfg.ou_theta, cfg.ou_sigma)
    report = BenchReport(config=cfg, backend=backend.backend_name())
    for env_count in sorted(set(cfg.env_counts)):
        frames = all_frames[:env_count]
        outputs = {}
        for method in METHODS:
            tracker = MemoryTracker()
            tracker.alloc("input_frames", frames.nbytes)
            # warm-up doubles as the memory-model and correctness run
            outputs[method] = _run(method, frames, contrast, bins, tracker)
            times = []
            for _ in range(cfg.repetitions):
                t0 = time.perf_counter()
                _run(method, frames, contrast, bins)
                times.append(time.perf_counter() - t0)
            report.rows.append(BenchRow(method, env_count, float(np.mean(times)), float(np.max(times)),
                                        tracker.peak, tracker.mean, False))
            logger.info("%s x%d: mean %.4fs peak %d B", method, env_count, np.mean(times), tracker.peak)
        diff = diff_tensors(outputs["vectorized"], outputs["oracle"])
        if not diff.equal:
            raise ComparisonMismatch(diff, f"vectorized and oracle tensors differ at {env_count} envs")
        for r in report.rows:
            if r.env_count == env_count:
                r.correct = True
        del outputs
    report.rows.sort(key=lambda r: (r.method, r.env_count))
    return report


def write_report(report, path):
    rows = sorted(report.rows, key=lambda r: (r.method, r.env_count))
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in rows:
                w.writerow([r.method, r.env_count, f"{r.mean_runtime_s:.9g}", f"{r.max_runtime_s:.9g}",
                            r.peak_bytes, f"{r.mean_bytes:.9g}", "true" if r.correct else "false"])
    except OSError as exc:
        raise OSError(f"cannot write benchmark report to {path}: {exc}") from exc


def read_report(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValidationError("unexpected report columns", field="header", source=str(path))
        rows = [BenchRow(d["method"], int(d["env_count"]), float(d["mean_runtime_s"]),
                         float(d["max_runtime_s"]), int(d["peak_bytes"]), float(d["mean_bytes"]),
                         d["correct"] == "true") for d in reader]
    return BenchReport(rows=rows)


def write_sidecar(report, path):
    payload = {"config": asdict(report.config) if report.config else None,
               "backend": report.backend, "methods": list(METHODS)}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
