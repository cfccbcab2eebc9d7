"""Dense event tensors from log-intensity video.

Two independent routes produce the same ``(2, B, H, W)`` count tensor:

* ``vectorized_event_tensor`` quantizes normalized log intensity into contrast
  bands and counts same-direction band crossings. No event list is ever built.
* ``oracle_event_stream`` + ``accumulate_tensor`` keeps a reference level per
  pixel, emits one event per contrast step crossed, then bins the events.

Polarity index 0 is positive, 1 is negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from evforest import backend
from evforest.errors import ValidationError

EVENT_DTYPE = np.dtype(
    [("step", "<u4"), ("x", "<u2"), ("y", "<u2"), ("polarity", "i1"), ("pad", "V3")]
)
assert EVENT_DTYPE.itemsize == 12


@dataclass(frozen=True)
class LogFrameStack:
    """T x H x W natural-log intensities sampled every ``frame_period`` seconds."""

    frames: np.ndarray
    frame_period: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or min(frames.shape) < 1:
            raise ValidationError(f"frames must be a non-empty T x H x W array, got shape {frames.shape}",
                                  field="frames")
        if frames.dtype not in (np.float32, np.float64):
            frames = frames.astype(np.float64)
        if not np.all(np.isfinite(frames)):
            raise ValidationError("frames contain NaN or Inf", field="frames")
        if not (self.frame_period > 0 and np.isfinite(self.frame_period)):
            raise ValidationError("frame_period must be positive", field="frame_period")
        object.__setattr__(self, "frames", frames)

    @property
    def shape(self):
        return self.frames.shape


@dataclass(frozen=True)
class ContrastConfig:
    contrast: float
    reference_offset: float = 0.0
    initial_direction: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.contrast) and self.contrast > 0):
            raise ValidationError("contrast must be a positive finite number", field="contrast")
        if not np.isfinite(self.reference_offset):
            raise ValidationError("reference_offset must be finite", field="reference_offset")
        if self.initial_direction not in (1, -1):
            raise ValidationError("initial_direction must be +1 or -1", field="initial_direction")


@dataclass(frozen=True)
class BinningConfig:
    num_bins: int = 5

    def __post_init__(self):
        if int(self.num_bins) != self.num_bins or self.num_bins < 1:
            raise ValidationError("num_bins must be a positive integer", field="num_bins")

    def check(self, num_frames):
        if self.num_bins > num_frames - 1:
            raise ValidationError(
                f"num_bins={self.num_bins} exceeds the {num_frames - 1} frame transitions",
                field="num_bins")


@dataclass(frozen=True)
class BandStack:
    band_ids: np.ndarray


@dataclass(frozen=True)
class EventTensor:
    counts: np.ndarray
    bin_boundaries: np.ndarray

    @property
    def num_bins(self):
        return self.counts.shape[1]

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class SparseEventStream:
    """Events as an ``EVENT_DTYPE`` record array sorted by (step, y, x, polarity)."""

    events: np.ndarray
    width: int
    height: int
    num_frames: Optional[int] = None

    def __len__(self):
        return int(self.events.shape[0])

    def as_tuples(self):
        e = self.events
        return [(int(s), int(x), int(y), int(p))
                for s, x, y, p in zip(e["step"], e["x"], e["y"], e["polarity"])]

    @classmethod
    def from_tuples(cls, tuples, width, height, num_frames=None):
        """Build a stream from (step, x, y, polarity) tuples; sorts them."""
        records = np.zeros(len(tuples), dtype=EVENT_DTYPE)
        if tuples:
            arr = np.asarray(tuples, dtype=np.int64)
            records["step"] = arr[:, 0]
            records["x"] = arr[:, 1]
            records["y"] = arr[:, 2]
            records["polarity"] = arr[:, 3]
        return cls(_sorted(records), width, height, num_frames)


@dataclass
class DiffReport:
    total_abs_difference: int
    num_mismatched_cells: int
    first_mismatch: Optional[tuple] = field(default=None)

    @property
    def equal(self):
        return self.total_abs_difference == 0

    def to_dict(self):
        return {
            "total_abs_difference": self.total_abs_difference,
            "num_mismatched_cells": self.num_mismatched_cells,
            "first_mismatch": None if self.first_mismatch is None else list(self.first_mismatch),
        }


def _sorted(records):
    order = np.lexsort((records["polarity"], records["x"], records["y"], records["step"]))
    return records[order]


def log_transform(intensities, epsilon=1e-3, frame_period=1.0, t0=0.0):
    """Map linear intensities in [0, 1] to ``ln(I + epsilon)``."""
    arr = np.asarray(intensities, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("intensities contain NaN or Inf", field="intensities")
    if np.any(arr < 0):
        raise ValidationError("intensities must be non-negative", field="intensities")
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive", field="epsilon")
    return LogFrameStack(np.log(arr + epsilon), frame_period=frame_period, t0=t0)


def band_quantize(stack, cfg):
    """Contrast band of every sample, relative to the first frame."""
    f = stack.frames.astype(np.float64)
    normalized = (f - f[0]) - cfg.reference_offset
    return BandStack(np.floor(normalized / cfg.contrast).astype(np.int64))


def bin_boundaries(num_frames, num_bins):
    """Transition-index boundaries: bin b holds 0-based transitions in [bnd[b], bnd[b+1])."""
    n = num_frames - 1
    b = np.arange(num_bins + 1, dtype=np.int64)
    return -((-b * n) // num_bins)


def step_bins(num_frames, num_bins):
    """Bin index of each 1-based transition step s = 1..T-1, i.e. floor((s-1)B/(T-1))."""
    s = np.arange(num_frames - 1, dtype=np.int64)
    return (s * num_bins) // (num_frames - 1)


def _as_pixels(frames):
    t = frames.shape[0]
    return np.ascontiguousarray(frames.reshape(t, -1))


def _check_transitions(stack):
    if stack.frames.shape[0] < 2:
        raise ValidationError("at least two frames are required", field="frames")


def vectorized_event_tensor(stack, cfg, bins=BinningConfig(), kernels=None):
    """Event counts per polarity and temporal bin without materializing events."""
    _check_transitions(stack)
    T, H, W = stack.frames.shape
    bins.check(T)
    k = kernels or backend.get_kernels()
    counts = k.band_event_counts(_as_pixels(stack.frames), float(cfg.reference_offset),
                                 float(cfg.contrast), int(cfg.initial_direction),
                                 step_bins(T, bins.num_bins), bins.num_bins,
                                 backend.num_threads())
    return EventTensor(counts.reshape(2, bins.num_bins, H, W), bin_boundaries(T, bins.num_bins))


def oracle_event_stream(stack, cfg, kernels=None, capacities=None):
    """Sequential reference-level event generation.

    A pixel fires a positive event whenever its normalized log intensity is at
    least one contrast step above its reference level (and the level moves up
    one step), and a negative one when it is more than one step below. The
    initial level is the lower edge of the first sample's band, or the upper
    edge when ``initial_direction`` is -1.
    ``capacities``, if a list, receives the event buffer sizes allocated.
    """
    _check_transitions(stack)
    T, H, W = stack.frames.shape
    if W > 65536 or H > 65536:
        raise ValidationError("frame dimensions exceed the 16-bit event coordinate range",
                              field="frames")
    k = kernels or backend.get_kernels()
    records, caps = k.oracle_events(_as_pixels(stack.frames), float(cfg.reference_offset),
                                    float(cfg.contrast), int(cfg.initial_direction), W)
    if capacities is not None:
        capacities.extend(caps)
    return SparseEventStream(records, W, H, T)


def accumulate_tensor(stream, num_frames, bins=BinningConfig(), kernels=None):
    bins.check(num_frames)
    e = stream.events
    if len(e):
        step = e["step"]
        if step.min() < 1 or step.max() > num_frames - 1:
            raise ValidationError(f"event steps must lie in 1..{num_frames - 1}", field="step")
        if e["x"].max() >= stream.width or e["y"].max() >= stream.height:
            raise ValidationError("event coordinates outside the sensor", field="x/y")
    k = kernels or backend.get_kernels()
    counts = k.accumulate_events(e, step_bins(num_frames, bins.num_bins), bins.num_bins,
                                 stream.height, stream.width)
    return EventTensor(counts, bin_boundaries(num_frames, bins.num_bins))


def downsample_stream(stream, divisor, out_width, out_height):
    """Integer-divide event coordinates, clamping to the output grid."""
    if int(divisor) != divisor or divisor < 1:
        raise ValidationError("divisor must be a positive integer", field="divisor")
    if out_width <= 0 or out_height <= 0:
        raise ValidationError("output dimensions must be positive", field="out_width/out_height")
    e = stream.events.copy()
    e["x"] = np.minimum(e["x"] // divisor, out_width - 1)
    e["y"] = np.minimum(e["y"] // divisor, out_height - 1)
    return SparseEventStream(_sorted(e), out_width, out_height, stream.num_frames)


def diff_tensors(lhs, rhs):
    a = lhs.counts if isinstance(lhs, EventTensor) else np.asarray(lhs)
    b = rhs.counts if isinstance(rhs, EventTensor) else np.asarray(rhs)
    if a.shape != b.shape:
        raise ValidationError(f"tensor shapes differ: {a.shape} vs {b.shape}", field="counts")
    diff = a.astype(np.int64) - b.astype(np.int64)
    bad = np.flatnonzero(diff)
    first = None
    if bad.size:
        idx = np.unravel_index(bad[0], a.shape)
        first = tuple(int(i) for i in idx) + (int(a[idx]), int(b[idx]))
    return DiffReport(int(np.abs(diff).sum()), int(bad.size), first)


# batched paths used by the benchmark: E stacks of identical shape


def vectorized_batch(frames, cfg, bins=BinningConfig(), tracker=None, kernels=None):
    """Event tensors for an (E, T, H, W) batch; returns int64 (E, 2, B, H, W)."""
    E, T, H, W = frames.shape
    bins.check(T)
    k = kernels or backend.get_kernels()
    out_bytes = E * 2 * bins.num_bins * H * W * 8
    if tracker:
        tracker.alloc("tensor_out", out_bytes)
    out = np.empty((E, 2, bins.num_bins, H, W), dtype=np.int64)
    sb = step_bins(T, bins.num_bins)
    P = H * W
    for e in range(E):
        if tracker:
            for buf, nbytes in _vectorized_scratch(k, T, P, bins.num_bins):
                tracker.alloc(buf, nbytes)
        counts = k.band_event_counts(_as_pixels(frames[e]), float(cfg.reference_offset),
                                     float(cfg.contrast), int(cfg.initial_direction), sb,
                                     bins.num_bins, backend.num_threads())
        out[e] = counts.reshape(2, bins.num_bins, H, W)
        if tracker:
            for buf, _ in _vectorized_scratch(k, T, P, bins.num_bins):
                tracker.free(buf)
    return out


def _vectorized_scratch(kernels, T, P, B):
    """Buffers band_event_counts holds at its peak, per environment."""
    if _is_fallback(kernels):
        from evforest._fallback import TIME_CHUNK
        k = min(TIME_CHUNK, T - 1)
        return [
            ("vec_counts", 2 * B * P * 8),
            ("vec_state", P * (8 + 8 + 1)),   # reference frame, band ids, signs
            ("vec_delta", k * P * 8),
            ("vec_sign", k * P * 1),
            ("vec_last_idx", 2 * k * P * 8),  # last_idx and its shifted copy
            ("vec_fired", 3 * k * P * 8),     # fired, pos, neg
        ]
    return [
        ("vec_counts", 2 * B * P * 8),
        ("vec_state", P * (8 + 1 + 8 + 8)),  # band ids, signs, cached band edges
    ]


def oracle_batch(frames, cfg, bins=BinningConfig(), tracker=None, kernels=None):
    """Generate every environment's full event stream, then convert each to a tensor."""
    E, T, H, W = frames.shape
    bins.check(T)
    k = kernels or backend.get_kernels()
    numpy_kernels = _is_fallback(k)
    streams = []
    for e in range(E):
        if tracker:
            tracker.alloc(f"oracle_state_{e}", H * W * (8 + 8))  # reference frame, levels
        caps = []
        stream = oracle_event_stream(LogFrameStack(frames[e]), cfg, kernels=k, capacities=caps)
        if tracker:
            if numpy_kernels:
                # per-step index/polarity/step lists, then the record array
                tracker.alloc(f"oracle_lists_{e}", len(stream) * (8 + 1 + 4 + 8))
                tracker.alloc(f"events_{e}", caps[-1] * EVENT_DTYPE.itemsize)
                tracker.free(f"oracle_lists_{e}")
            else:
                # buffer doubling: old and new buffers coexist during the copy
                for i, c in enumerate(caps):
                    tracker.alloc(f"events_{e}_{i}", c * EVENT_DTYPE.itemsize)
                    if i:
                        tracker.free(f"events_{e}_{i - 1}")
                tracker.rename(f"events_{e}_{len(caps) - 1}", f"events_{e}")
            tracker.free(f"oracle_state_{e}")
        streams.append(stream)

    if tracker:
        tracker.alloc("tensor_out", E * 2 * bins.num_bins * H * W * 8)
    out = np.empty((E, 2, bins.num_bins, H, W), dtype=np.int64)
    for e in range(E):
        if tracker and numpy_kernels:
            tracker.alloc("bincount_scratch", len(streams[e]) * 8 * 4 + 2 * bins.num_bins * H * W * 8)
        out[e] = accumulate_tensor(streams[e], T, bins, kernels=k).counts
        streams[e] = None
        if tracker:
            if numpy_kernels:
                tracker.free("bincount_scratch")
            tracker.free(f"events_{e}")
    return out


def _is_fallback(kernels):
    return getattr(kernels, "__name__", "").endswith("_fallback")
