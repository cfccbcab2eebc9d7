"""Little-endian binary containers.

EVF1  frame stack   magic, u32 version, u32 T, u32 H, u32 W, u8 dtype, f64 frame period,
                    then row-major frames (dtype 0: u8 linear intensity,
                    1: f32 log intensity, 2: f32 depth in meters)
EVT1  event tensor  magic, u32 version, u32 B, u32 H, u32 W, u32 counts
                    [polarity][bin][row][col] (positive first), then B+1 u32 bin boundaries
EVS1  event stream  magic, u32 version, u64 count, then 12-byte records
                    (u32 step, u16 x, u16 y, i8 polarity, 3 pad bytes)
"""
import struct

import numpy as np

from evforest.errors import ValidationError
from evforest.events import EVENT_DTYPE, EventTensor, LogFrameStack, SparseEventStream, log_transform

VERSION = 1
DTYPE_U8_INTENSITY = 0
DTYPE_F32_LOG = 1
DTYPE_F32_DEPTH = 2

_EVF_HEADER = struct.Struct("<4sIIIIBd")
_EVT_HEADER = struct.Struct("<4sIIII")
_EVS_HEADER = struct.Struct("<4sIQ")


def _read_exact(fh, n, path):
    data = fh.read(n)
    if len(data) != n:
        raise ValidationError("file is truncated", source=str(path))
    return data


def _check_magic(magic, version, expected, path):
    if magic != expected:
        raise ValidationError(f"bad magic {magic!r}, expected {expected!r}", field="magic",
                              source=str(path))
    if version != VERSION:
        raise ValidationError(f"unsupported version {version}", field="version", source=str(path))


def write_evf(path, frames, dtype_code, frame_period):
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise ValidationError("frames must be T x H x W", field="frames")
    T, H, W = frames.shape
    if dtype_code == DTYPE_U8_INTENSITY:
        if frames.dtype != np.uint8:
            frames = np.clip(np.rint(np.asarray(frames, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
        payload = frames.tobytes()
    elif dtype_code in (DTYPE_F32_LOG, DTYPE_F32_DEPTH):
        payload = np.ascontiguousarray(frames, dtype="<f4").tobytes()
    else:
        raise ValidationError(f"unknown EVF1 dtype {dtype_code}", field="dtype")
    with open(path, "wb") as fh:
        fh.write(_EVF_HEADER.pack(b"EVF1", VERSION, T, H, W, dtype_code, float(frame_period)))
        fh.write(payload)


def read_evf(path):
    """Returns (frames, dtype_code, frame_period); frames keep their stored dtype."""
    with open(path, "rb") as fh:
        magic, version, T, H, W, code, period = _EVF_HEADER.unpack(
            _read_exact(fh, _EVF_HEADER.size, path))
        _check_magic(magic, version, b"EVF1", path)
        if code == DTYPE_U8_INTENSITY:
            dt = np.dtype("u1")
        elif code in (DTYPE_F32_LOG, DTYPE_F32_DEPTH):
            dt = np.dtype("<f4")
        else:
            raise ValidationError(f"unknown EVF1 dtype {code}", field="dtype", source=str(path))
        n = T * H * W
        frames = np.frombuffer(_read_exact(fh, n * dt.itemsize, path), dtype=dt).reshape(T, H, W)
        if fh.read(1):
            raise ValidationError("trailing bytes after frame data", source=str(path))
    return frames, code, period


def load_log_stack(path, epsilon=1e-3):
    """Read an EVF1 file as log intensity (u8 files are scaled to [0, 1] first)."""
    frames, code, period = read_evf(path)
    if code == DTYPE_U8_INTENSITY:
        return log_transform(frames.astype(np.float64) / 255.0, epsilon, frame_period=period)
    if code == DTYPE_F32_DEPTH:
        raise ValidationError("EVF1 file holds depth, not intensity", field="dtype", source=str(path))
    return LogFrameStack(frames, frame_period=period)


def write_evt(path, tensor):
    counts = np.asarray(tensor.counts)
    _, B, H, W = counts.shape
    if counts.min(initial=0) < 0 or counts.max(initial=0) > 0xFFFFFFFF:
        raise ValidationError("counts do not fit u32", field="counts")
    with open(path, "wb") as fh:
        fh.write(_EVT_HEADER.pack(b"EVT1", VERSION, B, H, W))
        fh.write(counts.astype("<u4").tobytes())
        fh.write(np.asarray(tensor.bin_boundaries).astype("<u4").tobytes())


def read_evt(path):
    with open(path, "rb") as fh:
        magic, version, B, H, W = _EVT_HEADER.unpack(_read_exact(fh, _EVT_HEADER.size, path))
        _check_magic(magic, version, b"EVT1", path)
        n = 2 * B * H * W
        counts = np.frombuffer(_read_exact(fh, 4 * n, path), dtype="<u4").reshape(2, B, H, W)
        bounds = np.frombuffer(_read_exact(fh, 4 * (B + 1), path), dtype="<u4")
        if fh.read(1):
            raise ValidationError("trailing bytes after tensor data", source=str(path))
    return EventTensor(counts.astype(np.int64), bounds.astype(np.int64))


def write_evs(path, stream):
    records = np.ascontiguousarray(stream.events, dtype=EVENT_DTYPE).copy()
    records["pad"] = b"\x00\x00\x00"
    with open(path, "wb") as fh:
        fh.write(_EVS_HEADER.pack(b"EVS1", VERSION, records.shape[0]))
        fh.write(records.tobytes())


def read_evs(path, width=None, height=None, num_frames=None):
    with open(path, "rb") as fh:
        magic, version, count = _EVS_HEADER.unpack(_read_exact(fh, _EVS_HEADER.size, path))
        _check_magic(magic, version, b"EVS1", path)
        records = np.frombuffer(_read_exact(fh, count * EVENT_DTYPE.itemsize, path),
                                dtype=EVENT_DTYPE).copy()
        if fh.read(1):
            raise ValidationError("trailing bytes after event records", source=str(path))
    if width is None:
        width = int(records["x"].max()) + 1 if count else 1
    if height is None:
        height = int(records["y"].max()) + 1 if count else 1
    return SparseEventStream(records, width, height, num_frames)
