"""Pure numpy implementations of the compiled kernels.

Signatures and outputs match ``_kernels.pyx`` exactly; the event kernels are
bit-identical, the raycaster agrees to rounding.
"""
import numpy as np

EVENT_DTYPE = np.dtype(
    [("step", "<u4"), ("x", "<u2"), ("y", "<u2"), ("polarity", "i1"), ("pad", "V3")]
)

# time steps processed per slab by band_event_counts
TIME_CHUNK = 16


def _normalized(frames, t0, t1, ref, offset):
    return (frames[t0:t1].astype(np.float64) - ref) - offset


def band_event_counts(frames, offset, contrast, direction, step_bin, num_bins, num_threads=1):
    """Band quantization, first difference over time, second difference of
    the non-zero crossings. frames is (T, P); returns int64 (2, B, P).

    Slabs of TIME_CHUNK steps are processed at once; the last band id and the
    sign of the last non-zero band change carry over between slabs, which is
    the forward-filled form of "difference the neighbouring non-zero values".
    """
    T, P = frames.shape
    counts = np.zeros((2, num_bins, P), dtype=np.int64)
    ref = frames[0].astype(np.float64)
    prev_band = np.full(P, np.floor((0.0 - offset) / contrast), dtype=np.float64)
    last_sign = np.full(P, direction, dtype=np.int8)

    for t0 in range(1, T, TIME_CHUNK):
        t1 = min(T, t0 + TIME_CHUNK)
        bands = np.floor(_normalized(frames, t0, t1, ref, offset) / contrast)
        delta = np.diff(bands, axis=0, prepend=prev_band[None, :]).astype(np.int64)
        del bands
        sign = np.sign(delta).astype(np.int8)
        nonzero = sign != 0

        # sign of the most recent non-zero change strictly before each step
        rows = np.arange(t1 - t0)[:, None]
        last_idx = np.maximum.accumulate(np.where(nonzero, rows, -1), axis=0)
        before = np.vstack([np.full((1, P), -1, dtype=last_idx.dtype), last_idx[:-1]])
        carried = np.take_along_axis(sign, np.maximum(before, 0), axis=0)
        prior = np.where(before >= 0, carried, last_sign[None, :])

        fired = np.abs(delta) - (nonzero & (sign != prior))
        pos = np.where(sign > 0, fired, 0)
        neg = np.where(sign < 0, fired, 0)

        chunk_bins = step_bin[t0 - 1:t1 - 1]
        for b in np.unique(chunk_bins):
            sel = chunk_bins == b
            counts[0, b] += pos[sel].sum(axis=0)
            counts[1, b] += neg[sel].sum(axis=0)

        prev_band = prev_band + delta.sum(axis=0)
        has = last_idx[-1] >= 0
        last_sign = np.where(has, np.take_along_axis(sign, np.maximum(last_idx[-1:], 0), axis=0)[0], last_sign)
    return counts


def oracle_events(frames, offset, contrast, direction, width, capacity=0):
    """Reference-level event generator, vectorized over pixels only.

    Per step, each pixel keeps firing while its normalized log intensity is
    a full contrast step away from its reference level. Comparisons are made
    on s / C against integer levels, as in the compiled kernel.
    """
    T, P = frames.shape
    ref = frames[0].astype(np.float64)
    level = np.full(P, int(np.floor((0.0 - offset) / contrast)), dtype=np.int64)
    if direction < 0:
        level += 1

    steps, pixels, pols = [], [], []
    for t in range(1, T):
        q = _normalized(frames, t, t + 1, ref, offset)[0] / contrast
        step_pix, step_pol = [], []
        for pol, test in ((1, lambda v, m: v >= m + 1), (-1, lambda v, m: v < m - 1)):
            idx = np.flatnonzero(test(q, level))
            while idx.size:
                step_pix.append(idx)
                step_pol.append(np.full(idx.size, pol, dtype=np.int8))
                level[idx] += pol
                idx = idx[test(q[idx], level[idx])]
        if step_pix:
            pix = np.concatenate(step_pix)
            order = np.argsort(pix, kind="stable")
            pixels.append(pix[order])
            pols.append(np.concatenate(step_pol)[order])
            steps.append(np.full(pix.size, t, dtype=np.uint32))

    n = sum(a.size for a in pixels)
    capacities = [n]
    records = np.zeros(n, dtype=EVENT_DTYPE)
    if n:
        pix = np.concatenate(pixels)
        records["step"] = np.concatenate(steps)
        records["x"] = pix % width
        records["y"] = pix // width
        records["polarity"] = np.concatenate(pols)
    return records, capacities


def accumulate_events(records, step_bin, num_bins, height, width):
    if records.shape[0] == 0:
        return np.zeros((2, num_bins, height, width), dtype=np.int64)
    pol = np.where(records["polarity"] > 0, 0, 1)
    b = step_bin[records["step"].astype(np.int64) - 1]
    flat = ((pol * num_bins + b) * height + records["y"].astype(np.int64)) * width + records["x"]
    counts = np.bincount(flat, minlength=2 * num_bins * height * width)
    return counts.astype(np.int64).reshape(2, num_bins, height, width)


def raycast(origin, dirs, cylinders, albedos, ceiling, background_albedo, sky_value,
            max_range, num_threads=1):
    N = dirs.shape[0]
    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    best = np.full(N, 1e300)
    kind = np.zeros(N, dtype=np.int8)
    best_j = np.full(N, -1, dtype=np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        tg = -oz / dz
    ground = (dz < 0.0) & (tg > 0.0)
    best[ground] = tg[ground]
    kind[ground] = 1

    a = dx * dx + dy * dy
    for j in range(cylinders.shape[0]):
        ex = ox - cylinders[j, 0]
        ey = oy - cylinders[j, 1]
        b = dx * ex + dy * ey
        c = ex * ex + ey * ey - cylinders[j, 2] * cylinders[j, 2]
        disc = b * b - a * c
        ok = (a > 0.0) & (b < 0.0) & (disc >= 0.0)
        if not ok.any():
            continue
        idx = np.flatnonzero(ok)
        t = (-b[idx] - np.sqrt(disc[idx])) / a[idx]
        z = oz + t * dz[idx]
        hit = (t > 0.0) & (t < best[idx]) & (z >= 0.0) & (z <= ceiling)
        idx = idx[hit]
        best[idx] = t[hit]
        kind[idx] = 2
        best_j[idx] = j

    depth = np.full(N, float(max_range))
    inten = np.full(N, float(sky_value))
    hit_range = np.full(N, np.inf)

    g = kind == 1
    cosi = np.maximum(-dz[g], 0.0)
    inten[g] = background_albedo * (0.5 + 0.5 * cosi)

    cy = kind == 2
    jj = best_j[cy]
    tb = best[cy]
    nx = (ox + tb * dx[cy] - cylinders[jj, 0]) / cylinders[jj, 2]
    ny = (oy + tb * dy[cy] - cylinders[jj, 1]) / cylinders[jj, 2]
    cosi = np.maximum(-(dx[cy] * nx + dy[cy] * ny), 0.0)
    inten[cy] = albedos[jj] * (0.5 + 0.5 * cosi)

    hits = kind > 0
    hit_range[hits] = best[hits]
    depth[hits] = np.minimum(best[hits], max_range)
    return depth, inten, hit_range
