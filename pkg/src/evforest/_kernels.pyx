# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a numpy twin in ``_fallback.py`` with the same
signature and bit-identical output. Arithmetic is kept in double precision in
the same operation order as the fallback; do not build with -ffast-math.
"""
import numpy as np

from cython.parallel cimport prange
from libc.math cimport floor, sqrt, fabs
from libc.stdint cimport int64_t, int8_t, uint8_t, uint16_t, uint32_t

ctypedef fused real:
    float
    double

ctypedef packed struct EventRecord:
    uint32_t step
    uint16_t x
    uint16_t y
    int8_t polarity
    uint8_t pad0
    uint8_t pad1
    uint8_t pad2

# must match events.EVENT_DTYPE
EVENT_DTYPE = np.dtype(
    [("step", "<u4"), ("x", "<u2"), ("y", "<u2"), ("polarity", "i1"), ("pad", "V3")]
)

DEF PIXEL_BLOCK = 512


def band_event_counts(const real[:, ::1] frames, double offset, double contrast,
                      int direction, const int64_t[::1] step_bin, int num_bins,
                      int num_threads=1):
    """Fused band-difference kernel. frames is (T, P); returns int64 (2, B, P).

    Band ids equal floor(s / contrast) exactly. The division is skipped while
    a sample stays inside the cached edges of its current band, shrunk by a
    guard far larger than the rounding error of the edge products.
    """
    cdef Py_ssize_t T = frames.shape[0]
    cdef Py_ssize_t P = frames.shape[1]
    counts_arr = np.zeros((2, num_bins, P), dtype=np.int64)
    cdef int64_t[:, :, ::1] counts = counts_arr
    prev_arr = np.empty(P, dtype=np.int64)
    sign_arr = np.empty(P, dtype=np.int8)
    lo_arr = np.empty(P, dtype=np.float64)
    hi_arr = np.empty(P, dtype=np.float64)
    cdef int64_t[::1] prev_band = prev_arr
    cdef int8_t[::1] last_sign = sign_arr
    cdef double[::1] lo = lo_arr
    cdef double[::1] hi = hi_arr
    cdef Py_ssize_t nblocks = (P + PIXEL_BLOCK - 1) // PIXEL_BLOCK
    cdef Py_ssize_t blk, p, p0, p1, t
    cdef double s, guard
    cdef int64_t band, d, k
    cdef int8_t sgn
    cdef int pol
    cdef int64_t b0 = <int64_t> floor((0.0 - offset) / contrast)
    cdef double guard0 = 1e-9 * contrast * (1.0 + fabs(<double> b0))

    if num_threads < 1:
        num_threads = 1
    for blk in prange(nblocks, nogil=True, schedule="static", num_threads=num_threads):
        p0 = blk * PIXEL_BLOCK
        p1 = p0 + PIXEL_BLOCK
        if p1 > P:
            p1 = P
        for p in range(p0, p1):
            prev_band[p] = b0
            last_sign[p] = <int8_t> direction
            lo[p] = b0 * contrast + guard0
            hi[p] = (b0 + 1) * contrast - guard0
        for t in range(1, T):
            for p in range(p0, p1):
                s = (<double> frames[t, p] - <double> frames[0, p]) - offset
                if s >= lo[p] and s < hi[p]:
                    continue
                band = <int64_t> floor(s / contrast)
                d = band - prev_band[p]
                if d != 0:
                    if d > 0:
                        sgn = 1
                        k = d
                        pol = 0
                    else:
                        sgn = -1
                        k = -d
                        pol = 1
                    # first unit crossing pairs with the previous sign; the
                    # remaining k - 1 are same-sign repeats and always fire
                    if sgn != last_sign[p]:
                        k = k - 1
                    if k > 0:
                        counts[pol, step_bin[t - 1], p] += k
                    last_sign[p] = sgn
                    prev_band[p] = band
                    guard = 1e-9 * contrast * (1.0 + fabs(<double> band))
                    lo[p] = band * contrast + guard
                    hi[p] = (band + 1) * contrast - guard
    return counts_arr


def oracle_events(const real[:, ::1] frames, double offset, double contrast,
                  int direction, int width, Py_ssize_t capacity=0):
    """Sequential reference-level event generator.

    Levels are integers in contrast units (ref = level * C) and samples are
    compared as q = s / C, the same quotient the band kernel floors, so both
    routes round identically. Positive events fire at q >= level + 1, negative
    ones at q < level - 1; the strict inequality keeps samples lying exactly
    on a band edge in the upper band, as floor() does. Returns
    ``(records, capacities)``: an EVENT_DTYPE array ordered by (step, y, x)
    and every buffer size allocated.
    """
    cdef Py_ssize_t T = frames.shape[0]
    cdef Py_ssize_t P = frames.shape[1]
    level_arr = np.empty(P, dtype=np.int64)
    cdef int64_t[::1] level = level_arr
    cdef Py_ssize_t p, t, n = 0
    cdef double q
    cdef int64_t m0 = <int64_t> floor((0.0 - offset) / contrast)
    if direction < 0:
        m0 += 1
    for p in range(P):
        level[p] = m0

    if capacity <= 0:
        capacity = max(1024, P)
    capacities = [capacity]
    buf = np.empty(capacity, dtype=EVENT_DTYPE)
    cdef uint8_t[::1] raw = buf.view(np.uint8)
    cdef EventRecord* rec = <EventRecord*> &raw[0]
    cdef uint16_t xx, yy

    for t in range(1, T):
        for p in range(P):
            q = ((<double> frames[t, p] - <double> frames[0, p]) - offset) / contrast
            if q >= <double> (level[p] + 1):
                xx = <uint16_t> (p % width)
                yy = <uint16_t> (p // width)
                while q >= <double> (level[p] + 1):
                    if n == capacity:
                        capacity *= 2
                        capacities.append(capacity)
                        grown = np.empty(capacity, dtype=EVENT_DTYPE)
                        grown[:n] = buf
                        buf = grown
                        raw = buf.view(np.uint8)
                        rec = <EventRecord*> &raw[0]
                    rec[n].step = <uint32_t> t
                    rec[n].x = xx
                    rec[n].y = yy
                    rec[n].polarity = 1
                    rec[n].pad0 = 0
                    rec[n].pad1 = 0
                    rec[n].pad2 = 0
                    n += 1
                    level[p] += 1
            elif q < <double> (level[p] - 1):
                xx = <uint16_t> (p % width)
                yy = <uint16_t> (p // width)
                while q < <double> (level[p] - 1):
                    if n == capacity:
                        capacity *= 2
                        capacities.append(capacity)
                        grown = np.empty(capacity, dtype=EVENT_DTYPE)
                        grown[:n] = buf
                        buf = grown
                        raw = buf.view(np.uint8)
                        rec = <EventRecord*> &raw[0]
                    rec[n].step = <uint32_t> t
                    rec[n].x = xx
                    rec[n].y = yy
                    rec[n].polarity = -1
                    rec[n].pad0 = 0
                    rec[n].pad1 = 0
                    rec[n].pad2 = 0
                    n += 1
                    level[p] -= 1
    return buf[:n], capacities


def accumulate_events(records, const int64_t[::1] step_bin, int num_bins,
                      int height, int width):
    """Scatter-add EVENT_DTYPE records into an int64 (2, B, H, W) tensor."""
    counts_arr = np.zeros((2, num_bins, height, width), dtype=np.int64)
    cdef int64_t[:, :, :, ::1] counts = counts_arr
    cdef Py_ssize_t n = records.shape[0]
    if n == 0:
        return counts_arr
    records = np.ascontiguousarray(records)
    cdef const uint8_t[::1] raw = records.view(np.uint8)
    cdef const EventRecord* rec = <const EventRecord*> &raw[0]
    cdef Py_ssize_t i
    cdef int pol
    with nogil:
        for i in range(n):
            pol = 0 if rec[i].polarity > 0 else 1
            counts[pol, step_bin[rec[i].step - 1], rec[i].y, rec[i].x] += 1
    return counts_arr


def raycast(const double[::1] origin, const double[:, ::1] dirs,
            const double[:, ::1] cylinders, const double[::1] albedos,
            double ceiling, double background_albedo, double sky_value,
            double max_range, int num_threads=1):
    """Nearest hit of each unit ray against vertical cylinders and the ground.

    cylinders rows are (x, y, radius) and span z in [0, ceiling]. Returns
    (depth, intensity, hit_range) float64 arrays; hit_range is inf for sky.
    """
    cdef Py_ssize_t N = dirs.shape[0]
    cdef Py_ssize_t M = cylinders.shape[0]
    depth_arr = np.empty(N, dtype=np.float64)
    inten_arr = np.empty(N, dtype=np.float64)
    range_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] depth = depth_arr
    cdef double[::1] inten = inten_arr
    cdef double[::1] hit_range = range_arr
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, a, b, c, disc, t, best, shade, z, ex, ey, nx, ny, cosi
    cdef int kind
    cdef Py_ssize_t best_j
    if num_threads < 1:
        num_threads = 1
    for i in prange(N, nogil=True, schedule="static", num_threads=num_threads):
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        best = 1e300
        kind = 0
        best_j = -1
        if dz < 0.0:
            t = -oz / dz
            if t > 0.0:
                best = t
                kind = 1
        a = dx * dx + dy * dy
        if a > 0.0:
            for j in range(M):
                ex = ox - cylinders[j, 0]
                ey = oy - cylinders[j, 1]
                b = dx * ex + dy * ey
                if b >= 0.0:
                    continue
                c = ex * ex + ey * ey - cylinders[j, 2] * cylinders[j, 2]
                disc = b * b - a * c
                if disc < 0.0:
                    continue
                t = (-b - sqrt(disc)) / a
                if t <= 0.0 or t >= best:
                    continue
                z = oz + t * dz
                if z < 0.0 or z > ceiling:
                    continue
                best = t
                kind = 2
                best_j = j
        if kind == 0:
            depth[i] = max_range
            inten[i] = sky_value
            hit_range[i] = 1e300
        else:
            if kind == 1:
                cosi = -dz
                shade = background_albedo
            else:
                nx = (ox + best * dx - cylinders[best_j, 0]) / cylinders[best_j, 2]
                ny = (oy + best * dy - cylinders[best_j, 1]) / cylinders[best_j, 2]
                cosi = -(dx * nx + dy * ny)
                shade = albedos[best_j]
            if cosi < 0.0:
                cosi = 0.0
            inten[i] = shade * (0.5 + 0.5 * cosi)
            hit_range[i] = best
            depth[i] = best if best < max_range else max_range
    range_arr[range_arr >= 1e300] = np.inf
    return depth_arr, inten_arr, range_arr
