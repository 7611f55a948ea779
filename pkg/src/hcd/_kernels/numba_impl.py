"""Numba-JIT implementations of the hot kernels (default backend).

Mirrors ``numpy_impl`` function by function; the two backends are held to
identical results (same accumulation order wherever outputs feed
comparisons, e.g. split search) by the backend equivalence tests.
"""

import math

import numpy as np
from numba import njit, prange

NEEDS_PRESORT = True


@njit(cache=True, parallel=True)
def gradient_mag_ori(rgb):
    H, W, C = rgb.shape
    mag = np.empty((H, W), np.float32)
    ori = np.empty((H, W), np.float32)
    for y in prange(H):
        ym = y - 1 if y > 0 else 0
        yp = y + 1 if y < H - 1 else H - 1
        for x in range(W):
            xm = x - 1 if x > 0 else 0
            xp = x + 1 if x < W - 1 else W - 1
            bm2 = np.float32(-1.0)
            bgx = np.float32(0.0)
            bgy = np.float32(0.0)
            for c in range(C):
                gx = np.float32(0.5) * (rgb[y, xp, c] - rgb[y, xm, c])
                gy = np.float32(0.5) * (rgb[yp, x, c] - rgb[ym, x, c])
                m2 = gx * gx + gy * gy
                if m2 > bm2:
                    bm2 = m2
                    bgx = gx
                    bgy = gy
            o = math.atan2(np.float64(bgy), np.float64(bgx))
            if o < 0.0:
                o += math.pi
            if o >= math.pi:
                o = 0.0
            mag[y, x] = np.float32(math.sqrt(float(bm2)))
            ori[y, x] = np.float32(o)
    return mag, ori


@njit(cache=True)
def box_mean(plane, radius):
    H, W = plane.shape
    out = np.empty((H, W), np.float32)
    if radius <= 0:
        for y in range(H):
            for x in range(W):
                out[y, x] = plane[y, x]
        return out
    k = 2 * radius + 1
    area = float(k * k)
    rows = np.empty((H, W), np.float64)
    for y in range(H):
        for x in range(W):
            s = 0.0
            for d in range(-radius, radius + 1):
                xx = x + d
                if xx < 0:
                    xx = 0
                elif xx > W - 1:
                    xx = W - 1
                s += plane[y, xx]
            rows[y, x] = s
    for y in range(H):
        for x in range(W):
            s = 0.0
            for d in range(-radius, radius + 1):
                yy = y + d
                if yy < 0:
                    yy = 0
                elif yy > H - 1:
                    yy = H - 1
                s += rows[yy, x]
            out[y, x] = np.float32(s / area)
    return out


@njit(cache=True)
def bin_orientations(mag, ori, nbins, soft):
    H, W = mag.shape
    out = np.zeros((nbins, H, W), np.float32)
    width = math.pi / nbins
    if not soft:
        for y in range(H):
            for x in range(W):
                b = int(float(ori[y, x]) / width)
                if b < 0:
                    b = 0
                elif b > nbins - 1:
                    b = nbins - 1
                out[b, y, x] = mag[y, x]
    else:
        for y in range(H):
            for x in range(W):
                t = float(ori[y, x]) / width - 0.5
                k0f = math.floor(t)
                frac = np.float32(t - k0f)
                k0 = int(k0f) % nbins
                k1 = (k0 + 1) % nbins
                out[k0, y, x] = mag[y, x] * (np.float32(1.0) - frac)
                out[k1, y, x] = mag[y, x] * frac
    return out


@njit(cache=True)
def block_mean(planes, k):
    C, H, W = planes.shape
    h = H // k
    w = W // k
    out = np.empty((C, h, w), np.float32)
    area = float(k * k)
    for c in range(C):
        for i in range(h):
            for j in range(w):
                s = 0.0
                for dy in range(k):
                    for dx in range(k):
                        s += planes[c, i * k + dy, j * k + dx]
                out[c, i, j] = np.float32(s / area)
    return out


@njit(cache=True, parallel=True)
def apply_filter_bank(planes, pair_channel, rect_r0, rect_r1, rect_c0, rect_c1,
                      rect_vals, rect_start, oy, ox):
    """Correlate rectangle-decomposed kernels via per-channel integral images."""
    C, H, W = planes.shape
    P = pair_channel.shape[0]
    ii = np.zeros((C, H + 1, W + 1), np.float64)
    for c in prange(C):
        for y in range(H):
            s = 0.0
            for x in range(W):
                s += planes[c, y, x]
                ii[c, y + 1, x + 1] = s
        for y in range(1, H):
            for x in range(W):
                ii[c, y + 1, x + 1] += ii[c, y, x + 1]
    res = np.empty((P, H, W), np.float32)
    for p in prange(P):
        cii = ii[pair_channel[p]]
        out = np.zeros((H, W), np.float64)
        for ri in range(rect_start[p], rect_start[p + 1]):
            a = int(rect_r0[ri]) - int(oy[p])
            b = int(rect_r1[ri]) - int(oy[p])
            d0 = int(rect_c0[ri]) - int(ox[p])
            d1 = int(rect_c1[ri]) - int(ox[p])
            v = rect_vals[ri]
            # interior ranges where no index needs clipping
            yi_lo = min(max(0, -a), H)
            yi_hi = max(min(H, H - b), yi_lo)
            xi_lo = min(max(0, -d0), W)
            xi_hi = max(min(W, W - d1), xi_lo)
            for y in range(H):
                ya = min(max(y + a, 0), H)
                yb = min(max(y + b, 0), H)
                top = cii[ya]
                bot = cii[yb]
                orow = out[y]
                if yi_lo <= y < yi_hi:
                    for x in range(0, xi_lo):
                        xa = min(max(x + d0, 0), W)
                        xb = min(max(x + d1, 0), W)
                        orow[x] += v * (bot[xb] - bot[xa] - top[xb] + top[xa])
                    for x in range(xi_lo, xi_hi):
                        orow[x] += v * (bot[x + d1] - bot[x + d0]
                                        - top[x + d1] + top[x + d0])
                    for x in range(xi_hi, W):
                        xa = min(max(x + d0, 0), W)
                        xb = min(max(x + d1, 0), W)
                        orow[x] += v * (bot[xb] - bot[xa] - top[xb] + top[xa])
                else:
                    for x in range(W):
                        xa = min(max(x + d0, 0), W)
                        xb = min(max(x + d1, 0), W)
                        orow[x] += v * (bot[xb] - bot[xa] - top[xb] + top[xa])
        for y in range(H):
            for x in range(W):
                res[p, y, x] = np.float32(out[y, x])
    return res


@njit(cache=True)
def roi_pool_window(planes, y0, y1, x0, x1, out_h, out_w):
    C = planes.shape[0]
    h = y1 - y0
    w = x1 - x0
    out = np.empty((C, out_h, out_w), np.float32)
    for i in range(out_h):
        ra = y0 + (i * h) // out_h
        rb = y0 - ((-(i + 1) * h) // out_h)
        if rb < ra + 1:
            rb = ra + 1
        for j in range(out_w):
            ca = x0 + (j * w) // out_w
            cb = x0 - ((-(j + 1) * w) // out_w)
            if cb < ca + 1:
                cb = ca + 1
            for c in range(C):
                m = planes[c, ra, ca]
                for yy in range(ra, rb):
                    for xx in range(ca, cb):
                        val = planes[c, yy, xx]
                        if val > m:
                            m = val
                out[c, i, j] = m
    return out


@njit(cache=True)
def bilinear_resize(img, out_h, out_w):
    H, W, C = img.shape
    out = np.empty((out_h, out_w, C), np.float32)
    ry = H / out_h
    rx = W / out_w
    for y in range(out_h):
        sy = (y + 0.5) * ry - 0.5
        if sy < 0.0:
            sy = 0.0
        elif sy > H - 1.0:
            sy = H - 1.0
        y0 = int(math.floor(sy))
        y1 = y0 + 1 if y0 + 1 < H else H - 1
        fy = sy - y0
        for x in range(out_w):
            sx = (x + 0.5) * rx - 0.5
            if sx < 0.0:
                sx = 0.0
            elif sx > W - 1.0:
                sx = W - 1.0
            x0 = int(math.floor(sx))
            x1 = x0 + 1 if x0 + 1 < W else W - 1
            fx = sx - x0
            for c in range(C):
                top = float(img[y0, x0, c]) * (1.0 - fx) + float(img[y0, x1, c]) * fx
                bot = float(img[y1, x0, c]) * (1.0 - fx) + float(img[y1, x1, c]) * fx
                out[y, x, c] = np.float32(top * (1.0 - fy) + bot * fy)
    return out


@njit(cache=True, parallel=True)
def forest_apply(X, feat, thr, left, right, value, roots):
    n = X.shape[0]
    out = np.zeros(n, np.float64)
    for i in prange(n):
        s = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feat[node] >= 0:
                if X[i, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            s += value[node]
        out[i] = s
    return out


@njit(cache=True)
def _best_splits_level_jit(vals_sorted, order, w, is_pos, node_of, node_ids,
                           node_wpos, node_wneg, feat_ids):
    K = node_ids.shape[0]
    N = w.shape[0]
    best_z = np.full(K, np.inf)
    best_f = np.full(K, -1, np.int64)
    best_t = np.zeros(K, np.float64)
    max_id = 0
    for ki in range(K):
        if node_ids[ki] > max_id:
            max_id = node_ids[ki]
    slot = np.full(max_id + 1, -1, np.int64)
    for ki in range(K):
        slot[node_ids[ki]] = ki
    lp = np.zeros(K, np.float64)
    ln = np.zeros(K, np.float64)
    prev_v = np.zeros(K, np.float32)
    has_prev = np.zeros(K, np.uint8)
    for fidx in range(feat_ids.shape[0]):
        f = feat_ids[fidx]
        for ki in range(K):
            lp[ki] = 0.0
            ln[ki] = 0.0
            has_prev[ki] = 0
        for kpos in range(N):
            s = order[f, kpos]
            nd = node_of[s]
            if nd < 0 or nd > max_id:
                continue
            ki = slot[nd]
            if ki < 0:
                continue
            v = vals_sorted[f, kpos]
            if has_prev[ki] == 1 and v > prev_v[ki]:
                l_p = lp[ki]
                l_n = ln[ki]
                r_p = node_wpos[ki] - l_p
                if r_p < 0.0:
                    r_p = 0.0
                r_n = node_wneg[ki] - l_n
                if r_n < 0.0:
                    r_n = 0.0
                z = 2.0 * (math.sqrt(l_p * l_n) + math.sqrt(r_p * r_n))
                if z < best_z[ki]:
                    best_z[ki] = z
                    best_f[ki] = f
                    best_t[ki] = (np.float64(prev_v[ki]) + np.float64(v)) * 0.5
            if is_pos[s] != 0:
                lp[ki] += w[s]
            else:
                ln[ki] += w[s]
            prev_v[ki] = v
            has_prev[ki] = 1
    return best_z, best_f, best_t


def best_splits_level(X, vals_sorted, order, w, is_pos, node_of, node_ids,
                      node_wpos, node_wneg, feat_ids):
    """Presorted level-wise split search; see numpy_impl for the contract."""
    return _best_splits_level_jit(vals_sorted, order, w, is_pos, node_of,
                                  node_ids, node_wpos, node_wneg, feat_ids)
