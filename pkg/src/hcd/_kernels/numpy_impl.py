"""Pure-NumPy implementations of the hot kernels.

This is the fallback backend (``HCD_BACKEND=numpy``) and the semantic
reference the numba backend is tested against. Accumulations that feed
comparisons or serialized outputs are done in float64 so both backends
agree to tight tolerances.
"""

import numpy as np

NEEDS_PRESORT = False


def gradient_mag_ori(rgb):
    """Per-pixel gradient magnitude and unsigned orientation of an RGB image.

    Centered differences (spacing 2) with replicate borders, computed per
    color channel; the channel with the largest magnitude wins per pixel
    (ties: lowest channel index). Orientation is in [0, pi).
    """
    img = np.ascontiguousarray(rgb, dtype=np.float32)
    padx = np.pad(img, ((0, 0), (1, 1), (0, 0)), mode="edge")
    pady = np.pad(img, ((1, 1), (0, 0), (0, 0)), mode="edge")
    gx = 0.5 * (padx[:, 2:, :] - padx[:, :-2, :])
    gy = 0.5 * (pady[2:, :, :] - pady[:-2, :, :])
    mag2 = gx * gx + gy * gy
    best = np.argmax(mag2, axis=2)
    iy, ix = np.indices(best.shape)
    bx = gx[iy, ix, best].astype(np.float64)
    by = gy[iy, ix, best].astype(np.float64)
    mag = np.sqrt(mag2[iy, ix, best].astype(np.float64))
    ori = np.arctan2(by, bx)
    ori[ori < 0.0] += np.pi
    ori[ori >= np.pi] = 0.0
    return mag.astype(np.float32), ori.astype(np.float32)


def box_mean(plane, radius):
    """Box average over a (2*radius+1)^2 window, replicate padding."""
    if radius <= 0:
        return np.array(plane, dtype=np.float32, copy=True)
    H, W = plane.shape
    p = np.pad(plane.astype(np.float64), radius, mode="edge")
    c = np.zeros((p.shape[0] + 1, p.shape[1] + 1), np.float64)
    c[1:, 1:] = p.cumsum(axis=0).cumsum(axis=1)
    k = 2 * radius + 1
    total = c[k : k + H, k : k + W] - c[0:H, k : k + W] - c[k : k + H, 0:W] + c[0:H, 0:W]
    return (total / float(k * k)).astype(np.float32)


def bin_orientations(mag, ori, nbins, soft):
    """Deposit magnitudes into orientation bins; (nbins, H, W) output.

    Hard binning puts each pixel's full magnitude in one bin so the bin sum
    reproduces the magnitude plane exactly. Soft binning splits linearly
    between the two nearest bin centers (circular with period pi).
    """
    H, W = mag.shape
    out = np.zeros((nbins, H, W), np.float32)
    width = np.pi / nbins
    iy, ix = np.indices((H, W))
    if not soft:
        b = np.floor(ori.astype(np.float64) / width).astype(np.int64)
        np.clip(b, 0, nbins - 1, out=b)
        out[b, iy, ix] = mag
    else:
        t = ori.astype(np.float64) / width - 0.5
        k0f = np.floor(t)
        frac = (t - k0f).astype(np.float32)
        k0 = k0f.astype(np.int64) % nbins
        k1 = (k0 + 1) % nbins
        out[k0, iy, ix] = mag * (np.float32(1.0) - frac)
        out[k1, iy, ix] = mag * frac
    return out


def block_mean(planes, k):
    """Mean-pool (C, H, W) planes over k x k blocks; remainder rows/cols cropped."""
    C, H, W = planes.shape
    h, w = H // k, W // k
    v = planes[:, : h * k, : w * k].astype(np.float64).reshape(C, h, k, w, k)
    return v.mean(axis=(2, 4)).astype(np.float32)


def apply_filter_bank(planes, pair_channel, rect_r0, rect_r1, rect_c0, rect_c1,
                      rect_vals, rect_start, oy, ox):
    """Cross-correlate (channel, filter) pairs of rectangle-decomposed kernels.

    Each kernel is a set of constant rectangles (rows [r0, r1), cols
    [c0, c1), value); pair p reads channel pair_channel[p]. Rectangle sums
    come from a per-channel integral image, with zero padding and
    "same"-size output. Returns (n_pairs, H, W) float32.
    """
    C, H, W = planes.shape
    P = len(pair_channel)
    ii = np.zeros((C, H + 1, W + 1), np.float64)
    np.cumsum(planes, axis=2, out=ii[:, 1:, 1:])
    np.cumsum(ii[:, 1:, 1:], axis=1, out=ii[:, 1:, 1:])
    out = np.zeros((P, H, W), np.float64)
    ys = np.arange(H)
    xs = np.arange(W)
    for p in range(P):
        cii = ii[pair_channel[p]]
        for ri in range(rect_start[p], rect_start[p + 1]):
            ya = np.clip(ys + int(rect_r0[ri]) - int(oy[p]), 0, H)
            yb = np.clip(ys + int(rect_r1[ri]) - int(oy[p]), 0, H)
            xa = np.clip(xs + int(rect_c0[ri]) - int(ox[p]), 0, W)
            xb = np.clip(xs + int(rect_c1[ri]) - int(ox[p]), 0, W)
            area = cii[yb][:, xb] - cii[yb][:, xa] - cii[ya][:, xb] + cii[ya][:, xa]
            out[p] += rect_vals[ri] * area
    return out.astype(np.float32)


def roi_pool_window(planes, y0, y1, x0, x1, out_h, out_w):
    """Max-pool the integer window [y0,y1) x [x0,x1) of (C,H,W) planes.

    Bin i spans rows [floor(i*h/H), ceil((i+1)*h/H)) relative to the window
    (likewise for columns), which covers every pixel; sub-pixel windows
    simply repeat values across bins.
    """
    C = planes.shape[0]
    h = y1 - y0
    w = x1 - x0
    out = np.empty((C, out_h, out_w), np.float32)
    for i in range(out_h):
        ra = y0 + (i * h) // out_h
        rb = y0 + -((-(i + 1) * h) // out_h)
        rb = max(rb, ra + 1)
        for j in range(out_w):
            ca = x0 + (j * w) // out_w
            cb = x0 + -((-(j + 1) * w) // out_w)
            cb = max(cb, ca + 1)
            out[:, i, j] = planes[:, ra:rb, ca:cb].max(axis=(1, 2))
    return out


def bilinear_resize(img, out_h, out_w):
    """Bilinear resize of (H, W, C) float32 image, center-aligned sampling."""
    H, W, C = img.shape
    sy = np.clip((np.arange(out_h) + 0.5) * (H / out_h) - 0.5, 0.0, H - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * (W / out_w) - 0.5, 0.0, W - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def forest_apply(X, feat, thr, left, right, value, roots):
    """Sum of leaf values over all trees for each row of X (float64)."""
    n = X.shape[0]
    out = np.zeros(n, np.float64)
    rows_all = np.arange(n)
    for t in roots:
        node = np.full(n, t, np.int64)
        while True:
            active = feat[node] >= 0
            if not active.any():
                break
            rows = rows_all[active]
            cur = node[rows]
            go_left = X[rows, feat[cur]] <= thr[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
        out += value[node]
    return out


def best_splits_level(X, vals_sorted, order, w, is_pos, node_of, node_ids,
                      node_wpos, node_wneg, feat_ids):
    """Best threshold split per node, minimizing Z = 2*sum(sqrt(W+ * W-)).

    Candidates sit midway between consecutive distinct values of a feature
    within the node; ties are broken toward the lowest feature id and then
    the lowest threshold. Returns (best_z, best_feat, best_thr) aligned
    with node_ids; best_feat is -1 where no candidate exists.

    The presorted (vals_sorted, order) inputs are unused here: this backend
    sorts per node, which doubles as an independent check of the numba path.
    """
    K = len(node_ids)
    best_z = np.full(K, np.inf)
    best_f = np.full(K, -1, np.int64)
    best_t = np.zeros(K, np.float64)
    wp_all = np.where(is_pos != 0, w, 0.0)
    wn_all = np.where(is_pos != 0, 0.0, w)
    for ki, k in enumerate(node_ids):
        rows = np.nonzero(node_of == k)[0]
        if rows.size < 2:
            continue
        Xn = X[np.ix_(rows, feat_ids)]
        order_local = np.argsort(Xn, axis=0, kind="stable")
        vals = np.take_along_axis(Xn, order_local, axis=0)
        lp = np.cumsum(wp_all[rows][order_local], axis=0)[:-1]
        ln = np.cumsum(wn_all[rows][order_local], axis=0)[:-1]
        rp = np.maximum(node_wpos[ki] - lp, 0.0)
        rn = np.maximum(node_wneg[ki] - ln, 0.0)
        z = 2.0 * (np.sqrt(np.maximum(lp, 0.0) * np.maximum(ln, 0.0)) + np.sqrt(rp * rn))
        z[vals[1:] <= vals[:-1]] = np.inf
        if not np.isfinite(z).any():
            continue
        flat = np.argmin(z.T)  # feature-major, then threshold position
        fi, pos = divmod(flat, z.shape[0])
        best_z[ki] = z[pos, fi]
        best_f[ki] = feat_ids[fi]
        best_t[ki] = (np.float64(vals[pos, fi]) + np.float64(vals[pos + 1, fi])) * 0.5
    return best_z, best_f, best_t
