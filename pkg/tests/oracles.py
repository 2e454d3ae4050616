"""
Slow, loop-based reference implementations used to check the vectorised code.

Everything here works on plain numpy arrays and python ints so that no code
path is shared with the package under test.
"""
from collections import deque

import numpy as np


def clamp(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


def census(img, radius=2):
    H, W = img.shape
    out = np.zeros((H, W), dtype=np.int64)
    for y in range(H):
        for x in range(W):
            c = int(img[y, x])
            bits = 0
            k = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    if dy == 0 and dx == 0:
                        continue
                    n = int(img[clamp(y + dy, 0, H - 1), clamp(x + dx, 0, W - 1)])
                    if n < c:
                        bits |= 1 << k
                    k += 1
            out[y, x] = bits
    return out


def hamming_costs(desc_l, desc_r, d_max):
    H, W = desc_l.shape
    out = np.zeros((H, W, d_max), dtype=np.int64)
    for y in range(H):
        for x in range(W):
            for d in range(d_max):
                out[y, x, d] = bin(int(desc_l[y, x]) ^ int(desc_r[y, max(x - d, 0)])).count("1")
    return out


def sad_costs(left, right, d_max, radius=2):
    H, W = left.shape
    out = np.zeros((H, W, d_max), dtype=np.int64)
    for y in range(H):
        for x in range(W):
            for d in range(d_max):
                s = 0
                for dy in range(-radius, radius + 1):
                    for dx in range(-radius, radius + 1):
                        yy = clamp(y + dy, 0, H - 1)
                        xx = clamp(x + dx, 0, W - 1)
                        s += abs(int(left[yy, xx]) - int(right[yy, max(xx - d, 0)]))
                out[y, x, d] = min(s, 65535)
    return out


def path_cost(c, dx, dy, p1, p2):
    """Directional SGM term for direction (dx, dy), predecessor at (x - dx, y - dy)."""
    H, W, D = c.shape
    L = np.zeros((H, W, D), dtype=np.int64)
    ys = range(H) if dy >= 0 else range(H - 1, -1, -1)
    xs = list(range(W)) if dx >= 0 else list(range(W - 1, -1, -1))
    for y in ys:
        for x in xs:
            px, py = x - dx, y - dy
            if not (0 <= px < W and 0 <= py < H):
                L[y, x] = c[y, x]
                continue
            prev = [int(v) for v in L[py, px]]
            m = min(prev)
            for d in range(D):
                best = prev[d]
                if d > 0:
                    best = min(best, prev[d - 1] + p1)
                if d < D - 1:
                    best = min(best, prev[d + 1] + p1)
                best = min(best, m + p2)
                L[y, x, d] = int(c[y, x, d]) + best - m
    return L


FOUR = ((1, 0), (1, 1), (0, 1), (-1, 1))
EIGHT = FOUR + ((-1, 0), (-1, -1), (0, -1), (1, -1))


def aggregate(c, p1, p2, paths=4):
    dirs = FOUR if paths == 4 else EIGHT
    return sum(path_cost(c, dx, dy, p1, p2) for dx, dy in dirs)


def scanline_dp(row, p1, p2):
    """Left-to-right DP over a single (W, D) row of costs."""
    W, D = row.shape
    L = np.zeros((W, D), dtype=np.int64)
    L[0] = row[0]
    for x in range(1, W):
        prev = list(L[x - 1])
        m = min(prev)
        for d in range(D):
            cands = [prev[d], m + p2]
            if d > 0:
                cands.append(prev[d - 1] + p1)
            if d < D - 1:
                cands.append(prev[d + 1] + p1)
            L[x, d] = row[x, d] + min(cands) - m
    return L


def argmin_first(seq):
    best, bi = None, -1
    for i, v in enumerate(seq):
        if best is None or v < best:
            best, bi = v, i
    return bi


def wta(c):
    H, W, D = c.shape
    return np.array([[argmin_first(list(c[y, x])) for x in range(W)] for y in range(H)])


def wta_right(c):
    H, W, D = c.shape
    out = np.zeros((H, W), dtype=np.int64)
    for y in range(H):
        for x in range(W):
            out[y, x] = argmin_first([c[y, x + d, d] for d in range(D) if x + d < W])
    return out


def lr_check(dl, vl, dr, vr, tol=1):
    H, W = dl.shape
    keep = np.zeros((H, W), dtype=bool)
    for y in range(H):
        for x in range(W):
            if not vl[y, x]:
                continue
            xr = x - int(dl[y, x])
            if 0 <= xr < W and vr[y, xr] and abs(int(dl[y, x]) - int(dr[y, xr])) <= tol:
                keep[y, x] = True
    return keep


def median(values, valid, k=5):
    H, W = values.shape
    r = k // 2
    need = -(-k * k // 2)
    out = np.zeros((H, W), dtype=values.dtype)
    keep = np.zeros((H, W), dtype=bool)
    for y in range(H):
        for x in range(W):
            samples = []
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy, xx = clamp(y + dy, 0, H - 1), clamp(x + dx, 0, W - 1)
                    if valid[yy, xx]:
                        samples.append(values[yy, xx])
            if valid[y, x] and len(samples) >= need:
                samples.sort()
                out[y, x] = samples[(len(samples) - 1) // 2]
                keep[y, x] = True
    return out, keep


def uv_histograms(values, valid, d_max):
    H, W = values.shape
    u = np.zeros((d_max, W), dtype=np.int64)
    v = np.zeros((H, d_max), dtype=np.int64)
    for y in range(H):
        for x in range(W):
            if valid[y, x]:
                d = int(np.floor(values[y, x]))
                u[d, x] += 1
                v[y, d] += 1
    return u, v


def flood_fill_components(mask):
    """8-connected components as sorted lists of (row, col), found by BFS in raster order."""
    H, W = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(H):
        for x in range(W):
            if not mask[y, x] or seen[y, x]:
                continue
            q = deque([(y, x)])
            seen[y, x] = True
            comp = []
            while q:
                cy, cx = q.popleft()
                comp.append((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < H and 0 <= nx < W and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
            comps.append(sorted(comp))
    return comps


def outer_border_pixels(shape, comp):
    """
    Pixels of one component that touch, by 4-adjacency, the background region
    outside it (background flooded 4-connectedly from beyond the image edge).
    """
    H, W = shape
    members = set(comp)
    outside = set()
    q = deque([(-1, -1)])
    outside.add((-1, -1))
    while q:
        y, x = q.popleft()
        for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            ny, nx = y + dy, x + dx
            if -1 <= ny <= H and -1 <= nx <= W and (ny, nx) not in members and (ny, nx) not in outside:
                outside.add((ny, nx))
                q.append((ny, nx))
    out = set()
    for y, x in comp:
        if any((y + dy, x + dx) in outside for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0))):
            out.add((y, x))
    return out


def rectify(img, mx, my):
    H, W = mx.shape
    out = np.zeros((H, W), dtype=img.dtype)
    for y in range(H):
        for x in range(W):
            out[y, x] = img[my[y, x], mx[y, x]]
    return out


def kitti_metrics(est_v, est_ok, gt_v, gt_ok, thresh=3.0):
    n_gt = n = good = 0
    for y in range(len(gt_v)):
        for x in range(len(gt_v[0])):
            if not gt_ok[y][x]:
                continue
            n_gt += 1
            if est_ok[y][x]:
                n += 1
                if abs(float(est_v[y][x]) - float(gt_v[y][x])) < thresh:
                    good += 1
    return (n / n_gt if n_gt else 0.0), (good / n if n else 0.0), n
