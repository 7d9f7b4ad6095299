"""Pure-NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
LUNGSEG_BACKEND=fallback). Convolutions go through an im2col buffer and a
single batched BLAS matmul; the labeling and distance kernels are the
scalar-loop parts that NumPy cannot vectorize, so they are the slow side
of the benchmark.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "fallback"


def _im2col(x: np.ndarray, kh: int, kw: int, padding: int) -> np.ndarray:
    """(N,C,H,W) -> (C*kh*kw, N*Ho*Wo) patch matrix, stride 1."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c = x.shape[:2]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (N,C,Ho,Wo,kh,kw)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def conv2d_forward(x: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    o, c, kh, kw = w.shape
    n = x.shape[0]
    cols, ho, wo = _im2col(x, kh, kw, padding)
    y2 = w.reshape(o, c * kh * kw) @ cols
    return np.ascontiguousarray(y2.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))


def conv2d_backward_input(gy: np.ndarray, w: np.ndarray, padding: int,
                          h: int, wd: int) -> np.ndarray:
    n, o = gy.shape[:2]
    _, c, kh, kw = w.shape
    ho, wo = gy.shape[2], gy.shape[3]
    gy2 = gy.transpose(1, 0, 2, 3).reshape(o, n * ho * wo)
    cols = w.reshape(o, c * kh * kw).T @ gy2  # (C*kh*kw, N*Ho*Wo)
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    gxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + ho, j:j + wo] += cols[:, i, j].transpose(1, 0, 2, 3)
    if padding:
        gxp = gxp[:, :, padding:padding + h, padding:padding + wd]
    return np.ascontiguousarray(gxp)


def conv2d_backward_weight(gy: np.ndarray, x: np.ndarray, padding: int,
                           kh: int, kw: int) -> np.ndarray:
    n, o = gy.shape[:2]
    c = x.shape[1]
    cols, ho, wo = _im2col(x, kh, kw, padding)
    gy2 = gy.transpose(1, 0, 2, 3).reshape(o, n * ho * wo)
    return np.ascontiguousarray((gy2 @ cols.T).reshape(o, c, kh, kw))


def maxpool2_forward(x: np.ndarray):
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1).astype(np.uint8)  # argmax keeps first max: row-major tie-break
    y = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(gy: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, c, ho, wo = gy.shape
    g4 = np.zeros((n, c, ho, wo, 4), dtype=gy.dtype)
    np.put_along_axis(g4, idx[..., None].astype(np.intp), gy[..., None], axis=-1)
    gx = g4.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(gx.reshape(n, c, 2 * ho, 2 * wo))


def label_components(mask: np.ndarray, connectivity: int = 8):
    """Two-pass union-find labeling; labels numbered in first-encounter raster order."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent = [0]  # parent[k] for provisional label k (index 0 unused)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    m = mask
    nxt = 1
    for r in range(h):
        for c in range(w):
            if not m[r, c]:
                continue
            best = 0
            if c > 0 and labels[r, c - 1]:
                best = find(labels[r, c - 1])
            if r > 0:
                cand = []
                if labels[r - 1, c]:
                    cand.append(labels[r - 1, c])
                if connectivity == 8:
                    if c > 0 and labels[r - 1, c - 1]:
                        cand.append(labels[r - 1, c - 1])
                    if c + 1 < w and labels[r - 1, c + 1]:
                        cand.append(labels[r - 1, c + 1])
                for lab in cand:
                    root = find(lab)
                    if best == 0:
                        best = root
                    elif root != best:
                        if root < best:
                            parent[best] = root
                            best = root
                        else:
                            parent[root] = best
            if best == 0:
                parent.append(nxt)
                best = nxt
                nxt += 1
            labels[r, c] = best

    # canonical relabel: component whose first pixel comes earliest gets 1
    lut = np.zeros(nxt, dtype=np.int32)
    canon = 0
    for r in range(h):
        for c in range(w):
            lab = labels[r, c]
            if lab and lut[find(lab)] == 0:
                canon += 1
                lut[find(lab)] = canon
    roots = np.array([find(k) if k else 0 for k in range(nxt)], dtype=np.int64)
    labels = lut[roots[labels]]
    return labels, canon


def chamfer_l1(mask: np.ndarray) -> np.ndarray:
    """City-block distance to nearest background pixel, saturated at H+W
    when the image has no background at all."""
    h, w = mask.shape
    big = h + w
    bg = mask == 0
    col = np.arange(w, dtype=np.int64)
    last = np.where(bg, col[None, :], np.int64(-2 * big))
    last = np.maximum.accumulate(last, axis=1)
    dleft = col[None, :] - last
    nxt = np.where(bg, col[None, :], np.int64(w + 2 * big))
    nxt = np.minimum.accumulate(nxt[:, ::-1], axis=1)[:, ::-1]
    dright = nxt - col[None, :]
    out = np.minimum(np.minimum(dleft, dright), big)
    for r in range(1, h):
        np.minimum(out[r], out[r - 1] + 1, out=out[r])
    for r in range(h - 2, -1, -1):
        np.minimum(out[r], out[r + 1] + 1, out=out[r])
    return np.minimum(out, big).astype(np.int32)
