# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: im2col convolution (forward/backward via BLAS GEMM),
2x2 max-pooling, union-find component labeling and the two-pass city-block
distance transform. Semantics match lungseg._kernels.fallback exactly."""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm, sgemm

NAME = "compiled"

ctypedef fused floating:
    float
    double


# Row-major C(m,n) = alpha*A(m,k)@B(k,n) + beta*C via column-major BLAS:
# gemm('N','N', n, m, k, alpha, B, n, A, k, beta, C, n)
cdef inline void _gemm_nn(int m, int n, int k, floating* a, floating* b,
                          floating beta, floating* c):
    cdef floating alpha = 1
    if floating is float:
        sgemm("N", "N", &n, &m, &k, &alpha, <float*> b, &n, <float*> a, &k,
              &beta, <float*> c, &n)
    else:
        dgemm("N", "N", &n, &m, &k, &alpha, <double*> b, &n, <double*> a, &k,
              &beta, <double*> c, &n)


# Row-major C(m,n) = alpha*A(m,k)@B(n,k)^T + beta*C
cdef inline void _gemm_nt(int m, int n, int k, floating* a, floating* b,
                          floating beta, floating* c):
    cdef floating alpha = 1
    if floating is float:
        sgemm("T", "N", &n, &m, &k, &alpha, <float*> b, &k, <float*> a, &k,
              &beta, <float*> c, &n)
    else:
        dgemm("T", "N", &n, &m, &k, &alpha, <double*> b, &k, <double*> a, &k,
              &beta, <double*> c, &n)


# Row-major C(m,n) = alpha*A(k,m)^T@B(k,n) + beta*C
cdef inline void _gemm_tn(int m, int n, int k, floating* a, floating* b,
                          floating beta, floating* c):
    cdef floating alpha = 1
    if floating is float:
        sgemm("N", "T", &n, &m, &k, &alpha, <float*> b, &n, <float*> a, &m,
              &beta, <float*> c, &n)
    else:
        dgemm("N", "T", &n, &m, &k, &alpha, <double*> b, &n, <double*> a, &m,
              &beta, <double*> c, &n)


cdef void _im2col_item(floating[:, :, ::1] x, floating[:, ::1] cols,
                       int kh, int kw, int padding, int ho, int wo) noexcept:
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ci, i, j, oy, ox, sy, sx, row
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oy in range(ho):
                    sy = oy + i - padding
                    if sy < 0 or sy >= h:
                        for ox in range(wo):
                            cols[row, oy * wo + ox] = 0
                        continue
                    for ox in range(wo):
                        sx = ox + j - padding
                        cols[row, oy * wo + ox] = x[ci, sy, sx] if 0 <= sx < w else 0


cdef void _col2im_item(floating[:, ::1] cols, floating[:, :, ::1] gx,
                       int kh, int kw, int padding, int ho, int wo) noexcept:
    cdef Py_ssize_t c = gx.shape[0], h = gx.shape[1], w = gx.shape[2]
    cdef Py_ssize_t ci, i, j, oy, ox, sy, sx, row
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oy in range(ho):
                    sy = oy + i - padding
                    if sy < 0 or sy >= h:
                        continue
                    for ox in range(wo):
                        sx = ox + j - padding
                        if 0 <= sx < w:
                            gx[ci, sy, sx] += cols[row, oy * wo + ox]


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, int padding):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef int ho = h + 2 * padding - kh + 1
    cdef int wo = wd + 2 * padding - kw + 1
    cdef int ck2 = c * kh * kw, hw = ho * wo
    dtype = np.float32 if floating is float else np.float64
    y = np.empty((n, o, ho, wo), dtype=dtype)
    cols_arr = np.empty((ck2, hw), dtype=dtype)
    cdef floating[:, :, :, ::1] ymv = y
    cdef floating[:, ::1] cols = cols_arr
    cdef Py_ssize_t i
    for i in range(n):
        _im2col_item(x[i], cols, kh, kw, padding, ho, wo)
        _gemm_nn(o, hw, ck2, &w[0, 0, 0, 0], &cols[0, 0],
                 <floating> 0, &ymv[i, 0, 0, 0])
    return y


def conv2d_backward_input(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] w,
                          int padding, int h, int wd):
    cdef int n = gy.shape[0], o = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef int c = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef int ck2 = c * kh * kw, hw = ho * wo
    dtype = np.float32 if floating is float else np.float64
    gx = np.zeros((n, c, h, wd), dtype=dtype)
    cols_arr = np.empty((ck2, hw), dtype=dtype)
    cdef floating[:, :, :, ::1] gxmv = gx
    cdef floating[:, ::1] cols = cols_arr
    cdef Py_ssize_t i
    for i in range(n):
        _gemm_tn(ck2, hw, o, &w[0, 0, 0, 0], &gy[i, 0, 0, 0],
                 <floating> 0, &cols[0, 0])
        _col2im_item(cols, gxmv[i], kh, kw, padding, ho, wo)
    return gx


def conv2d_backward_weight(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] x,
                           int padding, int kh, int kw):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef int o = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    cdef int ck2 = c * kh * kw, hw = ho * wo
    dtype = np.float32 if floating is float else np.float64
    gw = np.zeros((o, c, kh, kw), dtype=dtype)
    cols_arr = np.empty((ck2, hw), dtype=dtype)
    cdef floating[:, :, :, ::1] gwmv = gw
    cdef floating[:, ::1] cols = cols_arr
    cdef Py_ssize_t i
    for i in range(n):
        _im2col_item(x[i], cols, kh, kw, padding, ho, wo)
        _gemm_nt(o, ck2, hw, &gy[i, 0, 0, 0], &cols[0, 0],
                 <floating> 1, &gwmv[0, 0, 0, 0])
    return gw


def maxpool2_forward(floating[:, :, :, ::1] x):
    cdef int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef int ho = h // 2, wo = w // 2
    dtype = np.float32 if floating is float else np.float64
    y = np.empty((n, c, ho, wo), dtype=dtype)
    idx = np.empty((n, c, ho, wo), dtype=np.uint8)
    cdef floating[:, :, :, ::1] ymv = y
    cdef unsigned char[:, :, :, ::1] imv = idx
    cdef Py_ssize_t i, j, oy, ox
    cdef floating v, best
    cdef int code, k, dy, dx
    for i in range(n):
        for j in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[i, j, 2 * oy, 2 * ox]
                    code = 0
                    for k in range(1, 4):
                        dy = k >> 1
                        dx = k & 1
                        v = x[i, j, 2 * oy + dy, 2 * ox + dx]
                        if v > best:
                            best = v
                            code = k
                    ymv[i, j, oy, ox] = best
                    imv[i, j, oy, ox] = <unsigned char> code
    return y, idx


def maxpool2_backward(floating[:, :, :, ::1] gy, unsigned char[:, :, :, ::1] idx):
    cdef int n = gy.shape[0], c = gy.shape[1], ho = gy.shape[2], wo = gy.shape[3]
    dtype = np.float32 if floating is float else np.float64
    gx = np.zeros((n, c, 2 * ho, 2 * wo), dtype=dtype)
    cdef floating[:, :, :, ::1] gxmv = gx
    cdef Py_ssize_t i, j, oy, ox
    cdef int code
    for i in range(n):
        for j in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    code = idx[i, j, oy, ox]
                    gxmv[i, j, 2 * oy + (code >> 1), 2 * ox + (code & 1)] += gy[i, j, oy, ox]
    return gx


cdef inline int _find(int[::1] parent, int a) noexcept:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def label_components(const unsigned char[:, ::1] mask, int connectivity=8):
    cdef int h = mask.shape[0], w = mask.shape[1]
    labels = np.zeros((h, w), dtype=np.int32)
    parent_arr = np.zeros(h * w + 1, dtype=np.int32)
    cdef int[:, ::1] lab = labels
    cdef int[::1] parent = parent_arr
    cdef int nxt = 1, best, root, r, c
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            best = 0
            if c > 0 and lab[r, c - 1]:
                best = _find(parent, lab[r, c - 1])
            if r > 0:
                best = _merge(parent, best, lab[r - 1, c])
                if connectivity == 8:
                    if c > 0:
                        best = _merge(parent, best, lab[r - 1, c - 1])
                    if c + 1 < w:
                        best = _merge(parent, best, lab[r - 1, c + 1])
            if best == 0:
                parent[nxt] = nxt
                best = nxt
                nxt += 1
            lab[r, c] = best
    lut = np.zeros(nxt, dtype=np.int32)
    cdef int[::1] lutmv = lut
    cdef int canon = 0
    for r in range(h):
        for c in range(w):
            if lab[r, c]:
                root = _find(parent, lab[r, c])
                if lutmv[root] == 0:
                    canon += 1
                    lutmv[root] = canon
                lab[r, c] = lutmv[root]
    return labels, canon


cdef inline int _merge(int[::1] parent, int best, int neighbor) noexcept:
    cdef int root
    if neighbor == 0:
        return best
    root = _find(parent, neighbor)
    if best == 0 or root == best:
        return root if best == 0 else best
    if root < best:
        parent[best] = root
        return root
    parent[root] = best
    return best


def chamfer_l1(const unsigned char[:, ::1] mask):
    cdef int h = mask.shape[0], w = mask.shape[1]
    cdef int big = h + w
    dist = np.empty((h, w), dtype=np.int32)
    cdef int[:, ::1] d = dist
    cdef int r, c, v
    for r in range(h):
        for c in range(w):
            d[r, c] = big if mask[r, c] else 0
    for r in range(h):
        for c in range(w):
            v = d[r, c]
            if r > 0 and d[r - 1, c] + 1 < v:
                v = d[r - 1, c] + 1
            if c > 0 and d[r, c - 1] + 1 < v:
                v = d[r, c - 1] + 1
            d[r, c] = v
    for r in range(h - 1, -1, -1):
        for c in range(w - 1, -1, -1):
            v = d[r, c]
            if r + 1 < h and d[r + 1, c] + 1 < v:
                v = d[r + 1, c] + 1
            if c + 1 < w and d[r, c + 1] + 1 < v:
                v = d[r, c + 1] + 1
            d[r, c] = v
    return dist
