# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: direct convolution and pooling loops.

Inner loops run over contiguous row pointers so the compiler can
vectorize them. Every output element accumulates its reduction in a
fixed order, so results are bit-stable across runs and thread counts;
parallelism is only across independent output planes.

Pooling takes a replicate-padded input prepared by the caller; the
centered accumulation sums (neighbor - center) differences, which keeps
constant inputs exactly constant.
"""

from cython.parallel import prange
cimport openmp


ctypedef fused real:
    float
    double


def set_num_threads(int n):
    openmp.omp_set_num_threads(n)


def get_max_threads():
    return openmp.omp_get_max_threads()


def conv2d_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b,
                   int stride, int pad, real[:, :, :, ::1] out):
    cdef Py_ssize_t N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Co = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Ho = out.shape[2], Wo = out.shape[3]
    cdef Py_ssize_t idx, n, co, ci, kh, kw, oh, ih, lo, hi, t, kwp
    cdef real wv
    cdef real *po
    cdef real *px
    for idx in prange(N * Co, nogil=True, schedule='static'):
        n = idx // Co
        co = idx % Co
        po = &out[n, co, 0, 0]
        for t in range(Ho * Wo):
            po[t] = b[co]
        for ci in range(Ci):
            for kh in range(K):
                for kw in range(K):
                    wv = w[co, ci, kh, kw]
                    kwp = kw - pad
                    lo = 0
                    while lo * stride + kwp < 0:
                        lo = lo + 1
                    hi = Wo
                    while hi > lo and (hi - 1) * stride + kwp >= W:
                        hi = hi - 1
                    for oh in range(Ho):
                        ih = oh * stride - pad + kh
                        if ih < 0 or ih >= H:
                            continue
                        po = &out[n, co, oh, 0]
                        px = &x[n, ci, ih, 0]
                        if stride == 1:
                            for t in range(lo, hi):
                                po[t] = po[t] + wv * px[t + kwp]
                        else:
                            for t in range(lo, hi):
                                po[t] = po[t] + wv * px[t * stride + kwp]


def conv2d_input_grad(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                      int stride, int pad, real[:, :, :, ::1] gx):
    cdef Py_ssize_t N = gy.shape[0], Co = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef Py_ssize_t Ci = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t H = gx.shape[2], W = gx.shape[3]
    cdef Py_ssize_t idx, n, co, ci, kh, kw, oh, ih, lo, hi, t, kwp
    cdef real wv
    cdef real *pg
    cdef real *pr
    for idx in prange(N * Ci, nogil=True, schedule='static'):
        n = idx // Ci
        ci = idx % Ci
        pg = &gx[n, ci, 0, 0]
        for t in range(H * W):
            pg[t] = 0
        for co in range(Co):
            for kh in range(K):
                for kw in range(K):
                    wv = w[co, ci, kh, kw]
                    kwp = kw - pad
                    lo = 0
                    while lo * stride + kwp < 0:
                        lo = lo + 1
                    hi = Wo
                    while hi > lo and (hi - 1) * stride + kwp >= W:
                        hi = hi - 1
                    for oh in range(Ho):
                        ih = oh * stride - pad + kh
                        if ih < 0 or ih >= H:
                            continue
                        pg = &gx[n, ci, ih, 0]
                        pr = &gy[n, co, oh, 0]
                        if stride == 1:
                            for t in range(lo, hi):
                                pg[t + kwp] = pg[t + kwp] + wv * pr[t]
                        else:
                            for t in range(lo, hi):
                                pg[t * stride + kwp] = pg[t * stride + kwp] + wv * pr[t]


def conv2d_weight_grad(real[:, :, :, ::1] gy, real[:, :, :, ::1] x,
                       int stride, int pad, real[:, :, :, ::1] gw,
                       real[:, ::1] scratch):
    """scratch is a (Co, Wo) zero-filled buffer (one lane row per plane)."""
    cdef Py_ssize_t N = gy.shape[0], Co = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef Py_ssize_t Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t K = gw.shape[2]
    cdef Py_ssize_t co, n, ci, kh, kw, oh, ih, lo, hi, t, kwp
    cdef real acc
    cdef real *pa
    cdef real *pr
    cdef real *px
    for co in prange(Co, nogil=True, schedule='static'):
        pa = &scratch[co, 0]
        for ci in range(Ci):
            for kh in range(K):
                for kw in range(K):
                    kwp = kw - pad
                    lo = 0
                    while lo * stride + kwp < 0:
                        lo = lo + 1
                    hi = Wo
                    while hi > lo and (hi - 1) * stride + kwp >= W:
                        hi = hi - 1
                    for t in range(Wo):
                        pa[t] = 0
                    for n in range(N):
                        for oh in range(Ho):
                            ih = oh * stride - pad + kh
                            if ih < 0 or ih >= H:
                                continue
                            pr = &gy[n, co, oh, 0]
                            px = &x[n, ci, ih, 0]
                            if stride == 1:
                                for t in range(lo, hi):
                                    pa[t] = pa[t] + pr[t] * px[t + kwp]
                            else:
                                for t in range(lo, hi):
                                    pa[t] = pa[t] + pr[t] * px[t * stride + kwp]
                    acc = 0
                    for t in range(Wo):
                        acc = acc + pa[t]
                    gw[co, ci, kh, kw] = acc


def avg_pool_same_forward(real[:, :, :, ::1] xpad, real[:, :, :, ::1] x,
                          int k, real[:, :, :, ::1] out):
    """xpad is x with replicate padding of (k-1)//2 before, rest after."""
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t idx, n, c, oh, dh, dw, t
    cdef real scale = <real>1.0 / (<real>k * <real>k)
    cdef real *po
    cdef real *pc
    cdef real *prow
    for idx in prange(N * C, nogil=True, schedule='static'):
        n = idx // C
        c = idx % C
        for oh in range(H):
            po = &out[n, c, oh, 0]
            pc = &x[n, c, oh, 0]
            for t in range(W):
                po[t] = 0
            for dh in range(k):
                for dw in range(k):
                    prow = &xpad[n, c, oh + dh, dw]
                    for t in range(W):
                        po[t] = po[t] + (prow[t] - pc[t])
            for t in range(W):
                po[t] = pc[t] + po[t] * scale


def avg_pool_same_backward(real[:, :, :, ::1] gy, int k, real[:, :, :, ::1] gpad):
    """Scatter gy/k^2 over all covering windows into a zeroed padded buffer;
    the caller folds the padded borders back onto the edges."""
    cdef Py_ssize_t N = gy.shape[0], C = gy.shape[1], H = gy.shape[2], W = gy.shape[3]
    cdef Py_ssize_t idx, n, c, oh, dh, dw, t
    cdef real scale = <real>1.0 / (<real>k * <real>k)
    cdef real *pr
    cdef real *pp
    for idx in prange(N * C, nogil=True, schedule='static'):
        n = idx // C
        c = idx % C
        for oh in range(H):
            pr = &gy[n, c, oh, 0]
            for dh in range(k):
                for dw in range(k):
                    pp = &gpad[n, c, oh + dh, dw]
                    for t in range(W):
                        pp[t] = pp[t] + pr[t] * scale
