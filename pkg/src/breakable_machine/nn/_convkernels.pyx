# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels; same contracts as _kernels_py.

The conv loop is arranged so the innermost loop is a bounds-check-free
multiply-accumulate over one contiguous output row, which the C compiler
can unroll and vectorize. Accumulation order (bias, then taps in
ci-ky-kx order) is fixed, so results are deterministic.
"""

import numpy as np

cimport cython


def conv2d(const float[:, :, ::1] x, const float[:, :, :, ::1] weight,
           const float[::1] bias, int stride, int padding, int groups):
    cdef Py_ssize_t c_in = x.shape[0], in_h = x.shape[1], in_w = x.shape[2]
    cdef Py_ssize_t c_out = weight.shape[0], cpg = weight.shape[1]
    cdef Py_ssize_t kh = weight.shape[2], kw = weight.shape[3]
    cdef Py_ssize_t out_h = (in_h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t out_w = (in_w + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t cpg_out = c_out // groups

    out_arr = np.empty((c_out, out_h, out_w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t co, g, ci, cin, oy, ox, ky, kx, iy, ox_lo, ox_hi, off
    cdef float w, b
    cdef const float* xrow
    cdef float* orow

    with nogil:
        for co in range(c_out):
            g = co // cpg_out
            b = bias[co]
            for oy in range(out_h):
                orow = &out[co, oy, 0]
                for ox in range(out_w):
                    orow[ox] = b
            for ci in range(cpg):
                cin = g * cpg + ci
                for ky in range(kh):
                    for kx in range(kw):
                        w = weight[co, ci, ky, kx]
                        off = kx - padding  # ix = ox*stride + off
                        if off < 0:
                            ox_lo = (-off + stride - 1) // stride
                        else:
                            ox_lo = 0
                        ox_hi = (in_w - 1 - off) // stride + 1
                        if ox_hi > out_w:
                            ox_hi = out_w
                        for oy in range(out_h):
                            iy = oy * stride - padding + ky
                            if iy < 0 or iy >= in_h:
                                continue
                            xrow = &x[cin, iy, 0]
                            orow = &out[co, oy, 0]
                            for ox in range(ox_lo, ox_hi):
                                orow[ox] += w * xrow[ox * stride + off]
    return out_arr


def relu6(const float[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.empty((c, h, w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef float v
    with nogil:
        for i in range(c):
            for j in range(h):
                for k in range(w):
                    v = x[i, j, k]
                    if v < 0.0:
                        v = 0.0
                    elif v > 6.0:
                        v = 6.0
                    out[i, j, k] = v
    return out_arr


def global_avg_pool(const float[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.empty(c, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc
    with nogil:
        for i in range(c):
            acc = 0.0
            for j in range(h):
                for k in range(w):
                    acc += x[i, j, k]
            out[i] = <float> (acc / (h * w))
    return out_arr
