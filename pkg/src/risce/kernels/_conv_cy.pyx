# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels (hot path of estimator training).

Same semantics as the NumPy fallback: same-padding, stride-1 2-D
correlation on float64 arrays.
"""

import numpy as np


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    cdef Py_ssize_t batch = x.shape[0], c_in = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t c_out = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    out = np.empty((batch, c_out, height, width))
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t bi, co, ci, ki, kj, i, j, ii, jj, j_lo, j_hi
    cdef double coeff
    for bi in range(batch):
        for co in range(c_out):
            for i in range(height):
                for j in range(width):
                    y[bi, co, i, j] = b[co]
            for ci in range(c_in):
                for ki in range(kh):
                    for kj in range(kw):
                        coeff = w[co, ci, ki, kj]
                        if coeff == 0.0:
                            continue
                        j_lo = pw - kj if kj < pw else 0
                        j_hi = width + pw - kj if kj > pw else width
                        for i in range(height):
                            ii = i + ki - ph
                            if ii < 0 or ii >= height:
                                continue
                            for j in range(j_lo, j_hi):
                                y[bi, co, i, j] += coeff * x[bi, ci, ii, j + kj - pw]
    return out


def conv2d_backward_input(double[:, :, :, ::1] gy, double[:, :, :, ::1] w):
    cdef Py_ssize_t batch = gy.shape[0], c_out = gy.shape[1]
    cdef Py_ssize_t height = gy.shape[2], width = gy.shape[3]
    cdef Py_ssize_t c_in = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    out = np.zeros((batch, c_in, height, width))
    cdef double[:, :, :, ::1] gx = out
    cdef Py_ssize_t bi, co, ci, ki, kj, i, j, ii, j_lo, j_hi
    cdef double coeff
    for bi in range(batch):
        for co in range(c_out):
            for ci in range(c_in):
                for ki in range(kh):
                    for kj in range(kw):
                        coeff = w[co, ci, ki, kj]
                        if coeff == 0.0:
                            continue
                        # gx[p, q] += gy[p - ki + ph, q - kj + pw] * w[ki, kj]
                        j_lo = kj - pw if kj > pw else 0
                        j_hi = width + kj - pw if kj < pw else width
                        for i in range(height):
                            ii = i - ki + ph
                            if ii < 0 or ii >= height:
                                continue
                            for j in range(j_lo, j_hi):
                                gx[bi, ci, i, j] += coeff * gy[bi, co, ii, j - kj + pw]
    return out


def conv2d_backward_weights(double[:, :, :, ::1] x, double[:, :, :, ::1] gy,
                            Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t batch = x.shape[0], c_in = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t c_out = gy.shape[1]
    cdef Py_ssize_t ph = kh // 2, pw = kw // 2
    gw_arr = np.zeros((c_out, c_in, kh, kw))
    gb_arr = np.zeros(c_out)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t bi, co, ci, ki, kj, i, j, ii, j_lo, j_hi
    cdef double acc
    for co in range(c_out):
        acc = 0.0
        for bi in range(batch):
            for i in range(height):
                for j in range(width):
                    acc += gy[bi, co, i, j]
        gb[co] = acc
    for bi in range(batch):
        for co in range(c_out):
            for ci in range(c_in):
                for ki in range(kh):
                    for kj in range(kw):
                        # gw[ki, kj] += sum_ij gy[i, j] * xp[i + ki, j + kj]
                        acc = 0.0
                        j_lo = pw - kj if kj < pw else 0
                        j_hi = width + pw - kj if kj > pw else width
                        for i in range(height):
                            ii = i + ki - ph
                            if ii < 0 or ii >= height:
                                continue
                            for j in range(j_lo, j_hi):
                                acc += gy[bi, co, i, j] * x[bi, ci, ii, j + kj - pw]
                        gw[co, ci, ki, kj] += acc
    return gw_arr, gb_arr
