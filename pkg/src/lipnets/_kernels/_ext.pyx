# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: polyline distance queries, ray-crossing parity,
and the pairwise sorting activation. Mirrors _numpy.py exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def polyline_nearest(double[::1] px, double[::1] py,
                     double[::1] ax, double[::1] ay,
                     double[::1] bx, double[::1] by):
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t m = ax.shape[0]
    dist_arr = np.empty(n)
    near_arr = np.empty((n, 2))
    cdef double[::1] dist = dist_arr
    cdef double[:, ::1] near = near_arr
    cdef Py_ssize_t i, j
    cdef double dx, dy, seg_len2, rx, ry, t, cx, cy, d2, best, bx_, by_
    for i in range(n):
        best = -1.0
        bx_ = 0.0
        by_ = 0.0
        for j in range(m):
            dx = bx[j] - ax[j]
            dy = by[j] - ay[j]
            seg_len2 = dx * dx + dy * dy
            rx = px[i] - ax[j]
            ry = py[i] - ay[j]
            t = (rx * dx + ry * dy) / seg_len2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            cx = ax[j] + t * dx
            cy = ay[j] + t * dy
            d2 = (px[i] - cx) ** 2 + (py[i] - cy) ** 2
            if best < 0.0 or d2 < best:
                best = d2
                bx_ = cx
                by_ = cy
        dist[i] = sqrt(best)
        near[i, 0] = bx_
        near[i, 1] = by_
    return dist_arr, near_arr


def crossing_parity(double[::1] px, double[::1] py,
                    double[::1] ax, double[::1] ay,
                    double[::1] bx, double[::1] by):
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t m = ax.shape[0]
    out_arr = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef int count
    cdef double t, x_hit
    for i in range(n):
        count = 0
        for j in range(m):
            if (ay[j] > py[i]) != (by[j] > py[i]):
                t = (py[i] - ay[j]) / (by[j] - ay[j])
                x_hit = ax[j] + t * (bx[j] - ax[j])
                if x_hit > px[i]:
                    count += 1
        out[i] = count & 1
    return out_arr


def groupsort2(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t w = x.shape[1]
    out_arr = np.empty((n, w))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double a, b
    for i in range(n):
        for k in range(0, w, 2):
            a = x[i, k]
            b = x[i, k + 1]
            if a <= b:
                out[i, k] = a
                out[i, k + 1] = b
            else:
                out[i, k] = b
                out[i, k + 1] = a
    return out_arr
