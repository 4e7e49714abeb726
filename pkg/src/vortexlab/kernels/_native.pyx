# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled cylinder kernels; mirrors kernels.pure exactly (same staggered
grid, same covariant stencils).  Selected at import when available."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

BACKEND = "native"

ctypedef double complex dcomplex


cdef inline dcomplex cexp_i(double a) nogil:
    return cos(a) + 1j * sin(a)


def _angles(double[:, :, ::1] conn, double[:, ::1] wt, double step):
    cdef Py_ssize_t ni = conn.shape[0], nj = conn.shape[1], k = conn.shape[2]
    cdef Py_ssize_t n = wt.shape[1]
    out = np.zeros((ni, nj, n))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t i, j, a, c
    cdef double acc
    with nogil:
        for i in range(ni):
            for j in range(nj):
                for c in range(n):
                    acc = 0.0
                    for a in range(k):
                        acc += wt[a, c] * conn[i, j, a]
                    o[i, j, c] = step * acc
    return out


def residual_fields(u, phi, psi, y, mu, double lam, wt, double ds, double dt,
                    int order_s=4, int order_t=4):
    cdef dcomplex[:, :, ::1] uu = np.ascontiguousarray(u, dtype=complex)
    cdef dcomplex[:, :, ::1] yy = np.ascontiguousarray(y, dtype=complex)
    cdef double[:, :, ::1] mm = np.ascontiguousarray(mu)
    cdef double[:, :, ::1] pp = np.ascontiguousarray(phi)
    cdef double[:, :, ::1] qq = np.ascontiguousarray(psi)
    cdef double[:, :, ::1] asl = _angles(np.ascontiguousarray(phi),
                                         np.ascontiguousarray(wt), ds)
    cdef double[:, :, ::1] atl = _angles(np.ascontiguousarray(psi),
                                         np.ascontiguousarray(wt), dt)
    cdef Py_ssize_t ns = uu.shape[0], nt = uu.shape[1], n = uu.shape[2]
    cdef Py_ssize_t k = pp.shape[2]
    e1 = np.zeros((ns - 2, nt, n), dtype=complex)
    e2 = np.zeros((ns - 3, nt, k))
    cdef dcomplex[:, :, ::1] r1 = e1
    cdef double[:, :, ::1] r2 = e2
    cdef Py_ssize_t i, j, c, a, jp, jm, jp2, jm2
    cdef dcomplex dsu, dtu
    cdef double lam2 = lam * lam
    with nogil:
        for i in range(1, ns - 1):
            for j in range(nt):
                jp = (j + 1) % nt
                jm = (j - 1 + nt) % nt
                jp2 = (j + 2) % nt
                jm2 = (j - 2 + nt) % nt
                for c in range(n):
                    if order_s == 4 and 2 <= i <= ns - 3:
                        dsu = (-cexp_i(asl[i, j, c] + asl[i + 1, j, c]) * uu[i + 2, j, c]
                               + 8.0 * cexp_i(asl[i, j, c]) * uu[i + 1, j, c]
                               - 8.0 * cexp_i(-asl[i - 1, j, c]) * uu[i - 1, j, c]
                               + cexp_i(-asl[i - 1, j, c] - asl[i - 2, j, c]) * uu[i - 2, j, c]
                               ) / (12.0 * ds)
                    else:
                        dsu = (cexp_i(asl[i, j, c]) * uu[i + 1, j, c]
                               - cexp_i(-asl[i - 1, j, c]) * uu[i - 1, j, c]) / (2.0 * ds)
                    if order_t == 4:
                        dtu = (-cexp_i(atl[i, j, c] + atl[i, jp, c]) * uu[i, jp2, c]
                               + 8.0 * cexp_i(atl[i, j, c]) * uu[i, jp, c]
                               - 8.0 * cexp_i(-atl[i, jm, c]) * uu[i, jm, c]
                               + cexp_i(-atl[i, jm, c] - atl[i, jm2, c]) * uu[i, jm2, c]
                               ) / (12.0 * dt)
                    else:
                        dtu = (cexp_i(atl[i, j, c]) * uu[i, jp, c]
                               - cexp_i(-atl[i, jm, c]) * uu[i, jm, c]) / (2.0 * dt)
                    r1[i - 1, j, c] = dsu - 1j * (dtu - yy[i, j, c])
        for i in range(1, ns - 2):
            for j in range(nt):
                jp = (j + 1) % nt
                for a in range(k):
                    r2[i - 1, j, a] = ((qq[i + 1, j, a] - qq[i, j, a]) / ds
                                       - (pp[i, jp, a] - pp[i, j, a]) / dt
                                       + lam2 * 0.25 * (mm[i, j, a] + mm[i + 1, j, a]
                                                        + mm[i, jp, a] + mm[i + 1, jp, a]))
    return e1, e2


def slink_energy_density(u, phi, wt, double ds):
    cdef dcomplex[:, :, ::1] uu = np.ascontiguousarray(u, dtype=complex)
    cdef double[:, :, ::1] asl = _angles(np.ascontiguousarray(phi),
                                         np.ascontiguousarray(wt), ds)
    cdef Py_ssize_t ns = uu.shape[0], nt = uu.shape[1], n = uu.shape[2]
    out = np.zeros((ns - 1, nt))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, c
    cdef dcomplex diff
    with nogil:
        for i in range(ns - 1):
            for j in range(nt):
                for c in range(n):
                    diff = (cexp_i(asl[i, j, c]) * uu[i + 1, j, c] - uu[i, j, c]) / ds
                    o[i, j] += diff.real * diff.real + diff.imag * diff.imag
    return out
