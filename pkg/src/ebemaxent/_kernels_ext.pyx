# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled quadrature reductions; same signatures as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport ddot, dgemm

cnp.import_array()


def exp_weights(const double[:, ::1] Bt, const double[::1] lam, const cnp.intp_t[::1] nz,
                double limit):
    cdef Py_ssize_t N = Bt.shape[1]
    cdef Py_ssize_t a, i, c
    cdef double lc, smax
    cdef Py_ssize_t imax = 0
    s_arr = np.zeros(N)
    cdef double[::1] s = s_arr
    for a in range(nz.shape[0]):
        c = nz[a]
        lc = lam[c]
        for i in range(N):
            s[i] += lc * Bt[c, i]
    smax = s[0]
    for i in range(1, N):
        if s[i] > smax:
            smax = s[i]
            imax = i
    if not smax <= limit:
        return None, imax, smax
    for i in range(N):
        s[i] = exp(s[i])
    return s_arr, imax, smax


def moments(const double[:, ::1] Bt, const double[::1] q, const cnp.intp_t[::1] rows):
    cdef int N = <int>Bt.shape[1]
    cdef int one = 1
    cdef Py_ssize_t a
    out_arr = np.empty(rows.shape[0])
    cdef double[::1] out = out_arr
    for a in range(rows.shape[0]):
        out[a] = ddot(&N, <double*>&Bt[rows[a], 0], &one, <double*>&q[0], &one)
    return out_arr


def gram(const double[:, ::1] Bt, const double[::1] q, const cnp.intp_t[::1] rows,
         const cnp.intp_t[::1] cols):
    cdef Py_ssize_t N = Bt.shape[1]
    cdef int k = <int>rows.shape[0]
    cdef int l = <int>cols.shape[0]
    cdef int n_int = <int>N
    cdef Py_ssize_t a, i, r
    out_arr = np.zeros((k, l))
    if k == 0 or l == 0 or N == 0:
        return out_arr
    scaled_arr = np.empty((k, N))
    gathered_arr = np.empty((l, N))
    cdef double[:, ::1] A = scaled_arr
    cdef double[:, ::1] Bc = gathered_arr
    cdef double[:, ::1] C = out_arr
    for a in range(k):
        r = rows[a]
        for i in range(N):
            A[a, i] = Bt[r, i] * q[i]
    for a in range(l):
        r = cols[a]
        for i in range(N):
            Bc[a, i] = Bt[r, i]
    cdef char transa = b'T'
    cdef char transb = b'N'
    cdef double alpha = 1.0
    cdef double beta = 0.0
    # row-major C (k x l) is column-major C^T (l x k) = Bc A^T
    dgemm(&transa, &transb, &l, &k, &n_int, &alpha, &Bc[0, 0], &n_int,
          &A[0, 0], &n_int, &beta, &C[0, 0], &l)
    return out_arr
