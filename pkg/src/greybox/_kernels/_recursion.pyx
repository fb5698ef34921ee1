# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel for dense affine state recursions.

The whole simulation layer reduces fixed-step integration of an LTI
system to the sequential recursion x[k+1] = A x[k] + w[k]; this loop is
the runtime hot spot and the only piece worth compiling.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def affine_recursion(cnp.ndarray[cnp.float64_t, ndim=2] a,
                     cnp.ndarray[cnp.float64_t, ndim=2] w,
                     cnp.ndarray[cnp.float64_t, ndim=1] x0):
    """Run x[k+1] = a @ x[k] + w[k] and return the stacked iterates.

    Parameters
    ----------
    a : (n, n) float64 array
    w : (nsteps, n) float64 array of per-step affine terms
    x0 : (n,) float64 initial state

    Returns
    -------
    (nsteps + 1, n) array whose row k is x[k].
    """
    cdef Py_ssize_t nsteps = w.shape[0]
    cdef Py_ssize_t n = a.shape[0]
    if a.shape[1] != n or x0.shape[0] != n or w.shape[1] != n:
        raise ValueError("affine_recursion: inconsistent shapes")

    out_arr = np.empty((nsteps + 1, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] am = np.ascontiguousarray(a)
    cdef double[:, ::1] wm = np.ascontiguousarray(w)
    cdef Py_ssize_t k, i, j
    cdef double acc

    for i in range(n):
        out[0, i] = x0[i]
    for k in range(nsteps):
        for i in range(n):
            acc = wm[k, i]
            for j in range(n):
                acc += am[i, j] * out[k, j]
            out[k + 1, i] = acc
    return out_arr
