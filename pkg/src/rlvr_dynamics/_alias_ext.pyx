# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled alias-method kernels.

Operation order mirrors ``_alias_py`` exactly so both backends return
bit-identical tables and draws.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def build_alias_table(const double[::1] probs):
    """Vose's O(K) construction. Returns ``(prob_table, alias_table)``."""
    cdef Py_ssize_t k = probs.shape[0]
    cdef Py_ssize_t i, small_top = 0, large_top = 0, s, l
    cdef double kf = <double>k
    scaled_arr = np.empty(k, dtype=np.float64)
    prob_arr = np.ones(k, dtype=np.float64)
    alias_arr = np.arange(k, dtype=np.int64)
    small_arr = np.empty(k, dtype=np.int64)
    large_arr = np.empty(k, dtype=np.int64)
    cdef double[::1] scaled = scaled_arr
    cdef double[::1] prob = prob_arr
    cdef cnp.int64_t[::1] alias = alias_arr
    cdef cnp.int64_t[::1] small = small_arr
    cdef cnp.int64_t[::1] large = large_arr

    for i in range(k):
        scaled[i] = probs[i] * kf
        if scaled[i] < 1.0:
            small[small_top] = i
            small_top += 1
        else:
            large[large_top] = i
            large_top += 1

    while small_top > 0 and large_top > 0:
        small_top -= 1
        s = small[small_top]
        large_top -= 1
        l = large[large_top]
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        if scaled[l] < 1.0:
            small[small_top] = l
            small_top += 1
        else:
            large[large_top] = l
            large_top += 1

    # leftovers keep prob 1.0 and alias to themselves (rounding residue)
    return prob_arr, alias_arr


def alias_draw(const double[::1] prob, const cnp.int64_t[::1] alias,
               const double[::1] uniforms):
    """Map uniforms in [0, 1) to indices; one uniform per draw."""
    cdef Py_ssize_t k = prob.shape[0]
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t j
    cdef cnp.int64_t col
    cdef double x, frac
    cdef double kf = <double>k
    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    for j in range(n):
        x = uniforms[j] * kf
        col = <cnp.int64_t>x
        if col >= k:
            col = k - 1
        frac = x - <double>col
        if frac < prob[col]:
            out[j] = col
        else:
            out[j] = alias[col]
    return out_arr
