# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled window kernels: patch extraction and overlap-add accumulation.

All routines take the window offsets as an int64 ``(K, 2)`` array and work
on C-contiguous complex128 / float64 buffers. The GIL is released inside the
loops so callers may dispatch position chunks to worker threads.
"""

def extract_patches(const double complex[:, ::1] obj,
                    const long long[:, ::1] offsets,
                    double complex[:, :, ::1] out):
    cdef Py_ssize_t k, r, c, r0, c0
    cdef Py_ssize_t K = out.shape[0], nr = out.shape[1], nc = out.shape[2]
    with nogil:
        for k in range(K):
            r0 = offsets[k, 0]
            c0 = offsets[k, 1]
            for r in range(nr):
                for c in range(nc):
                    out[k, r, c] = obj[r0 + r, c0 + c]


def embed_add(double complex[:, ::1] buf,
              const long long[:, ::1] offsets,
              const double complex[:, :, ::1] patches):
    cdef Py_ssize_t k, r, c, r0, c0
    cdef Py_ssize_t K = patches.shape[0], nr = patches.shape[1], nc = patches.shape[2]
    with nogil:
        for k in range(K):
            r0 = offsets[k, 0]
            c0 = offsets[k, 1]
            for r in range(nr):
                for c in range(nc):
                    buf[r0 + r, c0 + c] = buf[r0 + r, c0 + c] + patches[k, r, c]


def accumulate_object(double complex[:, ::1] num,
                      double[:, ::1] den,
                      const double complex[:, ::1] probe,
                      const double complex[:, :, ::1] back,
                      const long long[:, ::1] offsets):
    """num += conj(p) * back_k and den += |p|^2 over every window."""
    cdef Py_ssize_t k, r, c, r0, c0
    cdef Py_ssize_t K = back.shape[0], nr = back.shape[1], nc = back.shape[2]
    cdef double pr, pi, br, bi
    with nogil:
        for k in range(K):
            r0 = offsets[k, 0]
            c0 = offsets[k, 1]
            for r in range(nr):
                for c in range(nc):
                    pr = probe[r, c].real
                    pi = probe[r, c].imag
                    br = back[k, r, c].real
                    bi = back[k, r, c].imag
                    num[r0 + r, c0 + c] = num[r0 + r, c0 + c] + (
                        (pr * br + pi * bi) + 1j * (pr * bi - pi * br))
                    den[r0 + r, c0 + c] = den[r0 + r, c0 + c] + (pr * pr + pi * pi)


def accumulate_probe(double complex[:, ::1] num,
                     double[:, ::1] den,
                     const double complex[:, ::1] obj,
                     const double complex[:, :, ::1] back,
                     const long long[:, ::1] offsets):
    """num += conj(o_k) * back_k and den += |o_k|^2, o_k the window of obj."""
    cdef Py_ssize_t k, r, c, r0, c0
    cdef Py_ssize_t K = back.shape[0], nr = back.shape[1], nc = back.shape[2]
    cdef double orr, oi, br, bi
    with nogil:
        for k in range(K):
            r0 = offsets[k, 0]
            c0 = offsets[k, 1]
            for r in range(nr):
                for c in range(nc):
                    orr = obj[r0 + r, c0 + c].real
                    oi = obj[r0 + r, c0 + c].imag
                    br = back[k, r, c].real
                    bi = back[k, r, c].imag
                    num[r, c] = num[r, c] + ((orr * br + oi * bi) + 1j * (orr * bi - oi * br))
                    den[r, c] = den[r, c] + (orr * orr + oi * oi)
