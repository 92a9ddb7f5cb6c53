# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled corpus-scoring kernels.

Each function scores one query against every video in a packed corpus:
``feats`` holds the row-major concatenation of all per-video feature banks
and ``starts[c]:starts[c+1]`` delimits video ``c``. Results are written into
a caller-allocated ``out`` buffer; only C loops run, with the GIL released.
"""


def mms_scores(const double[:, ::1] q, const double[:, ::1] feats,
               const long long[::1] starts, double[::1] out):
    """MeanMaxSim: mean over query rows of the max dot product per video."""
    cdef Py_ssize_t n_videos = starts.shape[0] - 1
    cdef Py_ssize_t m = q.shape[0]
    cdef Py_ssize_t d = q.shape[1]
    cdef Py_ssize_t c, j, r, k, lo, hi
    cdef double best, dot, acc

    with nogil:
        for c in range(n_videos):
            lo = <Py_ssize_t> starts[c]
            hi = <Py_ssize_t> starts[c + 1]
            acc = 0.0
            for j in range(m):
                best = -1e300
                for r in range(lo, hi):
                    dot = 0.0
                    for k in range(d):
                        dot += q[j, k] * feats[r, k]
                    if dot > best:
                        best = dot
                acc += best
            out[c] = acc / m


def sms_scores(const double[:, ::1] q, const double[:, ::1] feats,
               const long long[::1] starts, double[::1] out):
    """Sum-of-MaxSim: like mms_scores without the 1/M normalization."""
    cdef Py_ssize_t n_videos = starts.shape[0] - 1
    cdef Py_ssize_t m = q.shape[0]
    cdef Py_ssize_t d = q.shape[1]
    cdef Py_ssize_t c, j, r, k, lo, hi
    cdef double best, dot, acc

    with nogil:
        for c in range(n_videos):
            lo = <Py_ssize_t> starts[c]
            hi = <Py_ssize_t> starts[c + 1]
            acc = 0.0
            for j in range(m):
                best = -1e300
                for r in range(lo, hi):
                    dot = 0.0
                    for k in range(d):
                        dot += q[j, k] * feats[r, k]
                    if dot > best:
                        best = dot
                acc += best
            out[c] = acc


def mp_scores(const double[::1] qv, const double[:, ::1] feats,
              const long long[::1] starts, double[::1] out, bint renormalize):
    """Mean-pool score: query vector dotted with the per-video row mean.

    The pooled vector is used as-is unless ``renormalize`` is set.
    """
    cdef Py_ssize_t n_videos = starts.shape[0] - 1
    cdef Py_ssize_t d = qv.shape[0]
    cdef Py_ssize_t c, r, k, lo, hi
    cdef double dot, norm, comp

    with nogil:
        for c in range(n_videos):
            lo = <Py_ssize_t> starts[c]
            hi = <Py_ssize_t> starts[c + 1]
            dot = 0.0
            norm = 0.0
            for k in range(d):
                comp = 0.0
                for r in range(lo, hi):
                    comp += feats[r, k]
                comp /= (hi - lo)
                dot += qv[k] * comp
                norm += comp * comp
            if renormalize and norm > 0.0:
                dot /= norm ** 0.5
            out[c] = dot
