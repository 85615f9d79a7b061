# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled search-step kernels.

Mirrors latnas._kernels_py operation for operation so both backends
produce bit-identical float64 results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, pow, sqrt

cnp.import_array()

cdef extern from *:
    """
    static const unsigned long long LATNAS_GOLDEN = 0x9E3779B97F4A7C15ULL;
    static const unsigned long long LATNAS_SEED_TAG = 0xD1B54A32D192ED03ULL;
    """
    unsigned long long LATNAS_GOLDEN
    unsigned long long LATNAS_SEED_TAG

cdef double _INV_2_53 = 1.0 / 9007199254740992.0


def sample_categorical(
    double[::1] logits,
    long long[::1] offsets,
    double[::1] uniforms,
    long long[::1] choices_out,
):
    """Draw one choice per segment by inverse CDF; returns total log-prob."""
    cdef Py_ssize_t n_groups = offsets.shape[0] - 1
    cdef Py_ssize_t g, i, s0, s1, choice
    cdef double mx, ssum, u, acc, logprob = 0.0
    for g in range(n_groups):
        s0 = offsets[g]
        s1 = offsets[g + 1]
        mx = logits[s0]
        for i in range(s0 + 1, s1):
            if logits[i] > mx:
                mx = logits[i]
        ssum = 0.0
        for i in range(s0, s1):
            ssum += exp(logits[i] - mx)
        u = uniforms[g] * ssum
        choice = s1 - s0 - 1
        acc = 0.0
        for i in range(s0, s1):
            acc += exp(logits[i] - mx)
            if u < acc:
                choice = i - s0
                break
        choices_out[g] = choice
        logprob += (logits[s0 + choice] - mx) - log(ssum)
    return logprob


def argmax_categorical(
    double[::1] logits, long long[::1] offsets, long long[::1] choices_out
):
    """Most probable choice per segment; ties break to the lowest index."""
    cdef Py_ssize_t g, i, s0, s1, best
    for g in range(offsets.shape[0] - 1):
        s0 = offsets[g]
        s1 = offsets[g + 1]
        best = s0
        for i in range(s0 + 1, s1):
            if logits[i] > logits[best]:
                best = i
        choices_out[g] = best - s0


def entropy_categorical(double[::1] logits, long long[::1] offsets):
    """Sum of per-segment categorical entropies, in nats."""
    cdef Py_ssize_t g, i, s0, s1
    cdef double mx, ssum, wsum, e, total = 0.0
    for g in range(offsets.shape[0] - 1):
        s0 = offsets[g]
        s1 = offsets[g + 1]
        mx = logits[s0]
        for i in range(s0 + 1, s1):
            if logits[i] > mx:
                mx = logits[i]
        ssum = 0.0
        wsum = 0.0
        for i in range(s0, s1):
            e = exp(logits[i] - mx)
            ssum += e
            wsum += e * (logits[i] - mx)
        total += log(ssum) - wsum / ssum
    return total


def adam_logit_update(
    double[::1] logits,
    double[::1] m,
    double[::1] v,
    long long[::1] offsets,
    long long[::1] choices,
    double advantage,
    double lr,
    double beta1,
    double beta2,
    double eps,
    long long t,
):
    """One Adam-style ascent step on advantage * log pi(choices)."""
    cdef Py_ssize_t g, i, s0, s1, c
    cdef double mx, ssum, p, g_i
    cdef double bc1 = 1.0 - pow(beta1, <double> t)
    cdef double bc2 = 1.0 - pow(beta2, <double> t)
    for g in range(offsets.shape[0] - 1):
        s0 = offsets[g]
        s1 = offsets[g + 1]
        mx = logits[s0]
        for i in range(s0 + 1, s1):
            if logits[i] > mx:
                mx = logits[i]
        ssum = 0.0
        for i in range(s0, s1):
            ssum += exp(logits[i] - mx)
        c = choices[g]
        for i in range(s0, s1):
            p = exp(logits[i] - mx) / ssum
            g_i = advantage * ((1.0 if i - s0 == c else 0.0) - p)
            m[i] = beta1 * m[i] + (1.0 - beta1) * g_i
            v[i] = beta2 * v[i] + (1.0 - beta2) * g_i * g_i
            logits[i] += lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)


cdef double _latency_of(
    long long* gc,
    long long[::1] dec_group,
    long long[::1] dec_offsets,
    double[::1] lat_flat,
    long long[::1] block_of_dec,
    long long[::1] skip_choice_of_dec,
    char* skipped,
    Py_ssize_t n_blocks,
) nogil:
    cdef Py_ssize_t d, n_dec = dec_group.shape[0]
    cdef long long sc, b
    cdef double total = 0.0
    for b in range(n_blocks):
        skipped[b] = 0
    for d in range(n_dec):
        sc = skip_choice_of_dec[d]
        if sc >= 0 and gc[dec_group[d]] == sc:
            skipped[block_of_dec[d]] = 1
    for d in range(n_dec):
        b = block_of_dec[d]
        if b >= 0 and skipped[b] and skip_choice_of_dec[d] < 0:
            continue
        total += lat_flat[dec_offsets[d] + gc[dec_group[d]]]
    return total


def arch_latency_value(
    long long[::1] group_choices,
    long long[::1] dec_group,
    long long[::1] dec_offsets,
    double[::1] lat_flat,
    long long[::1] block_of_dec,
    long long[::1] skip_choice_of_dec,
    long long n_blocks,
):
    """Sum of selected per-decision latencies with skip-block masking."""
    cdef cnp.ndarray[char, ndim=1] skipped = np.zeros(max(n_blocks, 1), dtype=np.int8)
    return _latency_of(
        &group_choices[0] if group_choices.shape[0] else NULL,
        dec_group,
        dec_offsets,
        lat_flat,
        block_of_dec,
        skip_choice_of_dec,
        <char*> skipped.data,
        n_blocks,
    )


def rejection_scan(
    double[:, ::1] uniforms,
    long long[::1] group_sizes,
    long long[::1] dec_group,
    long long[::1] dec_offsets,
    double[::1] lat_flat,
    long long[::1] block_of_dec,
    long long[::1] skip_choice_of_dec,
    long long n_blocks,
    double t0,
    double tol,
    long long[::1] choices_out,
):
    """First row whose uniform architecture has |T - t0| <= tol, else -1."""
    cdef Py_ssize_t n_rows = uniforms.shape[0]
    cdef Py_ssize_t n_groups = group_sizes.shape[0]
    cdef Py_ssize_t row, g
    cdef long long c
    cdef double total
    cdef cnp.ndarray[long long, ndim=1] gc_arr = np.zeros(max(n_groups, 1), dtype=np.int64)
    cdef long long* gc = <long long*> gc_arr.data
    cdef cnp.ndarray[char, ndim=1] skipped = np.zeros(max(n_blocks, 1), dtype=np.int8)
    for row in range(n_rows):
        for g in range(n_groups):
            c = <long long> (uniforms[row, g] * group_sizes[g])
            if c >= group_sizes[g]:
                c = group_sizes[g] - 1
            gc[g] = c
        total = _latency_of(
            gc, dec_group, dec_offsets, lat_flat, block_of_dec,
            skip_choice_of_dec, <char*> skipped.data, n_blocks,
        )
        if fabs(total - t0) <= tol:
            for g in range(n_groups):
                choices_out[g] = gc[g]
            return row
    return -1


cdef unsigned long long _mix64(unsigned long long z) nogil:
    z = z + LATNAS_GOLDEN
    z ^= z >> 30
    z = z * 0xBF58476D1CE4E5B9ULL
    z ^= z >> 27
    z = z * 0x94D049BB133111EBULL
    z ^= z >> 31
    return z


def hash_noise(object seed, long long[::1] choices):
    """Deterministic per-architecture noise in [-1, 1)."""
    cdef unsigned long long h = (<unsigned long long> (<long long> seed)) ^ LATNAS_SEED_TAG
    cdef Py_ssize_t i
    for i in range(choices.shape[0]):
        h = _mix64(h ^ ((<unsigned long long> choices[i]) + LATNAS_GOLDEN))
    return 2.0 * ((h >> 11) * _INV_2_53) - 1.0
