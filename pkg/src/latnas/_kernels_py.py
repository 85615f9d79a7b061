"""Pure-Python implementations of the hot search-step kernels.

Drop-in fallback for the compiled extension ``latnas._kernels``. Both
implementations perform the same float64 operations in the same order,
so results are bit-identical regardless of which backend is active.
"""

from __future__ import annotations

from math import exp, fabs, log, sqrt

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SEED_TAG = 0xD1B54A32D192ED03
_INV_2_53 = 1.0 / 9007199254740992.0


def sample_categorical(logits, offsets, uniforms, choices_out) -> float:
    """Draw one choice per segment by inverse CDF; returns total log-prob."""
    lg = logits.tolist()
    off = offsets.tolist()
    us = uniforms.tolist()
    n_groups = len(off) - 1
    logprob = 0.0
    for g in range(n_groups):
        s0, s1 = off[g], off[g + 1]
        mx = lg[s0]
        for i in range(s0 + 1, s1):
            if lg[i] > mx:
                mx = lg[i]
        ssum = 0.0
        for i in range(s0, s1):
            ssum += exp(lg[i] - mx)
        u = us[g] * ssum
        choice = s1 - s0 - 1
        acc = 0.0
        for i in range(s0, s1):
            acc += exp(lg[i] - mx)
            if u < acc:
                choice = i - s0
                break
        choices_out[g] = choice
        logprob += (lg[s0 + choice] - mx) - log(ssum)
    return logprob


def argmax_categorical(logits, offsets, choices_out) -> None:
    """Most probable choice per segment; ties break to the lowest index."""
    lg = logits.tolist()
    off = offsets.tolist()
    for g in range(len(off) - 1):
        s0, s1 = off[g], off[g + 1]
        best = s0
        for i in range(s0 + 1, s1):
            if lg[i] > lg[best]:
                best = i
        choices_out[g] = best - s0


def entropy_categorical(logits, offsets) -> float:
    """Sum of per-segment categorical entropies, in nats."""
    lg = logits.tolist()
    off = offsets.tolist()
    total = 0.0
    for g in range(len(off) - 1):
        s0, s1 = off[g], off[g + 1]
        mx = lg[s0]
        for i in range(s0 + 1, s1):
            if lg[i] > mx:
                mx = lg[i]
        ssum = 0.0
        wsum = 0.0
        for i in range(s0, s1):
            e = exp(lg[i] - mx)
            ssum += e
            wsum += e * (lg[i] - mx)
        total += log(ssum) - wsum / ssum
    return total


def adam_logit_update(
    logits, m, v, offsets, choices, advantage, lr, beta1, beta2, eps, t
) -> None:
    """One Adam-style ascent step on advantage * log pi(choices).

    Moment buffers always advance; ``lr`` only scales the applied delta,
    so lr = 0 freezes the logits without stalling the moments.
    """
    lg = logits.tolist()
    ml = m.tolist()
    vl = v.tolist()
    off = offsets.tolist()
    ch = choices.tolist()
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for g in range(len(off) - 1):
        s0, s1 = off[g], off[g + 1]
        mx = lg[s0]
        for i in range(s0 + 1, s1):
            if lg[i] > mx:
                mx = lg[i]
        ssum = 0.0
        for i in range(s0, s1):
            ssum += exp(lg[i] - mx)
        c = ch[g]
        for i in range(s0, s1):
            p = exp(lg[i] - mx) / ssum
            g_i = advantage * ((1.0 if i - s0 == c else 0.0) - p)
            ml[i] = beta1 * ml[i] + (1.0 - beta1) * g_i
            vl[i] = beta2 * vl[i] + (1.0 - beta2) * g_i * g_i
            lg[i] += lr * (ml[i] / bc1) / (sqrt(vl[i] / bc2) + eps)
    logits[:] = lg
    m[:] = ml
    v[:] = vl


def arch_latency_value(
    group_choices, dec_group, dec_offsets, lat_flat, block_of_dec, skip_choice_of_dec, n_blocks
) -> float:
    """Sum of selected per-decision latencies.

    A block whose skip-capable decision selects its skip choice contributes
    only that skip entry; the block's other decisions are masked out.
    """
    gc = group_choices.tolist() if hasattr(group_choices, "tolist") else list(group_choices)
    dg = dec_group.tolist()
    do = dec_offsets.tolist()
    lat = lat_flat.tolist()
    bod = block_of_dec.tolist()
    skc = skip_choice_of_dec.tolist()
    skipped = [False] * n_blocks
    for d in range(len(dg)):
        sc = skc[d]
        if sc >= 0 and gc[dg[d]] == sc:
            skipped[bod[d]] = True
    total = 0.0
    for d in range(len(dg)):
        b = bod[d]
        if b >= 0 and skipped[b] and skc[d] < 0:
            continue
        total += lat[do[d] + gc[dg[d]]]
    return total


def rejection_scan(
    uniforms,
    group_sizes,
    dec_group,
    dec_offsets,
    lat_flat,
    block_of_dec,
    skip_choice_of_dec,
    n_blocks,
    t0,
    tol,
    choices_out,
) -> int:
    """Scan uniform draws row by row; return the first row whose uniform
    architecture lands within |T - t0| <= tol, or -1. The accepted row's
    choices are left in ``choices_out``."""
    rows = uniforms.tolist()
    sizes = group_sizes.tolist()
    dg = dec_group.tolist()
    do = dec_offsets.tolist()
    lat = lat_flat.tolist()
    bod = block_of_dec.tolist()
    skc = skip_choice_of_dec.tolist()
    n_groups = len(sizes)
    n_dec = len(dg)
    gc = [0] * n_groups
    for row_idx, row in enumerate(rows):
        for g in range(n_groups):
            c = int(row[g] * sizes[g])
            if c >= sizes[g]:
                c = sizes[g] - 1
            gc[g] = c
        skipped = [False] * n_blocks
        for d in range(n_dec):
            sc = skc[d]
            if sc >= 0 and gc[dg[d]] == sc:
                skipped[bod[d]] = True
        total = 0.0
        for d in range(n_dec):
            b = bod[d]
            if b >= 0 and skipped[b] and skc[d] < 0:
                continue
            total += lat[do[d] + gc[dg[d]]]
        if fabs(total - t0) <= tol:
            for g in range(n_groups):
                choices_out[g] = gc[g]
            return row_idx
    return -1


def _mix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def hash_noise(seed, choices) -> float:
    """Deterministic per-architecture noise in [-1, 1) from a splitmix64
    chain over (seed, choices)."""
    h = (int(seed) ^ _SEED_TAG) & _MASK64
    ch = choices.tolist() if hasattr(choices, "tolist") else choices
    for c in ch:
        h = _mix64(h ^ ((int(c) + _GOLDEN) & _MASK64))
    return 2.0 * ((h >> 11) * _INV_2_53) - 1.0
