"""Pure-Python implementations of the hot numerical kernels.

These mirror ``_kernels.pyx`` line for line and are used whenever the
compiled extension is unavailable (or ``LEOSEM_PURE_PYTHON=1``).
"""
import math

import numpy as np

_SERIES_MAX = 4.0
_ASYMPTOTIC_MIN = 25.0
_RESCALE = 1e250


def _j0_series(x):
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    k = 1
    while True:
        term *= -q / (k * k)
        total += term
        if abs(term) < 1e-17 * abs(total) and k > 2:
            break
        k += 1
    return total


def _j0_miller(x):
    # Backward recurrence J_{k-1} = (2k/x) J_k - J_{k+1}, normalised with
    # J_0 + 2 (J_2 + J_4 + ...) = 1.
    start = 2 * int((x + 30.0 + 4.0 * math.sqrt(x)) / 2.0)
    two_over_x = 2.0 / x
    j_next = 0.0
    j_cur = 1e-300
    even_sum = 0.0
    j0 = 0.0
    k = start
    while k > 0:
        j_prev = k * two_over_x * j_cur - j_next
        j_next = j_cur
        j_cur = j_prev
        if abs(j_cur) > _RESCALE:
            j_cur /= _RESCALE
            j_next /= _RESCALE
            even_sum /= _RESCALE
        if (k - 1) % 2 == 0 and k - 1 > 0:
            even_sum += j_cur
        k -= 1
    j0 = j_cur
    return j0 / (j0 + 2.0 * even_sum)


def _j0_asymptotic(x):
    # Hankel expansion with t_k = prod (2j-1)^2 / (k! (8x)^k):
    # P = 1 - t2 + t4 - ..., Q = -t1 + t3 - ...
    inv8x = 1.0 / (8.0 * x)
    p = 1.0
    q = 0.0
    t = 1.0
    k = 1
    while k < 80:
        odd = 2 * k - 1
        t_next = t * (odd * odd) * inv8x / k
        if t_next >= t:
            break
        t = t_next
        sign = 1.0 if (k // 2) % 2 == 0 else -1.0
        if k % 2 == 1:
            q -= sign * t
        else:
            p += sign * t
        if t < 1e-18:
            break
        k += 1
    s = math.sin(x)
    c = math.cos(x)
    return math.sqrt(1.0 / (math.pi * x)) * (p * (c + s) - q * (s - c))


def j0(x):
    x = abs(float(x))
    if x < _SERIES_MAX:
        return _j0_series(x)
    if x < _ASYMPTOTIC_MIN:
        return _j0_miller(x)
    return _j0_asymptotic(x)


def j0_array(xs):
    xs = np.asarray(xs, dtype=np.float64)
    out = np.empty(xs.shape, dtype=np.float64)
    flat_in = xs.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.shape[0]):
        flat_out[i] = j0(flat_in[i])
    return out


def masked_log_softmax(logits, mask, offsets):
    """Per-segment log-softmax over legal entries; illegal entries get -inf."""
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.uint8)
    rows, cols = logits.shape
    out = np.full((rows, cols), -np.inf)
    n_heads = len(offsets) - 1
    for r in range(rows):
        row = logits[r]
        mrow = mask[r]
        for h in range(n_heads):
            lo = offsets[h]
            hi = offsets[h + 1]
            best = -math.inf
            for j in range(lo, hi):
                if mrow[j] and row[j] > best:
                    best = row[j]
            if best == -math.inf:
                raise ValueError(f"head {h} of row {r} has no legal entry")
            acc = 0.0
            for j in range(lo, hi):
                if mrow[j]:
                    acc += math.exp(row[j] - best)
            log_z = best + math.log(acc)
            for j in range(lo, hi):
                if mrow[j]:
                    out[r, j] = row[j] - log_z
    return out


def sample_segment(logp, lo, hi, u):
    """Inverse-CDF draw from exp(logp[lo:hi]); returns an absolute index."""
    acc = 0.0
    last = -1
    for j in range(lo, hi):
        lp = logp[j]
        if lp == -math.inf:
            continue
        last = j
        acc += math.exp(lp)
        if u < acc:
            return j
    if last < 0:
        raise ValueError("segment has no legal entry")
    return last
