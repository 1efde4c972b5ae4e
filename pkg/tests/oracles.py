"""Independent brute-force reference implementations used as test oracles.

These deliberately mirror the defining formulas with plain loops and stay
independent of the library's vectorized paths.
"""

from __future__ import annotations

import math


def brute_distance(x, y, stds):
    total = 0.0
    for a, b, s in zip(x, y, stds):
        if s < 1e-12:
            continue
        total += ((a - b) / s) ** 2
    return math.sqrt(total)


def brute_stds(values):
    n = len(values)
    chans = len(values[0])
    out = []
    for c in range(chans):
        col = [values[i][c] for i in range(n)]
        mean = sum(col) / n
        out.append(math.sqrt(sum((v - mean) ** 2 for v in col) / n))
    return out


def brute_pearson(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    sxx = sum((a - mx) ** 2 for a in xs)
    syy = sum((b - my) ** 2 for b in ys)
    if sxx / n < 1e-18 or syy / n < 1e-18:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


def brute_svf(inst_values, temp_values, k, window):
    """Naive evaluation of the delayed similarity-structure correlation."""
    start, stop = window
    s_inst = brute_stds(inst_values)
    s_temp = brute_stds(temp_values)
    d_inst = []
    d_temp = []
    for i in range(start, stop):
        for j in range(i + 1, stop):
            d_inst.append(brute_distance(inst_values[i], inst_values[j], s_inst))
            d_temp.append(brute_distance(temp_values[i + k], temp_values[j + k], s_temp))
    return brute_pearson(d_inst, d_temp)


def brute_stsf(n, m):
    """Direct factorial evaluation of the group-entropy ratio."""
    if n == 1:
        return 0.0
    log_nf = math.log(math.factorial(n))
    return (log_nf - m * math.log(math.factorial(n // m))) / log_nf
