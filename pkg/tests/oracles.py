"""Independent reference computations used as test oracles."""
from itertools import product

import numpy as np

from beamtrack.frontend import CrossCorrelationSet, correlate


def ideal_correlations(delays, pairs, frame_length=1024):
    """Unit-magnitude cross-spectra whose correlation peaks at the (fractional) ``delays``."""
    k = np.arange(frame_length // 2 + 1)
    spectra = np.exp(-2j * np.pi * np.outer(delays, k) / frame_length)
    return CrossCorrelationSet(correlate(spectra, frame_length), spectra, tuple(pairs), frame_length)


def delay_and_sum_energy(signals, steering):
    """Circular delay-and-sum output energy for integer per-channel advances."""
    y = sum(np.roll(x, -int(d)) for x, d in zip(signals, steering))
    return float(np.sum(y ** 2))


def brute_force_assignments(conf, tracked_lik, obs, p_new, p_false):
    """Explicit loop over every f in {-2, -1, 0..M-1}^Q, injective on tracked sources."""
    Q, M = len(conf), len(obs)
    uniform = 1.0 / (4 * np.pi)
    out = {}
    for f in product(range(-2, M), repeat=Q):
        used = [x for x in f if x >= 0]
        if len(used) != len(set(used)):
            continue
        p = 1.0
        for q, fq in enumerate(f):
            if fq == -2:
                p *= uniform * (1 - conf[q]) * p_false
            elif fq == -1:
                p *= uniform * conf[q] * p_new
            else:
                p *= tracked_lik[q][fq] * conf[q] * obs[fq]
        out[f] = p
    total = sum(out.values())
    return {f: v / total for f, v in out.items()}
