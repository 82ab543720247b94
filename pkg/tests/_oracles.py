"""Reference implementations coded independently of the package."""

import cmath
import math

import numpy as np


def brute_force_peak(r, delays, dopplers, n_sub, n_sym, w_sub, t_sym):
    """Scan every (delay, Doppler) bin with explicit loops; first strict maximum wins."""
    r = np.asarray(r).reshape(n_sub, n_sym)
    best, best_ij = -1.0, None
    for i, tau in enumerate(delays):
        for j, nu in enumerate(dopplers):
            acc = 0j
            for q in range(n_sub):
                for n in range(n_sym):
                    g = cmath.exp(-2j * math.pi * q * w_sub * tau) * cmath.exp(-2j * math.pi * nu * (n + 1) * t_sym)
                    acc += r[q, n].conjugate() * g
            if abs(acc) > best:
                best, best_ij = abs(acc), (i, j)
    return best_ij, best


def max_rayleigh_mean(gram, n_trials, rng):
    """Mean of max_k |y_k| with y ~ CN(0, gram), gram having unit diagonal."""
    w, v = np.linalg.eigh(gram)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    k = gram.shape[0]
    u = (rng.standard_normal((n_trials, k)) + 1j * rng.standard_normal((n_trials, k))) / math.sqrt(2)
    return float(np.abs(u @ root.T).max(axis=1).mean())


def iid_max_rayleigh_mean(k, n_trials, rng):
    x = np.abs(rng.standard_normal((n_trials, k)) + 1j * rng.standard_normal((n_trials, k))) / math.sqrt(2)
    return float(x.max(axis=1).mean())
