"""Counter-based random numbers for reproducible, order-independent Monte Carlo.

Every draw is a pure function of (seed, path index, step index, driver
index): the splitmix64 output stream for the given seed, evaluated at the
counter position derived from the indices.  Serial and parallel simulation
therefore produce bit-identical streams.  Gaussians come from the inverse
normal CDF, which is deterministic across platforms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(state):
    z = state.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def counter_uniforms(seed, counters):
    """Uniforms in (0, 1) at the given 64-bit counter positions."""
    counters = np.asarray(counters, dtype=np.uint64)
    state = np.uint64(int(seed) % 2**64) + (counters + np.uint64(1)) * _GOLDEN
    bits = _splitmix64(state)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def normal_increments(seed, path_start, n_paths, n_steps, d, antithetic=False):
    """Standard normal array of shape (n_paths, n_steps, d).

    Draw (p, k, i) sits at counter ((p * n_steps + k) * d + i).  With
    antithetic=True, odd path indices reuse the stream of the preceding even
    index with flipped signs (n_paths must then be even).
    """
    if antithetic and n_paths % 2 != 0:
        raise ValueError("antithetic sampling needs an even number of paths")
    paths = np.arange(path_start, path_start + n_paths, dtype=np.uint64)
    signs = None
    if antithetic:
        signs = np.where(paths % np.uint64(2) == 0, 1.0, -1.0)
        paths = paths - paths % np.uint64(2)
    steps = np.arange(n_steps, dtype=np.uint64)
    drivers = np.arange(d, dtype=np.uint64)
    counters = (
        (paths[:, None, None] * np.uint64(n_steps) + steps[None, :, None])
        * np.uint64(d)
        + drivers[None, None, :]
    )
    z = ndtri(counter_uniforms(seed, counters))
    if signs is not None:
        z *= signs[:, None, None]
    return z
