"""Independent numerical oracles used by the tests.

These deliberately avoid the package's own fast paths: iterated integrals
come from composite trapezoid quadrature on a fine grid, derivatives from
central differences, and reference prices from direct lognormal sampling.
"""

import math

import numpy as np


def path_on_grid(path, points_per_segment=2000):
    """Sample a piecewise-linear path on a segment-aligned fine grid."""
    ts = []
    xs = []
    for k in range(path.n_segments):
        t0, t1 = path.times[k], path.times[k + 1]
        local = np.linspace(t0, t1, points_per_segment, endpoint=False)
        frac = (local - t0) / (t1 - t0)
        seg = path.points[k][None, :] + frac[:, None] * (path.points[k + 1] - path.points[k])[None, :]
        ts.append(local)
        xs.append(seg)
    ts.append(np.array([path.times[-1]]))
    xs.append(path.points[-1][None, :])
    return np.concatenate(ts), np.vstack(xs)


def iterated_integral_quadrature(path, word, points_per_segment=2000):
    """int_{0<=t1<=...<=tk<=T} dw^{i1}(t1)...dw^{ik}(tk) by nested trapezoid.

    Maintains F_I cumulatively: F_{I*(i)}(s) = int_0^s F_I(u) dw^i(u).
    """
    ts, xs = path_on_grid(path, points_per_segment)
    current = np.ones_like(ts)
    for letter in word:
        dw = np.diff(xs[:, letter])
        midpoints = 0.5 * (current[1:] + current[:-1])
        integral = np.concatenate([[0.0], np.cumsum(midpoints * dw)])
        current = integral
    return current[-1]


def fd_jacobian(func, y, h=1e-6):
    y = np.asarray(y, dtype=float)
    cols = []
    for k in range(len(y)):
        dy = np.zeros_like(y)
        dy[k] = h
        cols.append((np.asarray(func(y + dy)) - np.asarray(func(y - dy))) / (2 * h))
    return np.stack(cols, axis=-1)


def fit_loglog_slope(xs, errs):
    xs = np.log(np.asarray(xs, dtype=float))
    errs = np.log(np.asarray(errs, dtype=float))
    slope, _ = np.polyfit(xs, errs, 1)
    return float(slope)


def gbm_exact_samples(r, sigma, y, t, n, seed):
    """Exact lognormal terminal values (no Euler bias)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    return y * np.exp((r - 0.5 * sigma * sigma) * t + sigma * math.sqrt(t) * z)
