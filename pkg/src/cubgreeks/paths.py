"""Piecewise-linear driving paths and their truncated signatures.

A path maps [0, t_end] into R^{d+1}; component 0 is the time-like coordinate.
On a linear segment every iterated integral collapses, so the segment
signature is the exponential of the increment and the full signature is the
ordered product of segment exponentials (Chen's relation).  Signatures of
piecewise-linear paths are therefore exact up to truncation.
"""

from __future__ import annotations

import math

import numpy as np

from . import algebra
from .errors import DomainError, InvalidPathError


class PiecewisePath:
    """Ordered knots (s_k, x_k) with s_0 = 0 and s_last = t_end, joined linearly."""

    __slots__ = ("t_end", "times", "points")

    def __init__(self, t_end, knots):
        times = np.asarray([float(s) for s, _ in knots])
        points = np.asarray([np.asarray(x, dtype=float) for _, x in knots])
        if points.ndim != 2 or points.shape[1] < 1:
            raise InvalidPathError("knot points must be equal-length vectors")
        if len(times) < 2:
            raise InvalidPathError("need at least two knots")
        if not (np.isfinite(times).all() and np.isfinite(points).all()):
            raise InvalidPathError("non-finite knot data")
        if times[0] != 0.0:
            raise InvalidPathError(f"first knot time must be 0, got {times[0]}")
        if abs(times[-1] - t_end) > 1e-12 * max(1.0, abs(t_end)):
            raise InvalidPathError(f"last knot time {times[-1]} != t_end {t_end}")
        if np.any(np.diff(times) <= 0.0):
            raise InvalidPathError("knot times must be strictly increasing")
        times.setflags(write=False)
        points.setflags(write=False)
        self.t_end = float(t_end)
        self.times = times
        self.points = points

    @property
    def dim(self):
        """Ambient dimension d+1 (component 0 is time-like)."""
        return self.points.shape[1]

    @property
    def n_segments(self):
        return len(self.times) - 1

    def increments(self):
        return np.diff(self.points, axis=0)

    def negated(self):
        """Flip the spatial components, keeping the time-like component."""
        pts = self.points.copy()
        pts[:, 1:] *= -1.0
        return PiecewisePath(self.t_end, list(zip(self.times, pts)))

    def __eq__(self, other):
        return (
            isinstance(other, PiecewisePath)
            and self.t_end == other.t_end
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.points, other.points)
        )

    def __repr__(self):
        return f"PiecewisePath(t_end={self.t_end}, knots={len(self.times)}, dim={self.dim})"


def from_increments(t_end, increments):
    """Path through cumulative increments at equally spaced knot times."""
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    k = len(increments)
    points = np.vstack([np.zeros(increments.shape[1]), np.cumsum(increments, axis=0)])
    times = np.linspace(0.0, t_end, k + 1)
    return PiecewisePath(t_end, list(zip(times, points)))


def line_path(t_end, increment):
    """Straight line from the origin with the given total increment."""
    return from_increments(t_end, [np.asarray(increment, dtype=float)])


def concat(p1, p2):
    """Concatenation: run p1, then p2 translated to start at p1's endpoint."""
    if p1.dim != p2.dim:
        raise InvalidPathError("cannot concatenate paths of different dimensions")
    times = np.concatenate([p1.times, p1.t_end + p2.times[1:]])
    points = np.vstack([p1.points, p1.points[-1] + p2.points[1:]])
    return PiecewisePath(p1.t_end + p2.t_end, list(zip(times, points)))


def segment_signature(ctx, increment):
    """exp(sum_i dw^i e_i) for a single linear segment.

    At m=1 every word containing the time letter exceeds the truncation
    degree, so the e_0 component is dropped there outright.
    """
    increment = np.asarray(increment, dtype=float)
    if len(increment) != ctx.d + 1:
        raise InvalidPathError(f"increment has {len(increment)} components, need d+1={ctx.d + 1}")
    start = 0 if ctx.m >= 2 else 1
    step = algebra.TensorElement(
        ctx, {(i,): increment[i] for i in range(start, ctx.d + 1)}
    )
    return algebra.exp(step)


def signature(ctx, path):
    """Truncated signature: product of segment exponentials in knot order."""
    if path.dim != ctx.d + 1:
        raise InvalidPathError(f"path dimension {path.dim} != d+1 = {ctx.d + 1}")
    sig = algebra.unit(ctx)
    for delta in path.increments():
        sig = algebra.mul(sig, segment_signature(ctx, delta))
    return sig


def scale_path(path, t):
    """Carry a horizon-1 path to horizon t.

    Knot times scale by t, the time-like component by t and the spatial
    components by sqrt(t), so the signature transforms by the sqrt(t)
    dilation.
    """
    if t <= 0.0:
        raise DomainError(f"target horizon must be positive, got {t}")
    if abs(path.t_end - 1.0) > 1e-12:
        raise DomainError(f"scale_path expects a horizon-1 path, got t_end={path.t_end}")
    pts = path.points.copy()
    pts[:, 0] *= t
    pts[:, 1:] *= math.sqrt(t)
    return PiecewisePath(t, list(zip(path.times * t, pts)))


def path_to_dict(path):
    return {
        "t_end": path.t_end,
        "knots": [
            {"s": float(s), "x": [float(v) for v in x]}
            for s, x in zip(path.times, path.points)
        ],
    }


def path_from_dict(data):
    knots = [(item["s"], item["x"]) for item in data["knots"]]
    return PiecewisePath(float(data["t_end"]), knots)
