"""Uniform-grid representations of scalar functions on intervals.

A :class:`GridFunction` stores one value per cell of a uniform grid
(midpoint convention: the stored value is the function value on the whole
cell, nominally sampled at the cell midpoint).  Step functions with
arbitrary grid-aligned breakpoints and partitions of an interval complete
the picture.  Norms and quadrature operate on these representations only;
nothing here knows about semigroups or measures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "GridFunction",
    "StepFunction",
    "Partition",
    "lp_norm",
    "integrate_curve",
    "continuous_interpolant",
]


def _check_finite(values, what="values"):
    arr = np.asarray(values)
    if arr.size == 0:
        raise InvalidInputError(f"{what}: empty array")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what}: non-finite entries")
    return arr


@dataclass(frozen=True)
class GridFunction:
    """Cell values of a scalar function on a uniform grid of [a, b].

    ``values[i]`` is the value on cell ``[a + i*w, a + (i+1)*w)`` with
    ``w = (b - a)/n``; the last cell is closed at ``b``.  ``space_tag``
    records which norm the function nominally lives in: ``"L1"``,
    ``"Lp"`` (with exponent ``p``) or ``"sup"``.
    """

    a: float
    b: float
    values: np.ndarray
    space_tag: str = "L1"
    p: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidInputError("GridFunction: need b > a")
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if vals.ndim != 1:
            raise InvalidInputError("GridFunction: values must be one-dimensional")
        _check_finite(vals, "GridFunction values")
        if self.space_tag not in ("L1", "Lp", "sup"):
            raise InvalidInputError(f"unknown space_tag {self.space_tag!r}")
        if self.space_tag == "Lp" and not self.p >= 1:
            raise InvalidInputError("Lp tag requires p >= 1")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def cell_width(self) -> float:
        return (self.b - self.a) / self.n

    def midpoints(self) -> np.ndarray:
        w = self.cell_width
        return self.a + (np.arange(self.n) + 0.5) * w

    def edges(self) -> np.ndarray:
        return self.a + np.arange(self.n + 1) * (self.b - self.a) / self.n

    def evaluate(self, x, outside=0.0):
        """Piecewise-constant (right-continuous) evaluation; `outside` off [a, b]."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.a) / self.cell_width).astype(int)
        idx = np.where(x == self.b, self.n - 1, idx)  # b belongs to the last cell
        inside = (x >= self.a) & (x <= self.b)
        safe = np.clip(idx, 0, self.n - 1)
        out = np.where(inside, self.values[safe], outside)
        return out if out.ndim else float(out)

    def primitive_at(self, x):
        """Exact antiderivative of the piecewise-constant function at x.

        Returns ``int_a^x values`` (piecewise linear in x, clamped so the
        function is treated as 0 outside [a, b]).
        """
        x = np.asarray(x, dtype=float)
        w = self.cell_width
        cum = np.concatenate(([0.0], np.cumsum(self.values) * w))
        t = np.clip((x - self.a) / w, 0.0, self.n)
        lo = np.floor(t).astype(int)
        lo = np.clip(lo, 0, self.n - 1)
        frac = t - lo
        out = cum[lo] + frac * w * self.values[lo]
        return out if out.ndim else float(out)

    def norm(self) -> float:
        if self.space_tag == "sup":
            return lp_norm(self, math.inf)
        return lp_norm(self, self.p if self.space_tag == "Lp" else 1.0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for x, v in zip(self.midpoints(), self.values):
                writer.writerow([f"{x:.17g}", f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path, space_tag="L1", p=1.0):
        xs, vs = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["x", "value"]:
                raise InvalidInputError(f"{path}: expected header x,value")
            for row in reader:
                xs.append(float(row[0]))
                vs.append(float(row[1]))
        xs = np.asarray(xs)
        if len(xs) < 1:
            raise InvalidInputError(f"{path}: no samples")
        w = xs[1] - xs[0] if len(xs) > 1 else 1.0
        return cls(a=xs[0] - w / 2, b=xs[-1] + w / 2, values=np.asarray(vs),
                   space_tag=space_tag, p=p)


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function on [0, tau].

    ``breakpoints`` are strictly increasing with ``breakpoints[0] == 0``;
    ``values[i]`` is taken on ``[breakpoints[i], breakpoints[i+1])`` and the
    final value extends to ``tau`` itself.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bps = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bps.ndim != 1 or vals.ndim != 1 or bps.size != vals.size + 1:
            raise InvalidInputError("StepFunction: need len(breakpoints) == len(values)+1")
        if bps[0] != 0.0:
            raise InvalidInputError("StepFunction: breakpoints must start at 0")
        if not np.all(np.diff(bps) > 0):
            raise InvalidInputError("StepFunction: breakpoints must be strictly increasing")
        _check_finite(vals, "StepFunction values")
        bps = bps.copy(); bps.setflags(write=False)
        vals = vals.copy(); vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)

    @property
    def tau(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def num_pieces(self) -> int:
        return self.values.shape[0]

    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def min_width(self) -> float:
        return float(np.min(self.widths()))

    def evaluate(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        idx = np.clip(idx, 0, self.num_pieces - 1)
        out = np.where((t >= 0) & (t <= self.tau), self.values[idx], 0.0)
        return out if out.ndim else float(out)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_left", "t_right", "value"])
            for tl, tr, v in zip(self.breakpoints[:-1], self.breakpoints[1:], self.values):
                writer.writerow([f"{tl:.17g}", f"{tr:.17g}", f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path):
        lefts, rights, vals = [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["t_left", "t_right", "value"]:
                raise InvalidInputError(f"{path}: expected header t_left,t_right,value")
            for row in reader:
                lefts.append(float(row[0])); rights.append(float(row[1])); vals.append(float(row[2]))
        bps = np.asarray(lefts + rights[-1:])
        return cls(breakpoints=bps, values=np.asarray(vals))


@dataclass(frozen=True)
class Partition:
    """Strictly increasing points 0 = t_0 < ... < t_n = tau."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidInputError("Partition: need at least two points")
        if pts[0] != 0.0 or not np.all(np.diff(pts) > 0):
            raise InvalidInputError("Partition: points must start at 0 and increase")
        pts = pts.copy(); pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def tau(self) -> float:
        return float(self.points[-1])

    @classmethod
    def dyadic(cls, tau: float, depth: int) -> "Partition":
        return cls(points=np.linspace(0.0, tau, 2 ** depth + 1))

    def refine(self) -> "Partition":
        """Insert the midpoint of every subinterval."""
        mids = 0.5 * (self.points[:-1] + self.points[1:])
        return Partition(points=np.sort(np.concatenate([self.points, mids])))


def lp_norm(f: GridFunction, p) -> float:
    """Discrete L^p norm of a grid function (sup of |values| for p = inf)."""
    vals = _check_finite(f.values, "lp_norm input")
    if p == math.inf or p == float("inf"):
        return float(np.max(np.abs(vals)))
    p = float(p)
    if p < 1:
        raise InvalidInputError(f"lp_norm: p must be >= 1, got {p}")
    return float((f.cell_width * np.sum(np.abs(vals) ** p)) ** (1.0 / p))


def lp_norm_samples(values: np.ndarray, weights, p) -> float:
    """L^p norm of cell samples with explicit cell widths (used internally)."""
    values = np.asarray(values)
    if p == math.inf:
        return float(np.max(np.abs(values))) if values.size else 0.0
    p = float(p)
    w = np.broadcast_to(np.asarray(weights, dtype=float), values.shape)
    return float(np.sum(w * np.abs(values) ** p) ** (1.0 / p))


def integrate_curve(samples, interval) -> np.ndarray:
    """Composite midpoint quadrature of a curve sampled at cell midpoints.

    ``samples`` has shape (m,) or (m, d): one (possibly vector) sample per
    cell of a uniform grid on ``interval``; the quadrature is exact for
    integrands that are affine on each cell.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise InvalidInputError("integrate_curve: empty sample sequence")
    if arr.ndim not in (1, 2):
        raise InvalidInputError("integrate_curve: samples must be (m,) or (m, d)")
    _check_finite(arr, "integrate_curve samples")
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise InvalidInputError("integrate_curve: need interval with b > a")
    width = (b - a) / arr.shape[0]
    return width * arr.sum(axis=0)


def continuous_interpolant(u: StepFunction, eps: float, n: int | None = None) -> GridFunction:
    """Piecewise-linear bridging of a step function.

    Keeps each piece constant on ``[t_{i-1}, t_i - eps]`` and interpolates
    linearly from ``u_i`` to ``u_{i+1}`` on ``[t_i - eps, t_i]`` at every
    interior breakpoint; after the last breakpoint the value stays constant.
    All bridged values are convex combinations of neighbouring step values,
    so the sup norm never increases.
    """
    if not eps > 0:
        raise InvalidInputError("continuous_interpolant: eps must be positive")
    if eps >= u.min_width():
        raise InvalidInputError(
            f"continuous_interpolant: eps={eps} not smaller than min cell width {u.min_width()}")
    tau = u.tau
    if n is None:
        n = int(min(max(1024, math.ceil(8.0 * tau / eps)), 1 << 20))
    xs = (np.arange(n) + 0.5) * (tau / n)

    vals = u.evaluate(xs)
    # overwrite the bridging windows [t_i - eps, t_i] at interior breakpoints
    for i in range(1, u.num_pieces):
        t_i = u.breakpoints[i]
        lo, hi = t_i - eps, t_i
        mask = (xs >= lo) & (xs <= hi)
        if np.any(mask):
            vi, vnext = u.values[i - 1], u.values[i]
            vals = np.where(mask, vnext + (vnext - vi) * (xs - t_i) / eps, vals)
    return GridFunction(a=0.0, b=tau, values=vals, space_tag="sup")
