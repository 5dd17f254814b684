"""Bounded-variation functions on [0, 1] and decomposed Borel measures.

A :class:`BVFunction` is stored decomposed as jump part + absolutely
continuous density + singular-continuous (Cantor template) part, normalized
so that ``c(0) = 0`` and ``c`` is right-continuous.  Its distributional
derivative against test functions vanishing only at the left endpoint is a
finite measure; see :func:`derivative_measure`.

The singular-continuous template is the Cantor staircase truncated at a
finite construction depth ``d``: numerically it is realized by ``2**d``
equal micro-jumps at the midpoints of the level-``d`` ternary intervals.
The corresponding measure component is classified as singular-continuous
(it is the numerical stand-in for the true Cantor measure), never as part
of the atom list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .grid import GridFunction

__all__ = [
    "BVFunction",
    "BorelMeasure",
    "cantor_support_midpoints",
    "cantor_cdf",
    "derivative_measure",
    "total_variation",
    "conv_reflect",
    "detect_atoms",
]

_ATOM_EPS = 1e-14


def cantor_support_midpoints(depth: int) -> np.ndarray:
    """Midpoints of the 2**depth level-``depth`` ternary intervals."""
    if depth < 1:
        raise InvalidInputError("cantor depth must be >= 1")
    lefts = np.array([0.0])
    for k in range(1, depth + 1):
        width = 3.0 ** (-k)
        lefts = np.sort(np.concatenate([lefts, lefts + 2.0 * width]))
    return lefts + 0.5 * 3.0 ** (-depth)


def cantor_cdf(x, depth: int):
    """Distribution function of the depth-``depth`` micro-jump realization."""
    pts = cantor_support_midpoints(depth)
    x = np.asarray(x, dtype=float)
    out = np.searchsorted(pts, x, side="right") / pts.size
    return out if out.ndim else float(out)


def _normalize_jumps(jumps) -> np.ndarray:
    if jumps is None:
        return np.zeros((0, 2))
    arr = np.asarray(jumps, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    arr = np.atleast_2d(arr)
    if arr.shape[1] != 2:
        raise InvalidInputError("jumps must be a list of (location, height) pairs")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("jumps contain non-finite entries")
    order = np.argsort(arr[:, 0])
    arr = arr[order]
    return arr


@dataclass(frozen=True)
class BVFunction:
    """Normalized BV function: jumps + AC density + Cantor-template part.

    ``jumps`` is a list of pairs ``(x_j, h_j)`` with ``x_j`` in (0, 1] and
    ``h_j != 0``; ``ac_density`` is a grid function on [0, 1] (or None);
    the singular part is ``singular_scale`` times the depth-``singular_depth``
    Cantor staircase.  ``c(0) = 0`` and right-continuity hold by construction.
    """

    jumps: np.ndarray = None
    ac_density: GridFunction | None = None
    singular_depth: int = 12
    singular_scale: float = 0.0

    def __post_init__(self):
        arr = _normalize_jumps(self.jumps)
        if arr.size:
            if np.any(arr[:, 0] <= 0) or np.any(arr[:, 0] > 1):
                raise InvalidInputError("jump locations must lie in (0, 1]")
            if np.any(arr[:, 1] == 0):
                raise InvalidInputError("jump heights must be nonzero")
            if np.any(np.diff(arr[:, 0]) == 0):
                raise InvalidInputError("jump locations must be distinct")
        arr.setflags(write=False)
        object.__setattr__(self, "jumps", arr)
        if self.ac_density is not None:
            if (self.ac_density.a, self.ac_density.b) != (0.0, 1.0):
                raise InvalidInputError("ac_density must live on [0, 1]")
        if self.singular_scale != 0.0 and self.singular_depth < 1:
            raise InvalidInputError("singular part needs depth >= 1")

    def evaluate(self, x):
        """c(x), right-continuous, with c(0) = 0."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        if self.jumps.size:
            locs, hts = self.jumps[:, 0], self.jumps[:, 1]
            idx = np.searchsorted(locs, x, side="right")
            cum = np.concatenate(([0.0], np.cumsum(hts)))
            out = out + cum[idx]
        if self.ac_density is not None:
            out = out + self.ac_density.primitive_at(x)
        if self.singular_scale != 0.0:
            out = out + self.singular_scale * cantor_cdf(x, self.singular_depth)
        return out if out.ndim else float(out)

    def value_at_one(self) -> float:
        return float(self.evaluate(1.0))

    def describe(self) -> dict:
        return {
            "jumps": [[float(x), float(h)] for x, h in self.jumps],
            "ac_mass": float(np.sum(np.abs(self.ac_density.values)) * self.ac_density.cell_width)
            if self.ac_density is not None else 0.0,
            "singular": {"kind": "cantor" if self.singular_scale else "none",
                         "depth": int(self.singular_depth),
                         "scale": float(self.singular_scale)},
        }

    def to_json_dict(self) -> dict:
        d = {"jumps": [[float(x), float(h)] for x, h in self.jumps]}
        if self.ac_density is not None:
            d["ac_density"] = {"n": self.ac_density.n,
                               "values": [float(v) for v in self.ac_density.values]}
        else:
            d["ac_density"] = None
        d["singular"] = {"kind": "cantor" if self.singular_scale else "none",
                         "depth": int(self.singular_depth),
                         "scale": float(self.singular_scale)}
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, d: dict) -> "BVFunction":
        ac = d.get("ac_density")
        density = None
        if ac:
            density = GridFunction(0.0, 1.0, np.asarray(ac["values"], dtype=float))
            if density.n != ac.get("n", density.n):
                raise InvalidInputError("ac_density: n does not match values length")
        sing = d.get("singular") or {"kind": "none", "depth": 12, "scale": 0.0}
        scale = float(sing.get("scale", 0.0)) if sing.get("kind") == "cantor" else 0.0
        return cls(jumps=d.get("jumps"), ac_density=density,
                   singular_depth=int(sing.get("depth", 12)), singular_scale=scale)

    @classmethod
    def load(cls, path) -> "BVFunction":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class BorelMeasure:
    """Finite signed measure on [0, 1], stored decomposed.

    ``mu = mu_a + mu_j + mu_c``: atom list, AC density (grid function on
    [0, 1]) and a Cantor-template singular-continuous part.  The parts are
    mutually singular by construction, so the total variation norm is the
    sum of the part norms.
    """

    atoms: np.ndarray = None
    ac_density: GridFunction | None = None
    sc_depth: int = 12
    sc_scale: float = 0.0

    def __post_init__(self):
        arr = _normalize_jumps(self.atoms)
        if arr.size:
            if np.any(arr[:, 0] < 0) or np.any(arr[:, 0] > 1):
                raise InvalidInputError("atom locations must lie in [0, 1]")
            arr = arr[arr[:, 1] != 0]
        arr.setflags(write=False)
        object.__setattr__(self, "atoms", arr)
        if self.ac_density is not None and (self.ac_density.a, self.ac_density.b) != (0.0, 1.0):
            raise InvalidInputError("ac_density must live on [0, 1]")

    # -- decomposed part norms -------------------------------------------
    def atom_norm(self) -> float:
        return float(np.sum(np.abs(self.atoms[:, 1]))) if self.atoms.size else 0.0

    def ac_norm(self) -> float:
        if self.ac_density is None:
            return 0.0
        return float(np.sum(np.abs(self.ac_density.values)) * self.ac_density.cell_width)

    def sc_norm(self) -> float:
        return abs(self.sc_scale)

    def total_variation_norm(self) -> float:
        return self.atom_norm() + self.ac_norm() + self.sc_norm()

    def sc_points_weights(self):
        if self.sc_scale == 0.0:
            return np.zeros(0), np.zeros(0)
        pts = cantor_support_midpoints(self.sc_depth)
        wts = np.full(pts.size, self.sc_scale / pts.size)
        return pts, wts

    def window_variation(self, a: float, b: float) -> float:
        """|mu| of the closed window [a, b] (atoms at endpoints count)."""
        if b < a:
            raise InvalidInputError("window_variation: need a <= b")
        total = 0.0
        if self.atoms.size:
            locs, wts = self.atoms[:, 0], self.atoms[:, 1]
            total += float(np.sum(np.abs(wts[(locs >= a) & (locs <= b)])))
        if self.ac_density is not None:
            dens = self.ac_density
            absdens = GridFunction(dens.a, dens.b, np.abs(dens.values))
            total += float(absdens.primitive_at(b) - absdens.primitive_at(a))
        if self.sc_scale != 0.0:
            pts, wts = self.sc_points_weights()
            total += float(np.sum(np.abs(wts[(pts >= a) & (pts <= b)])))
        return total

    def pairing(self, g: Callable) -> float:
        """Integral of g against mu; atoms exact, AC/SC by quadrature.

        ``g`` must accept a vector of points in [0, 1].
        """
        total = 0.0
        if self.atoms.size:
            total += float(np.sum(self.atoms[:, 1] * np.asarray(g(self.atoms[:, 0]))))
        if self.ac_density is not None:
            dens = self.ac_density
            total += float(dens.cell_width * np.sum(dens.values * np.asarray(g(dens.midpoints()))))
        pts, wts = self.sc_points_weights()
        if pts.size:
            total += float(np.sum(wts * np.asarray(g(pts))))
        return total

    def point_masses(self):
        """All point-realized components: atoms plus SC micro-atoms."""
        pts, wts = self.sc_points_weights()
        if self.atoms.size:
            pts = np.concatenate([self.atoms[:, 0], pts])
            wts = np.concatenate([self.atoms[:, 1], wts])
        return pts, wts

    def lumped_density(self, n: int) -> np.ndarray:
        """Cell-lumped density vector on an n-cell grid: mu(cell)/width."""
        h = 1.0 / n
        dens = np.zeros(n)
        if self.ac_density is not None:
            # exact integral of the stored density over each target cell
            edges = np.arange(n + 1) * h
            prim = self.ac_density.primitive_at(edges)
            dens += np.diff(prim) / h
        pts, wts = self.point_masses()
        if pts.size:
            idx = np.minimum(np.floor(pts * n).astype(int), n - 1)
            np.add.at(dens, idx, wts / h)
        return dens

    def drop_atom_at(self, loc: float, tol: float = 1e-12) -> "BorelMeasure":
        """Return a copy with any atom within ``tol`` of ``loc`` removed."""
        if not self.atoms.size:
            return self
        keep = np.abs(self.atoms[:, 0] - loc) > tol
        return BorelMeasure(atoms=self.atoms[keep], ac_density=self.ac_density,
                            sc_depth=self.sc_depth, sc_scale=self.sc_scale)

    def atom_weight_at(self, loc: float, tol: float = 1e-12) -> float:
        if not self.atoms.size:
            return 0.0
        mask = np.abs(self.atoms[:, 0] - loc) <= tol
        return float(np.sum(self.atoms[mask, 1]))


def derivative_measure(c: BVFunction) -> BorelMeasure:
    """Distributional derivative of ``c`` against test functions with phi(0) = 0.

    Integration by parts of ``phi -> -<c, phi'>`` over test functions that
    vanish only at the left endpoint gives the Stieltjes measure ``dc`` on
    (0, 1] *plus a boundary atom* ``-c(1) * delta_1``.  The boundary atom is
    not an artifact: it changes zero-class verdicts whenever ``c`` does not
    tend to 0 at the right endpoint, so it is kept explicitly in the atom
    list (net weight at 1 equals ``-lim_{x->1-} c(x)``).
    """
    if not isinstance(c, BVFunction):
        raise InvalidInputError("derivative_measure expects a BVFunction")
    atoms = []
    jump_at_one = 0.0
    for x, h in c.jumps:
        if x < 1.0:
            atoms.append((x, h))
        else:
            jump_at_one += h
    net_boundary = jump_at_one - c.value_at_one()
    if abs(net_boundary) > _ATOM_EPS:
        atoms.append((1.0, net_boundary))
    return BorelMeasure(atoms=np.asarray(atoms).reshape(-1, 2),
                        ac_density=c.ac_density,
                        sc_depth=c.singular_depth, sc_scale=c.singular_scale)


def total_variation(c: BVFunction, window=(0.0, 1.0)) -> float:
    """Exact variation of ``c`` over the closed window [a, b].

    Computed from the decomposed representation: jump magnitudes inside the
    window (an atom sitting exactly at a degenerate window ``a == b`` still
    contributes), integral of |density|, and the monotone Cantor part.
    """
    a, b = float(window[0]), float(window[1])
    if not (0.0 <= a <= b <= 1.0):
        raise InvalidInputError("total_variation: window must satisfy 0 <= a <= b <= 1")
    total = 0.0
    if c.jumps.size:
        locs, hts = c.jumps[:, 0], c.jumps[:, 1]
        total += float(np.sum(np.abs(hts[(locs >= a) & (locs <= b)])))
    if c.ac_density is not None:
        dens = c.ac_density
        absdens = GridFunction(dens.a, dens.b, np.abs(dens.values))
        total += float(absdens.primitive_at(b) - absdens.primitive_at(a))
    if c.singular_scale != 0.0:
        pts = cantor_support_midpoints(c.singular_depth)
        inside = (pts >= a) & (pts <= b)
        total += abs(c.singular_scale) * float(np.sum(inside)) / pts.size
    return total


def conv_reflect(f: GridFunction, mu: BorelMeasure, tau: float,
                 n_out: int | None = None) -> GridFunction:
    """Reflected convolution ``s -> int f(x - s) dmu(x)`` on [0, tau].

    ``f`` lives on [0, 1] and is extended by 0 outside; atoms (including the
    SC micro-atoms) are evaluated exactly through piecewise-constant lookup,
    the AC part by midpoint quadrature on the density's own grid.  The
    result is sampled at the midpoints of an ``n_out``-cell grid on [0, tau].
    """
    if not 0 < tau <= 1.0 + 1e-12:
        raise InvalidInputError("conv_reflect: need 0 < tau <= 1")
    if (f.a, f.b) != (0.0, 1.0):
        raise InvalidInputError("conv_reflect: f must live on [0, 1]")
    if n_out is None:
        n_out = max(1, round(tau * f.n))
    s = (np.arange(n_out) + 0.5) * (tau / n_out)
    vals = np.zeros(n_out)
    pts, wts = mu.point_masses()
    for loc, w in zip(pts, wts):
        vals += w * f.evaluate(loc - s)
    if mu.ac_density is not None:
        dens = mu.ac_density
        args = dens.midpoints()[None, :] - s[:, None]
        vals += dens.cell_width * (f.evaluate(args) @ dens.values)
    return GridFunction(a=0.0, b=float(tau), values=vals, space_tag="L1")


def detect_atoms(mu, tol: float, min_window: float = 2.0 ** -20):
    """Locate atoms of a measure from its windowed variation alone.

    ``mu`` is either a :class:`BorelMeasure` or a callable ``(a, b) -> |mu|([a, b])``.
    Dyadic windows over [0, 1] are refined; a window survives a refinement
    step when its variation stays at or above ``tol``.  Windows that stay
    heavy all the way down to ``min_window`` width are reported as atoms,
    with the stabilized window variation as the weight estimate (weights are
    magnitudes: the variation oracle carries no sign information).
    """
    if tol <= 0:
        raise InvalidInputError("detect_atoms: tol must be positive")
    mass = mu.window_variation if isinstance(mu, BorelMeasure) else mu
    intervals = [(0.0, 1.0)]
    while intervals and (intervals[0][1] - intervals[0][0]) > min_window:
        nxt = []
        for a, b in intervals:
            mid = 0.5 * (a + b)
            for lo, hi in ((a, mid), (mid, b)):
                if mass(lo, hi) >= tol:
                    nxt.append((lo, hi))
        intervals = nxt
    if not intervals:
        return []
    # merge adjacent survivors (an atom at a dyadic point lands in two windows)
    intervals.sort()
    clusters = [[intervals[0]]]
    for iv in intervals[1:]:
        if iv[0] - clusters[-1][-1][1] <= min_window:
            clusters[-1].append(iv)
        else:
            clusters.append([iv])
    out = []
    for cluster in clusters:
        lo = cluster[0][0]
        hi = cluster[-1][1]
        out.append(((lo + hi) / 2.0, mass(lo, hi)))
    return out
