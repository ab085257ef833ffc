"""Density and support of free convolutions by Stieltjes inversion."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError
from .measures import Measure
from .subordination import ConvolutionKind, SolverOptions, SubordinationSolution

__all__ = ["DensityGrid", "SupportSet", "density", "support", "default_window"]

DEFAULT_Y = 1e-6
DEFAULT_POINTS = 2001
DEFAULT_THRESHOLD = 1e-4


@dataclass(frozen=True, eq=False)
class DensityGrid:
    kind: ConvolutionKind
    abscissae: np.ndarray
    densities: np.ndarray
    y: float

    def mass(self):
        return float(np.trapezoid(self.densities, self.abscissae))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["angle" if self.kind == ConvolutionKind.CIRCLE else "x", "density"])
            for a, d in zip(self.abscissae, self.densities):
                w.writerow([repr(float(a)), repr(float(d))])

    @classmethod
    def from_csv(cls, path, kind, y=DEFAULT_Y):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(ConvolutionKind.parse(kind), data[:, 0], data[:, 1], y)


@dataclass(frozen=True)
class SupportSet:
    """Numerical support ``K`` of a convolution.

    ``components`` are closed intervals (or arcs given by start/end angles,
    ``end`` possibly beyond pi when the arc wraps) of positive length;
    ``atoms`` are isolated points of ``K`` (real numbers, or angles on the
    circle).  ``margin`` is the exclusion distance used for boundary work.
    """

    kind: ConvolutionKind
    components: tuple
    atoms: tuple = ()
    threshold: float = DEFAULT_THRESHOLD
    margin: float = 0.0
    flags: tuple = ()

    @property
    def circle(self):
        return self.kind == ConvolutionKind.CIRCLE

    def distance(self, x):
        """Distance from ``x`` to ``K``; arc length on the circle."""
        x = np.asarray(x)
        if self.circle:
            phi = np.angle(x) if np.iscomplexobj(x) else x
            d = np.full(np.shape(phi), np.inf)
            for a, b in self.components:
                mid, half = (a + b) / 2, (b - a) / 2
                off = np.abs(_wrap(phi - mid))
                d = np.minimum(d, np.maximum(off - half, 0.0))
            for t in self.atoms:
                d = np.minimum(d, np.abs(_wrap(phi - t)))
        else:
            xr = np.real(x)
            d = np.full(np.shape(xr), np.inf)
            for a, b in self.components:
                d = np.minimum(d, np.maximum(np.maximum(a - xr, xr - b), 0.0))
            for t in self.atoms:
                d = np.minimum(d, np.abs(xr - t))
        return float(d) if d.ndim == 0 else d

    def gaps(self):
        """Open gap components of the complement, sorted.

        On the line the two unbounded gaps carry infinite endpoints; on the
        circle each gap is an arc ``(start, end)`` with ``end > start``.
        """
        if self.circle:
            pts = [(a, b) for a, b in self.components] + [(t, t) for t in self.atoms]
            if not pts:
                return [(-math.pi, math.pi)]
            pts.sort()
            out = []
            for i, (a, b) in enumerate(pts):
                na = pts[(i + 1) % len(pts)][0] + (2 * math.pi if i + 1 == len(pts) else 0.0)
                if na > b:
                    out.append((b, na))
            return out
        pieces = sorted([(a, b) for a, b in self.components] + [(t, t) for t in self.atoms])
        if not pieces:
            return [(-math.inf, math.inf)]
        out = [(-math.inf, pieces[0][0])]
        hi = pieces[0][1]
        for a, b in pieces[1:]:
            if a > hi:
                out.append((hi, a))
            hi = max(hi, b)
        out.append((hi, math.inf))
        return out

    def bounds(self):
        vals = [v for c in self.components for v in c] + list(self.atoms)
        return (min(vals), max(vals)) if vals else (0.0, 0.0)

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "components": [[float(a), float(b)] for a, b in self.components],
            "atoms": [float(t) for t in self.atoms],
            "threshold": float(self.threshold),
            "margin": float(self.margin),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(ConvolutionKind.parse(d["kind"]), tuple(tuple(c) for c in d["components"]),
                   tuple(d.get("atoms", ())), d.get("threshold", DEFAULT_THRESHOLD),
                   d.get("margin", 0.0), tuple(d.get("flags", ())))

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def _solution(mu, nu, kind, opts):
    if isinstance(mu, SubordinationSolution):
        return mu
    return SubordinationSolution(kind, mu, nu, opts)


def default_window(sol):
    """Interval certain to contain the support of the convolution."""
    mu, nu = sol.mu, sol.nu
    if sol.kind == ConvolutionKind.CIRCLE:
        return -math.pi, math.pi
    lo1, hi1 = mu.support_bounds()
    lo2, hi2 = nu.support_bounds()
    if sol.kind == ConvolutionKind.ADDITIVE:
        lo, hi = lo1 + lo2, hi1 + hi2
    else:
        lo, hi = lo1 * lo2, hi1 * hi2
    pad = 0.02 * max(hi - lo, 1e-3 * max(1.0, abs(lo), abs(hi)))
    return lo - pad, hi + pad


def _density_values(sol, x, y):
    x = np.asarray(x, dtype=float)
    if sol.kind == ConvolutionKind.ADDITIVE:
        _, _, F = sol.solve(x + 1j * y)
        g = 1.0 / F
        return -g.imag / np.pi
    if sol.kind == ConvolutionKind.POSITIVE:
        w = x + 1j * y
        _, _, eta = sol.solve(1.0 / np.conj(w))
        g = 1.0 / (w * (1.0 - np.conj(eta)))
        return -g.imag / np.pi
    z = (1.0 - y) * np.exp(-1j * x)
    _, _, eta = sol.solve(z)
    return np.real((1 + eta) / (1 - eta)) / (2 * np.pi)


def density(mu, nu=None, kind=ConvolutionKind.ADDITIVE, abscissae=None, y=DEFAULT_Y,
            opts: SolverOptions | None = None, points=DEFAULT_POINTS):
    """Density of ``mu (+) nu`` or ``mu (x) nu`` on a grid.

    ``densities[i] = -(1/pi) Im G(x_i + i y)``, clipped at zero.  On the
    circle the abscissae are angles and the density is taken against
    ``d(angle)``.  ``mu`` may also be a ready :class:`SubordinationSolution`.
    """
    sol = _solution(mu, nu, kind, opts)
    if abscissae is None:
        lo, hi = default_window(sol)
        abscissae = np.linspace(lo, hi, points)
    x = np.asarray(abscissae, dtype=float)
    if y <= 0:
        raise ValueError("inversion height y must be positive")
    try:
        d = _density_values(sol, x, y)
    except ConvergenceError as exc:
        raise ConvergenceError(f"density: {exc}", residual=exc.residual, index=exc.index) from None
    return DensityGrid(sol.kind, x, np.clip(d, 0.0, None), float(y))


def _shortcut_support(sol, margin_rel):
    """Support of a convolution with a point mass: shift, dilation or rotation."""
    which, c = sol._shortcut
    other = sol._b if which == "a" else sol._a
    kind = sol.kind
    if kind == ConvolutionKind.ADDITIVE:
        comps = [(a + c, b + c) for a, b in other.intervals]
        atoms = [float(np.real(t)) + c for t in other.atom_points] if other.family != "empirical" \
            else [float(t) + c for t in other.atoms]
    elif kind == ConvolutionKind.POSITIVE:
        comps = [(a * c, b * c) for a, b in other.intervals]
        pts = other.atoms if other.family == "empirical" else other.atom_points
        atoms = [float(np.real(t)) * c for t in pts]
    else:
        rot = float(np.angle(c))
        atoms = [float(_wrap(np.angle(t) + rot)) for t in other.atom_points]
        comps = []
    atoms = sorted(set(atoms))
    return _make_support(kind, comps, atoms, DEFAULT_THRESHOLD, margin_rel, ("exact-point-mass",))


def _make_support(kind, comps, atoms, threshold, margin_rel, flags):
    vals = [v for c in comps for v in c] + list(atoms)
    if kind == ConvolutionKind.CIRCLE:
        diam = 2 * math.pi
    else:
        diam = (max(vals) - min(vals)) if vals else 0.0
        if diam == 0:
            diam = max(1.0, max((abs(v) for v in vals), default=1.0))
    return SupportSet(kind, tuple((float(a), float(b)) for a, b in comps),
                      tuple(float(t) for t in atoms), float(threshold),
                      float(margin_rel * diam), tuple(flags))


def support(mu, nu=None, kind=ConvolutionKind.ADDITIVE, opts: SolverOptions | None = None,
            y=DEFAULT_Y, threshold=DEFAULT_THRESHOLD, points=DEFAULT_POINTS, merge_steps=2,
            refine_y=1e-10):
    """Support of the convolution as a :class:`SupportSet`.

    Grid points with density above ``threshold`` are grouped into runs;
    runs separated by fewer than ``merge_steps`` grid steps are merged, and
    each endpoint is refined by bisection on the threshold crossing to 1e-6.
    The refinement evaluates the density at the lower height ``refine_y``:
    at height ``y`` the Poisson smearing of an inverse square-root edge stays
    above threshold up to ~1e-2 beyond the true endpoint.
    Components narrower than three grid steps are kept and flagged.
    """
    sol = _solution(mu, nu, kind, opts)
    margin_rel = sol.opts.margin
    if sol._shortcut is not None:
        return _shortcut_support(sol, margin_rel)
    circle = sol.kind == ConvolutionKind.CIRCLE
    lo, hi = default_window(sol)
    x = np.linspace(lo, hi, points)
    if circle:
        x = x[:-1]
    step = x[1] - x[0]
    d = _density_values(sol, x, y)
    above = d > threshold
    if not np.any(above):
        return _make_support(sol.kind, [], [], threshold, margin_rel, ("empty",))
    if circle and np.all(above):
        return _make_support(sol.kind, [(-math.pi, math.pi)], [], threshold, margin_rel, ("full-circle",))

    # runs of consecutive points above threshold (cyclic on the circle)
    idx = np.flatnonzero(above)
    if circle:
        shift = int(np.flatnonzero(~above)[0])
        order = (np.arange(x.size) + shift) % x.size
        ab = above[order]
        idx = np.flatnonzero(ab)
        runs = _runs(idx, merge_steps)
        runs = [(order[i], order[j]) for i, j in runs]
    else:
        runs = _runs(idx, merge_steps)

    def f(t):
        return _density_values(sol, t, refine_y) - threshold

    pending, atoms, flags = [], [], []
    for i, j in runs:
        lo, hi = x[i], x[j]
        if circle and hi < lo:
            hi += 2 * math.pi
        n = int(round((hi - lo) / step)) + 1
        grid = lo + step * np.arange(n)
        # only the ends of a run matter for the endpoints
        ends = np.unique(np.r_[np.arange(min(n, 40)), np.arange(max(n - 40, 0), n)])
        vals = np.full(n, np.nan)
        vals[ends] = f(grid[ends])
        if not np.any(vals[ends] > 0) and n > ends.size:
            vals = f(grid)
        inside = np.flatnonzero(vals > 0)
        atom = None
        if n < 100:
            peak = float(grid[int(np.argmax(_density_values(sol, grid, y)))])
            atom = _atom_location(sol, peak - step, peak + step)
        if inside.size == 0:
            if atom is not None:
                atoms.append(atom)
            else:
                flags.append(f"vanishing-component:{lo:.6g}")
            continue
        k0, k1 = inside[0], inside[-1]
        left_out = grid[k0 - 1] if k0 > 0 else lo - step
        right_out = grid[k1 + 1] if k1 < n - 1 else hi + step
        fix_a = not (circle or i > 0 or k0 > 0)
        fix_b = not (circle or j < x.size - 1 or k1 < n - 1)
        pending.append((left_out, grid[k0], fix_a, right_out, grid[k1], fix_b, atom))

    if pending:
        P = np.array([[p[0], p[1], p[3], p[4]] for p in pending], dtype=float)
        ends = _bisect_many(f, np.r_[P[:, 0], P[:, 2]], np.r_[P[:, 1], P[:, 3]])
        A, B = ends[:len(pending)], ends[len(pending):]
    comps = []
    for q, (lo_out, lo_in, fix_a, hi_out, hi_in, fix_b, atom) in enumerate(pending):
        a = lo_in if fix_a else A[q]
        b = hi_in if fix_b else B[q]
        if atom is None and b - a < 4 * step:
            atom = _atom_location(sol, a - step, b + step)
        if atom is not None and b - a < 4 * step:
            atoms.append(atom)
            continue
        if atom is not None:
            flags.append(f"embedded-atom:{atom:.9g}")
        if (b - a) / step < 3:
            flags.append(f"narrow-component:{len(comps)}")
        comps.append((float(a), float(b)))
    if circle:
        comps = [(float(_wrap(a)), float(_wrap(a)) + (b - a)) for a, b in comps]
        comps.sort()
        atoms = [float(_wrap(t)) for t in atoms]
    return _make_support(sol.kind, comps, sorted(atoms), threshold, margin_rel, flags)


def _atom_location(sol, lo, hi):
    """Location of an atom of the convolution in ``[lo, hi]``, or None.

    Near an atom of mass m the density at height y peaks at m/(pi y), so
    ``pi * y * density`` is stable in y; for a bounded density it scales
    like y.
    """
    def mass(t, yy):
        return math.pi * yy * float(_density_values(sol, np.array([t]), yy)[0])

    # zoom in on the peak, keeping the inversion height a tenth of the
    # grid spacing so the Lorentzian profile of an atom is always resolved
    a, b = lo, hi
    for _ in range(40):
        grid = np.linspace(a, b, 21)
        sp = grid[1] - grid[0]
        yy = max(sp / 2, 1e-11)
        k = int(np.argmax(_density_values(sol, grid, yy)))
        a, b = grid[max(k - 2, 0)], grid[min(k + 2, 20)]
        if sp < 1e-11:
            break
    t = float(grid[k])
    m1, m2 = mass(t, 1e-8), mass(t, 1e-9)
    if m2 > 1e-6 and m2 > 0.5 * m1:
        return t
    return None


def _runs(idx, merge_steps):
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i - prev > merge_steps:
            runs.append((start, prev))
            start = i
        prev = i
    runs.append((start, prev))
    return runs


def _bisect_many(f, outside, inside, tol=1e-6):
    """Vectorised threshold crossings between points below and above threshold."""
    a = np.asarray(outside, dtype=float).copy()
    b = np.asarray(inside, dtype=float).copy()
    already = f(a) > 0
    while np.max(np.abs(b - a), initial=0.0) > tol:
        m = 0.5 * (a + b)
        up = f(m) > 0
        b = np.where(up, m, b)
        a = np.where(up, a, m)
    return np.where(already, outside, 0.5 * (a + b))
