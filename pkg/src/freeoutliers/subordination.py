"""Subordination functions of free additive and multiplicative convolution.

For two measures ``mu`` and ``nu`` the subordination functions satisfy

* additive:        ``G_{mu+nu}(z) = G_mu(w1(z)) = G_nu(w2(z))``, ``w1 + w2 - z = F_mu(w1)``
* multiplicative:  ``psi_{mu*nu}(z) = psi_mu(w1(z)) = psi_nu(w2(z))``, ``w1 w2 / z = eta_mu(w1)``

and are computed as attracting fixed points of explicit self-maps:

* additive:  ``w1 = T(w1)`` with ``T(w) = z + h_nu(z + h_mu(w))``
* multiplicative, on the ratio ``r = w1 / z``:
  ``T(r) = (r / eta_mu(z r)) * eta_nu(eta_mu(z r) / r)``.

Boundary values on the real line (or the unit circle) are obtained by an
epsilon ladder toward the boundary, Richardson extrapolation, and a final
Newton polish at the boundary point itself.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .errors import BoundaryError, ConvergenceError, ZeroFirstMomentError
from .measures import Measure, _F, _cauchy, _eta, _h, dist_to_support

log = logging.getLogger(__name__)

__all__ = [
    "ConvolutionKind",
    "SolverOptions",
    "SubordinationSolution",
    "BoundaryValue",
    "solve_additive",
    "solve_multiplicative_positive",
    "solve_multiplicative_circle",
    "continue_to_boundary",
    "derivative_at",
]


class ConvolutionKind(str, Enum):
    ADDITIVE = "additive-real"
    POSITIVE = "multiplicative-positive"
    CIRCLE = "multiplicative-circle"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("_", "-")
        aliases = {"additive": cls.ADDITIVE, "positive": cls.POSITIVE,
                   "multiplicative": cls.POSITIVE, "circle": cls.CIRCLE,
                   "unitary": cls.CIRCLE}
        if v in aliases:
            return aliases[v]
        return cls(v)

    @property
    def carriers(self):
        return {"additive-real": ("real", "positive"),
                "multiplicative-positive": ("positive",),
                "multiplicative-circle": ("circle",)}[self.value]


@dataclass(frozen=True)
class SolverOptions:
    """Numerical knobs for the fixed-point solver and the boundary ladder."""

    tol: float = 1e-13
    max_iter: int = 10_000
    damping: float = 0.5
    slow_ratio: float = 0.9
    newton: bool = True
    eps_ladder: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    ladder_tol: float = 1e-9
    margin: float = 1e-3          # relative to the support diameter
    residual_tol: float = 1e-10
    point_mass_shortcut: bool = True

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "eps_ladder" in d:
            d["eps_ladder"] = tuple(float(e) for e in d["eps_ladder"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver option(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["eps_ladder"] = list(self.eps_ladder)
        return d


# status codes of vectorised boundary evaluation
OK, POLE1, POLE2 = 0, 1, 2
ON_SUPPORT, NO_LADDER, NO_CONVERGENCE = -1, -2, -3
_STATUS_NAMES = {OK: "ok", POLE1: "pole-omega1", POLE2: "pole-omega2",
                 ON_SUPPORT: "too-close-to-support", NO_LADDER: "ladder-non-convergence",
                 NO_CONVERGENCE: "non-convergence"}


@dataclass
class BoundaryValue:
    """Boundary values of the subordination functions at points ``x``.

    ``omega1``/``omega2`` are real (additive, positive) or unimodular
    (circle).  An infinite value marks a pole; ``status`` holds one code per
    point (0 ok, 1/2 pole of omega1/omega2, negative on failure).
    """

    x: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    status: np.ndarray
    residual: np.ndarray
    state: np.ndarray = field(repr=False)

    @property
    def ok(self):
        return self.status >= 0

    def status_name(self, i=0):
        return _STATUS_NAMES[int(self.status[i])]


def _cdiff(f, w, rel=1e-7):
    d = rel * (1.0 + np.abs(w))
    return (f(w + d) - f(w - d)) / (2 * d)


_STALL_ITERS = 200
_STALL_TOL = 1e-9


def _fixed_point(T, w0, opts, project):
    """Vectorised fixed-point iteration with damping and Newton acceleration.

    ``T(w, idx)`` evaluates the map on the points selected by ``idx``.
    Returns ``(w, converged, iterations, last_step)``.
    """
    w = np.array(w0, dtype=complex)
    n = w.size
    lam = np.ones(n)
    prev = np.full(n, np.inf)
    iters = np.zeros(n, dtype=int)
    steps = np.full(n, np.inf)
    conv = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    stale = np.zeros(n, dtype=int)
    active = np.arange(n)
    with np.errstate(all="ignore"):
        for _ in range(opts.max_iter):
            if active.size == 0:
                break
            wa = w[active]
            tw = T(wa, active)
            d = tw - wa
            step = np.abs(d)
            iters[active] += 1
            steps[active] = step
            bad = ~np.isfinite(tw)
            done = (step < opts.tol * (1 + np.abs(wa))) & ~bad
            # roundoff floor: the step stopped improving at a small value
            imp = step < best[active]
            best[active] = np.where(imp, step, best[active])
            stale[active] = np.where(imp, 0, stale[active] + 1)
            done |= (stale[active] > _STALL_ITERS) & (step < _STALL_TOL * (1 + np.abs(wa))) & ~bad
            w[active[done]] = project(tw[done], active[done])
            conv[active[done]] = True

            slow = (step > opts.slow_ratio * prev[active]) & ~done & ~bad
            lam[active[slow]] = opts.damping
            new = project(wa + lam[active] * d, active)
            near = slow & (step < 1e-2 * (1 + np.abs(wa)))
            if opts.newton and np.any(near):
                # Newton only close to the fixed point, and only if the step
                # stays inside the domain and lowers the residual
                i = np.flatnonzero(near)
                idx = active[i]
                tf = (lambda v, idx=idx: T(v, idx) - v)
                dv = _cdiff(tf, wa[i])
                cand = wa[i] - d[i] / dv
                inside = project(cand, idx) == cand
                rc = np.abs(T(cand, idx) - cand)
                take = inside & np.isfinite(rc) & (rc < step[i])
                new[i[take]] = cand[take]
            prev[active] = step
            keep = ~done & ~bad
            w[active[keep]] = new[keep]
            active = active[keep]
    return w, conv, iters, steps


def _newton(T, w0, idx, project, maxit=60):
    """Newton's method for ``T(w) = w`` from a good start (boundary polish)."""
    w = np.array(w0, dtype=complex)
    with np.errstate(all="ignore"):
        res = np.abs(T(w, idx) - w)
        for _ in range(maxit):
            f = (lambda v: T(v, idx) - v)
            fw = f(w)
            dv = _cdiff(f, w)
            cand = project(w - fw / dv, idx)
            rc = np.abs(f(cand))
            take = np.isfinite(rc) & (rc < res)
            if not np.any(take):
                break
            small = np.abs(cand - w) < 1e-15 * (1 + np.abs(w))
            w = np.where(take, cand, w)
            res = np.where(take, rc, res)
            if np.all(small | ~take):
                break
    return w, res


class SubordinationSolution:
    """Evaluators for the subordination functions of ``mu`` and ``nu``.

    The fixed-point iteration always runs on a canonical ordering of the two
    measures (by :attr:`Measure.key`), so exchanging ``mu`` and ``nu``
    exchanges ``omega1`` and ``omega2`` bit for bit.
    """

    def __init__(self, kind, mu: Measure, nu: Measure, opts: SolverOptions | None = None):
        self.kind = ConvolutionKind.parse(kind)
        self.mu, self.nu = mu, nu
        self.opts = opts or SolverOptions()
        for m in (mu, nu):
            if m.carrier not in self.kind.carriers:
                raise ValueError(f"{m!r} has carrier {m.carrier}, not usable for {self.kind.value}")
        self._swap = nu.key < mu.key
        # equal measures: omega1 = omega2, report the iterated one twice
        self._same = nu.key == mu.key
        self._a, self._b = (nu, mu) if self._swap else (mu, nu)
        self._shortcut = None
        if self.opts.point_mass_shortcut:
            if self._a.point_location is not None:
                self._shortcut = ("a", self._a.point_location)
            elif self._b.point_location is not None:
                self._shortcut = ("b", self._b.point_location)
        if self.kind != ConvolutionKind.ADDITIVE:
            for m in (mu, nu):
                if abs(m.mean) < 1e-14:
                    raise ZeroFirstMomentError(
                        f"{m!r} has zero first moment; eta is not invertible near 0")
        self.last_stats = {}

    # -- public evaluators -------------------------------------------------
    def solve(self, z):
        """Return ``(omega1, omega2, T)`` at ``z`` where ``T`` is ``F`` of the
        convolution (additive) or ``eta`` of the convolution (multiplicative)."""
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        wa, wb, conv = self._solve_public_domain(z)
        if self._same:
            wb = wa
        w1, w2 = (wb, wa) if self._swap else (wa, wb)
        if scalar:
            return complex(w1[0]), complex(w2[0]), complex(conv[0])
        return w1, w2, conv

    def omega1(self, z):
        return self.solve(z)[0]

    def omega2(self, z):
        return self.solve(z)[1]

    def residual(self, z, omega1=None, omega2=None):
        """Scaled residual ``|T_mu(w1) - T_nu(w2)| / max(1, |T_mu(w1)|)``."""
        if omega1 is None:
            omega1, omega2, _ = self.solve(z)
        w1 = np.asarray(omega1, dtype=complex)
        w2 = np.asarray(omega2, dtype=complex)
        with np.errstate(all="ignore"):
            if self.kind == ConvolutionKind.ADDITIVE:
                a, b = _F(self.mu, w1), _F(self.nu, w2)
            else:
                a, b = _eta(self.mu, w1), _eta(self.nu, w2)
            r = np.abs(a - b) / np.maximum(1.0, np.abs(a))
        return float(r) if np.ndim(r) == 0 else r

    def fixed_point_map(self, w, z):
        """The self-map whose attracting fixed point is ``omega1(z)``."""
        w = np.asarray(w, dtype=complex)
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            if self.kind == ConvolutionKind.ADDITIVE:
                return z + _h(self.nu, z + _h(self.mu, w))
            r = w / z
            e = _eta(self.mu, z * r)
            return z * (r / e) * _eta(self.nu, e / r)

    # -- canonical internals -----------------------------------------------
    def _maps(self, z, mirrored=False):
        """Fixed-point map, domain projection and output assembly for points z."""
        a, b = (self._b, self._a) if mirrored else (self._a, self._b)
        if self.kind == ConvolutionKind.ADDITIVE:
            def T(w, idx):
                zz = z[idx]
                return zz + _h(b, zz + _h(a, w))

            def project(w, idx):
                zi = z[idx].imag
                return np.where(w.imag < zi, w.real + 1j * zi, w) if np.all(zi > 0) else w

            def outputs(w):
                return w, z + _h(a, w), _F(a, w)
        else:
            circle = self.kind == ConvolutionKind.CIRCLE

            def T(r, idx):
                zz = z[idx]
                e = _eta(a, zz * r)
                return (r / e) * _eta(b, e / r)

            def project(r, idx):
                if circle:
                    m = np.abs(r)
                    return np.where(m > 1, r / np.maximum(m, 1e-300), r)
                zi = z[idx].imag
                return np.where((r.imag < 0) & (zi >= 0), r.real + 0j, r)

            def outputs(r):
                e = _eta(a, z * r)
                return z * r, e / r, e
        return T, project, outputs

    def _start(self, z, mirrored=False):
        b = self._a if mirrored else self._b
        if self.kind == ConvolutionKind.ADDITIVE:
            # z itself sits on the edge of the domain Im w >= Im z, where
            # contraction is weakest; lift the start by the joint scale
            lift = np.sqrt(self._a.variance + self._b.variance) or 1.0
            return z + 1j * lift
        return np.full(z.shape, b.mean, dtype=complex)

    def _height(self, z):
        """Distance of interior points to the boundary of the domain, and a scale."""
        if self.kind == ConvolutionKind.ADDITIVE:
            lift = np.sqrt(self._a.variance + self._b.variance) or 1.0
            return np.abs(z.imag), np.full(z.shape, lift)
        if self.kind == ConvolutionKind.POSITIVE:
            hgt = np.where(z.real > 0, np.abs(z.imag), np.inf)
            return hgt, np.abs(z)
        return 1.0 - np.abs(z), np.ones(z.shape)

    def _lift(self, z, hgt):
        if self.kind == ConvolutionKind.CIRCLE:
            return (1.0 - hgt) * z / np.abs(z)
        return z.real + 1j * hgt * np.where(z.imag < 0, -1, 1)

    def _shortcut_eval(self, z):
        which, c = self._shortcut
        other = self._b if which == "a" else self._a
        with np.errstate(all="ignore"):
            if self.kind == ConvolutionKind.ADDITIVE:
                wp = z - c
                wo = _F(other, wp) + c
            else:
                wp = c * z
                wo = _eta(other, wp) / c
                conv = _eta(other, wp)
        if which == "a":
            wa, wb = wo, wp
        else:
            wa, wb = wp, wo
        if self.kind == ConvolutionKind.ADDITIVE:
            conv = _F(self._a, wa) if which == "b" else _F(self._b, wb)
        return wa, wb, conv

    def _solve_canonical(self, z, start=None, mirrored=False):
        """Iterate at z (interior points only); returns (wa, wb, conv, state, ok)."""
        if self._shortcut is not None:
            wa, wb, conv = self._shortcut_eval(z)
            ok = np.isfinite(wa) | np.isfinite(wb)
            return wa, wb, conv, (wb if mirrored else wa), ok
        T, project, outputs = self._maps(z, mirrored)
        if start is None:
            w0 = self._start(z, mirrored)
            hgt, scale = self._height(z)
            low = hgt < 1e-2 * scale
            if np.any(low):
                # continuation in the distance to the boundary: solve ten
                # times farther out and warm-start from there
                zl = z[low]
                up = self._lift(zl, np.minimum(10 * hgt[low], 1e-2 * scale[low]))
                w0[low] = self._solve_canonical(up, mirrored=mirrored)[3]
        else:
            w0 = np.array(start, dtype=complex)
        zero = z == 0
        w, conv_ok, iters, steps = _fixed_point(T, w0, self.opts, project)
        self.last_stats = {"iterations": int(iters.max(initial=0)),
                           "final_step": float(np.max(steps[np.isfinite(steps)], initial=0.0)),
                           "mean_iterations": float(iters.mean()) if iters.size else 0.0}
        with np.errstate(all="ignore"):
            w1, w2, conv = outputs(w)
        if self.kind != ConvolutionKind.ADDITIVE and np.any(zero):
            m0 = (self._a if mirrored else self._b).mean
            w1[zero], w2[zero], conv[zero] = 0, 0, 0
            w[zero] = m0
            conv_ok[zero] = True
        if mirrored:
            return w2, w1, conv, w, conv_ok
        return w1, w2, conv, w, conv_ok

    def _solve_public_domain(self, z):
        """Map z to the solver's half-domain by symmetry and solve."""
        if self.kind == ConvolutionKind.ADDITIVE:
            if np.any(z.imag == 0):
                raise ValueError("additive solve needs Im z != 0; use boundary() on the real line")
            flip = z.imag < 0
            zs = np.where(flip, np.conj(z), z)
        elif self.kind == ConvolutionKind.POSITIVE:
            if np.any((z.imag == 0) & (z.real > 0)):
                raise ValueError("positive-kind solve needs z off [0, inf); use boundary()")
            flip = z.imag < 0
            zs = np.where(flip, np.conj(z), z)
        else:
            mod = np.abs(z)
            if np.any(np.abs(mod - 1) < 1e-15):
                raise ValueError("circle solve needs |z| != 1; use boundary() on the circle")
            flip = mod > 1
            zs = np.where(flip, 1 / np.conj(np.where(flip, z, 1)), z)
        wa, wb, conv, _, ok = self._solve_canonical(zs)
        if not np.all(ok):
            i = int(np.flatnonzero(~ok)[0])
            raise ConvergenceError(f"{self.kind.value}: no convergence at z={z[i]!r}",
                                   residual=None, index=i)
        if self._shortcut is None:
            with np.errstate(all="ignore"):
                if self.kind == ConvolutionKind.ADDITIVE:
                    res = np.abs(_F(self._a, wa) - _F(self._b, wb)) / np.maximum(1, np.abs(conv))
                else:
                    res = np.abs(_eta(self._a, wa) - _eta(self._b, wb)) / np.maximum(1, np.abs(conv))
            bad = ~(res < self.opts.residual_tol)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise ConvergenceError(
                    f"{self.kind.value}: residual {res[i]:.3e} at z={z[i]!r}",
                    residual=float(res[i]), index=i)
        if self.kind == ConvolutionKind.CIRCLE:
            with np.errstate(all="ignore"):
                wa = np.where(flip, 1 / np.conj(wa), wa)
                wb = np.where(flip, 1 / np.conj(wb), wb)
                conv = np.where(flip, 1 / np.conj(conv), conv)
        else:
            wa = np.where(flip, np.conj(wa), wa)
            wb = np.where(flip, np.conj(wb), wb)
            conv = np.where(flip, np.conj(conv), conv)
        return wa, wb, conv

    # -- boundary values ---------------------------------------------------
    def _ladder_points(self, x, eps):
        if self.kind == ConvolutionKind.CIRCLE:
            return (1.0 - eps) * x
        return x + 1j * eps

    def _is_interior(self, x):
        if self.kind == ConvolutionKind.POSITIVE:
            return (x.real < 0) | (x == 0)
        return np.zeros(x.shape, dtype=bool)

    def _clean(self, w, status, tol=1e-8):
        """Project boundary values onto the line/circle; flag clearly complex ones."""
        with np.errstate(all="ignore"):
            if self.kind == ConvolutionKind.CIRCLE:
                m = np.abs(w)
                off = np.abs(m - 1) > tol
                w = np.where(off, w, w / np.where(m > 0, m, 1))
            else:
                off = np.abs(w.imag) > tol * (1 + np.abs(w.real))
                w = np.where(off, w, w.real + 0j)
        fin = np.isfinite(w)
        status = np.where(off & fin & (status == OK), ON_SUPPORT, status)
        return w, status

    def boundary(self, x, start=None):
        """Vectorised boundary values at real (or unimodular) points ``x``.

        Points of the open domain (negative reals for the positive kind) are
        solved directly.  With ``start`` (the ``state`` of a nearby
        :class:`BoundaryValue`) only the Newton polish is run, falling back to
        the full ladder where it fails.
        """
        x = np.atleast_1d(np.asarray(x, dtype=complex))
        if self.kind != ConvolutionKind.CIRCLE:
            x = x.real + 0j
        n = x.size
        wa = np.full(n, np.nan + 0j)
        wb = np.full(n, np.nan + 0j)
        state = np.full(n, np.nan + 0j)
        status = np.full(n, NO_CONVERGENCE)

        if self._shortcut is not None:
            wa, wb, _ = self._shortcut_eval(x)
            status = np.where(np.isfinite(wa) | np.isfinite(wb), OK, NO_CONVERGENCE)
            status = np.where(~np.isfinite(wa) & np.isfinite(wb), POLE1, status)
            status = np.where(~np.isfinite(wb) & np.isfinite(wa), POLE2, status)
            state = wa
        else:
            inner = self._is_interior(x)
            if np.any(inner):
                i = np.flatnonzero(inner)
                a1, b1, _, st, ok = self._solve_canonical(x[i])
                wa[i], wb[i], state[i] = a1, b1, st
                status[i] = np.where(ok, OK, NO_CONVERGENCE)
            todo = np.flatnonzero(~inner)
            if start is not None and todo.size:
                s0 = np.broadcast_to(np.asarray(start, dtype=complex), x.shape)[todo]
                good = np.isfinite(s0)
                if np.any(good):
                    j = todo[good]
                    a1, b1, st, res, stt = self._polish(x[j], s0[good], mirrored=False)
                    fine = (stt == OK) & (res < self.opts.residual_tol)
                    wa[j[fine]], wb[j[fine]], state[j[fine]] = a1[fine], b1[fine], st[fine]
                    status[j[fine]] = OK
                    todo = np.setdiff1d(todo, j[fine])
            if todo.size:
                a1, b1, st, stt = self._ladder(x[todo])
                wa[todo], wb[todo], state[todo], status[todo] = a1, b1, st, stt

        # the pole companion is finite; everything else is cleaned
        wa_c, st_a = self._clean(wa, status)
        wb_c, st_b = self._clean(wb, status)
        status = np.where(status == OK, np.minimum(st_a, st_b), status)
        wa, wb = wa_c, wb_c
        if self._same:
            wb = np.where(status == OK, wa, wb)
        w1, w2 = (wb, wa) if self._swap else (wa, wb)
        if self._swap:
            status = np.where(status == POLE1, 9, status)
            status = np.where(status == POLE2, POLE1, status)
            status = np.where(status == 9, POLE2, status)
        res = np.full(n, np.nan)
        okm = status == OK
        if np.any(okm):
            res[okm] = np.atleast_1d(self.residual(None, w1[okm], w2[okm]))
        return BoundaryValue(x, w1, w2, status, res, state)

    def _polish(self, x, start, mirrored):
        """Newton polish at boundary points from a start in the iteration variable."""
        T, project, outputs = self._maps(x, mirrored)

        def proj(w, idx):
            if self.kind == ConvolutionKind.CIRCLE:
                m = np.abs(w)
                return np.where(m > 1 + 1e-12, w / np.maximum(m, 1e-300), w)
            return w
        idx = np.arange(x.size)
        w, res = _newton(T, start, idx, proj)
        with np.errstate(all="ignore"):
            w1, w2, _ = outputs(w)
        status = np.where(np.isfinite(w1) & np.isfinite(w2), OK, NO_CONVERGENCE)
        if mirrored:
            w1, w2 = w2, w1
        # scale the map residual to the convolution transform
        if self.kind != ConvolutionKind.ADDITIVE:
            with np.errstate(all="ignore"):
                res = res * np.abs(_eta(self._a, w1)) / np.maximum(np.abs(w), 1e-300)
        with np.errstate(all="ignore"):
            conv = _F(self._a, w1) if self.kind == ConvolutionKind.ADDITIVE else _eta(self._a, w1)
            res = res / np.maximum(1.0, np.abs(conv))
        res = np.where(np.isfinite(res), res, np.inf)
        return w1, w2, w, res, status

    def _ladder(self, x):
        opts = self.opts
        eps = np.asarray(opts.eps_ladder, dtype=float)
        L, n = eps.size, x.size
        A = np.empty((L, n), dtype=complex)
        B = np.empty((L, n), dtype=complex)
        ok = np.ones(n, dtype=bool)
        depth = np.zeros(n, dtype=int)      # number of leading levels that converged
        state = None
        for k, e in enumerate(eps):
            z = self._ladder_points(x, e)
            a1, b1, _, state, okk = self._solve_canonical(z, start=state)
            A[k], B[k] = a1, b1
            ok &= okk
            depth += ok
        status = np.where(ok, OK, NO_CONVERGENCE)
        wa = np.full(n, np.nan + 0j)
        wb = np.full(n, np.nan + 0j)
        st_out = np.full(n, np.nan + 0j)

        # poles (additive): |w| * eps constant along the ladder; a point whose
        # deepest levels fail (w ~ 1/eps overflows the stopping rule) is
        # judged on the last three levels that converged
        if self.kind == ConvolutionKind.ADDITIVE and L >= 3:
            cand = depth >= 3
            lv = np.clip(depth, 3, L)[None, :] - np.arange(3, 0, -1)[:, None]
            for M, code in ((A, POLE1), (B, POLE2)):
                W = np.take_along_axis(M, lv, axis=0)
                with np.errstate(all="ignore"):
                    p = np.abs(W) * eps[lv]
                    flat = np.ptp(p, axis=0) < 0.05 * np.max(p, axis=0)
                    big = np.abs(W[-1]) > 1e4 * (1 + np.abs(x))
                hit = flat & big & cand & ((status == OK) | (status == NO_CONVERGENCE))
                status[hit] = code
            ok = status != NO_CONVERGENCE
            p1, p2 = status == POLE1, status == POLE2
            if np.any(p1):
                wa[p1] = np.inf
                wb[p1] = x[p1] - self._a.mean
                st_out[p1] = np.inf
            if np.any(p2):
                wb[p2] = np.inf
                wa[p2] = x[p2] - self._b.mean
                st_out[p2] = wa[p2]

        # Richardson extrapolation of both functions (linear in eps)
        r = eps[:-1] / eps[1:]
        with np.errstate(invalid="ignore", over="ignore"):
            RA = (r[:, None] * A[1:] - A[:-1]) / (r[:, None] - 1)
            RB = (r[:, None] * B[1:] - B[:-1]) / (r[:, None] - 1)
        todo = np.flatnonzero(status == OK)
        if todo.size == 0:
            return wa, wb, st_out, status
        dA = np.abs(np.diff(RA[:, todo], axis=0)) / (1 + np.abs(RA[1:, todo]))
        dB = np.abs(np.diff(RB[:, todo], axis=0)) / (1 + np.abs(RB[1:, todo]))
        good = (dA < opts.ladder_tol) & (dB < opts.ladder_tol)
        has = good.any(axis=0)
        first = np.argmax(good, axis=0) + 1
        # keep the best available extrapolant even without acceptance; the
        # Newton polish decides whether it is a boundary fixed point
        last = np.where(has, first, RA.shape[0] - 1)
        ra = RA[last, todo]
        rb = RB[last, todo]

        # Newton at the boundary point, in the smaller of the two variables
        use_b = np.abs(ra) > np.abs(rb)
        if self.kind == ConvolutionKind.ADDITIVE:
            start_a, start_b = ra, rb
        else:
            start_a = ra / x[todo]
            start_b = rb / x[todo]
            use_b[:] = False
        pw1 = np.empty(todo.size, dtype=complex)
        pw2 = np.empty(todo.size, dtype=complex)
        pst = np.empty(todo.size, dtype=complex)
        pres = np.empty(todo.size)
        pstat = np.empty(todo.size, dtype=int)
        for mir, sel in ((False, ~use_b), (True, use_b)):
            if np.any(sel):
                s = start_b[sel] if mir else start_a[sel]
                w1, w2, st, res, stt = self._polish(x[todo[sel]], s, mirrored=mir)
                pw1[sel], pw2[sel], pst[sel], pres[sel], pstat[sel] = w1, w2, st, res, stt
                if mir:
                    # the state is always expressed in the canonical variable
                    pst[sel] = w1
        converged = (pstat == OK) & (pres < opts.residual_tol)
        status[todo] = np.where(converged, OK, np.where(has, NO_CONVERGENCE, NO_LADDER))
        wa[todo], wb[todo], st_out[todo] = pw1, pw2, pst
        return wa, wb, st_out, status

    # -- derivatives -------------------------------------------------------
    def derivative(self, x, which="omega1", dist=None, check=True):
        """Derivative of ``omega1`` or ``omega2`` at a boundary point off the support.

        Central differences at h, h/2, h/4 with two Richardson steps, optionally
        cross-checked against a contour average around ``x``.  For the circle
        the complex derivative ``d omega / dz`` is returned.
        """
        circle = self.kind == ConvolutionKind.CIRCLE
        x = complex(x)
        if which not in ("omega1", "omega2"):
            raise ValueError("which must be 'omega1' or 'omega2'")
        j = 0 if which == "omega1" else 1
        scale = 1.0 if circle else 1.0 + abs(x)
        h = 1e-3 * scale
        if dist is not None:
            h = min(h, dist / 4)
        # near a simple pole 2|omega'|/|omega''| is the distance to it; a small
        # probe bounds the first step (a wide stencil may straddle the pole),
        # then shrink until the stencil sits well inside that radius
        _, r = self._stencil(x, min(h, 1e-5 * scale), j)
        h = min(h, max(r / 32, 1e-6 * scale))
        for _ in range(4):
            d, r = self._stencil(x, h, j)
            if not h > r / 32 or h <= 1e-6 * scale:
                break
            h = max(r / 32, 1e-6 * scale)
        if circle:
            d = d / (1j * x)
        else:
            d = d.real
        if check:
            rad = h if dist is None else min(dist / 2, 2e-2 * scale)
            rad = min(rad, r / 4)
            c = self._contour_derivative(x, rad, j)
            if c is not None and abs(c - d) > 1e-5 * (1 + abs(d)):
                raise BoundaryError("inconsistent-extrapolation",
                                    f"difference quotient {d!r} vs contour {c!r} at {x!r}")
        return d

    def _stencil(self, x, h, j):
        """Derivative in the boundary parameter (real x or angle) and a pole radius."""
        offs = np.array([-h, h, -h / 2, h / 2, -h / 4, h / 4])
        if self.kind == ConvolutionKind.CIRCLE:
            pts = np.exp(1j * (np.angle(x) + offs))
        else:
            pts = x.real + offs
        bv = self.boundary(pts)
        if not np.all(bv.status == OK):
            raise BoundaryError("stencil-leaves-gap",
                                f"boundary evaluation failed near {x!r} ({bv.status_name(int(np.argmin(bv.status)))})")
        v = (bv.omega1, bv.omega2)[j]
        d1 = (v[1] - v[0]) / (2 * h)
        d2 = (v[3] - v[2]) / h
        d4 = (v[5] - v[4]) / (h / 2)
        d = (16 * (4 * d4 - d2) / 3 - (4 * d2 - d1) / 3) / 15
        second = abs(v[0] + v[1] - v[2] - v[3]) / (0.75 * h * h)
        r = 2 * abs(d) / second if second > 0 else np.inf
        return d, r

    def _contour_derivative(self, x, r, j, n=32):
        theta = 2 * np.pi * (np.arange(n) + 0.5) / n
        nodes = x + r * np.exp(1j * theta)
        try:
            vals = self.solve(nodes)[j]
        except (ConvergenceError, ValueError):
            return None
        if not np.all(np.isfinite(vals)):
            return None
        return complex(np.mean(vals * np.exp(-1j * theta)) / r) if self.kind == ConvolutionKind.CIRCLE \
            else float(np.real(np.mean(vals * np.exp(-1j * theta)) / r))


# ---------------------------------------------------------------------------
# functional API


def solve_additive(mu, nu, z, opts=None):
    """``(omega1, omega2, F_{mu+nu})`` at ``z`` in the upper half-plane."""
    return SubordinationSolution(ConvolutionKind.ADDITIVE, mu, nu, opts).solve(z)


def solve_multiplicative_positive(mu, nu, z, opts=None):
    """``(omega1, omega2, eta_{mu*nu})`` at ``z`` off ``[0, inf)``."""
    return SubordinationSolution(ConvolutionKind.POSITIVE, mu, nu, opts).solve(z)


def solve_multiplicative_circle(mu, nu, z, opts=None):
    """``(omega1, omega2, eta_{mu*nu})`` at ``z`` in the open unit disc."""
    return SubordinationSolution(ConvolutionKind.CIRCLE, mu, nu, opts).solve(z)


def continue_to_boundary(kind, mu, nu, x, opts=None, support=None):
    """Boundary values ``(omega1(x), omega2(x), pole)`` at one point.

    ``pole`` is ``None``, ``"omega1"`` or ``"omega2"``; at a pole the other
    function carries the finite companion value.  If a
    :class:`~freeoutliers.convolution.SupportSet` is given, points closer
    than the configured margin are rejected.
    """
    sol = mu if isinstance(mu, SubordinationSolution) else SubordinationSolution(kind, mu, nu, opts)
    if support is not None:
        d = support.distance(x)
        if d < support.margin:
            raise BoundaryError("too-close-to-support",
                                f"{x!r} is {d:.3e} from the support (margin {support.margin:.3e})")
    bv = sol.boundary(x)
    st = int(bv.status[0])
    if st < 0:
        code = {ON_SUPPORT: "too-close-to-support", NO_LADDER: "ladder-non-convergence",
                NO_CONVERGENCE: "ladder-non-convergence"}[st]
        raise BoundaryError(code, f"boundary value at {x!r}: {_STATUS_NAMES[st]}")
    pole = {OK: None, POLE1: "omega1", POLE2: "omega2"}[st]
    w1, w2 = complex(bv.omega1[0]), complex(bv.omega2[0])
    if sol.kind != ConvolutionKind.CIRCLE:
        w1, w2 = w1.real, w2.real
    return w1, w2, pole


def derivative_at(solution, x, which="omega1", support=None):
    """Derivative of a subordination function at a boundary point off the support."""
    dist = None if support is None else support.distance(x)
    return solution.derivative(x, which, dist=dist)


def distance_to_measure(m, x):
    return float(dist_to_support(m, np.asarray(x, dtype=complex)))


def cauchy_of_convolution(sol, z):
    """G of the convolution off the real line (off the circle for ``circle``).

    Additive: ``G_mu(omega1(z))``.  Multiplicative: ``1 / (z (1 - eta(1/z)))``
    with ``eta`` of the product from the solver; for the positive kind points
    below the axis are handled by reflection, for the circle ``|z| > 1``.
    """
    z = np.asarray(z, dtype=complex)
    if sol.kind == ConvolutionKind.ADDITIVE:
        w1, _, _ = sol.solve(z)
        return _cauchy(sol.mu, w1)
    if sol.kind == ConvolutionKind.POSITIVE:
        if np.any(z.imag == 0):
            raise ValueError("z must be off the real line")
        low = z.imag < 0
        zu = np.where(low, np.conj(z), z)
        # eta(1/zu) with 1/zu in the lower half plane, by reflection
        _, _, eta = sol.solve(1.0 / np.conj(zu))
        g = 1.0 / (zu * (1.0 - np.conj(eta)))
        return np.where(low, np.conj(g), g)
    if np.any(np.abs(z) <= 1):
        raise ValueError("circle kind needs |z| > 1")
    _, _, eta = sol.solve(1.0 / z)
    return 1.0 / (z * (1.0 - eta))
