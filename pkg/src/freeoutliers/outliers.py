"""Outlier eigenvalues and eigenvector overlaps of spiked unitarily invariant models.

An outlier of ``A + U*BU`` (or of the multiplicative models) sits at every
point ``rho`` off the limiting support ``K`` where

* additive:        ``omega1(rho) = theta_i``  or  ``omega2(rho) = tau_j``
* multiplicative:  ``omega1(1/rho) = 1/theta_i``  or  ``omega2(1/rho) = 1/tau_j``

with multiplicity equal to the number of spikes solving the equation there.
Roots are bracketed by sign changes of a phase function on a grid over each
gap of ``K`` and refined with Brent's method on boundary values of the
subordination functions.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from .convolution import SupportSet, support as conv_support
from .errors import BoundaryError, ModelError
from .measures import Measure, dist_to_support, make_measure
from .subordination import OK, POLE1, POLE2, ConvolutionKind, SolverOptions, SubordinationSolution

__all__ = ["SpikedModel", "OutlierRecord", "OutlierReport", "PredictOptions", "predict",
           "overlap_weights"]


@dataclass(frozen=True)
class SpikedModel:
    """A bulk measure plus finitely many spikes (value, multiplicity).

    Spikes are sorted decreasingly: by value on the line, by argument in
    ``[0, 2 pi)`` on the circle.
    """

    bulk: Measure
    spikes: tuple = ()

    def __post_init__(self):
        items = self.spikes
        if isinstance(items, dict):
            items = list(items.items())
        agg = {}
        for it in items:
            v, m = (it if isinstance(it, (tuple, list)) and len(it) == 2 else (it, 1))
            if self.bulk.carrier == "circle":
                v = complex(v)
                if abs(abs(v) - 1) > 1e-12:
                    raise ModelError("off-carrier-spike", f"circle spike {v!r} is not unimodular")
            else:
                v = float(np.real(v))
            m = int(m)
            if m < 1:
                raise ModelError("bad-multiplicity", "spike multiplicities must be >= 1")
            if dist_to_support(self.bulk, np.asarray(v, dtype=complex)) < 1e-12:
                raise ModelError("spike-in-support", f"spike {v!r} lies in the support of the bulk")
            agg[v] = agg.get(v, 0) + m
        if self.bulk.carrier == "circle":
            key = (lambda p: np.angle(p[0]) % (2 * np.pi))
        else:
            key = (lambda p: p[0])
        object.__setattr__(self, "spikes", tuple(sorted(agg.items(), key=key, reverse=True)))

    @property
    def p(self):
        return sum(m for _, m in self.spikes)

    def check_kind(self, kind):
        """Spikes of a positive model must be nonnegative (the bulk alone cannot tell)."""
        if ConvolutionKind.parse(kind) == ConvolutionKind.POSITIVE:
            for v, _ in self.spikes:
                if v < 0:
                    raise ModelError("off-carrier-spike", f"spike {v!r} is negative")

    def values(self):
        return [v for v, m in self.spikes for _ in range(m)]

    @classmethod
    def from_dict(cls, d):
        bulk = make_measure(d["bulk"])
        spikes = []
        for s in d.get("spikes", []) or []:
            if isinstance(s, dict):
                if "angle" in s:
                    v = complex(np.exp(1j * float(s["angle"])))
                else:
                    v = float(s["value"])
                spikes.append((v, int(s.get("multiplicity", 1))))
            else:
                spikes.append((float(s), 1))
        return cls(bulk, tuple(spikes))


@dataclass
class OutlierRecord:
    rho: complex | float
    k: int
    ell: int
    sources: list
    weight_A: float
    weight_B: float
    degenerate: bool = False
    epsilon: float = math.nan
    distance_to_support: float = math.nan
    omega1: complex | float = math.nan
    omega2: complex | float = math.nan
    omega1_prime: complex | float = math.nan
    omega2_prime: complex | float = math.nan
    residual: float = math.nan
    flags: list = field(default_factory=list)

    @property
    def angle(self):
        return float(np.angle(self.rho))

    def to_dict(self):
        d = asdict(self)
        for key in ("rho", "omega1", "omega2", "omega1_prime", "omega2_prime"):
            d[key] = _num(d[key])
        return d


def _num(v):
    v = complex(v)
    if v.imag == 0:
        r = v.real
        return r if math.isfinite(r) else repr(r)
    return [v.real, v.imag]


@dataclass
class OutlierReport:
    kind: ConvolutionKind
    K: SupportSet
    outliers: list
    rejected: list = field(default_factory=list)
    point_mass_bulk: bool = False

    @property
    def rhos(self):
        return [o.rho for o in self.outliers]

    @property
    def K_prime(self):
        """K' = K together with the predicted outliers."""
        pts = [float(np.angle(r)) if self.kind == ConvolutionKind.CIRCLE else float(np.real(r))
               for r in self.rhos]
        return {"components": [list(c) for c in self.K.components],
                "atoms": sorted(list(self.K.atoms) + pts)}

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "K": self.K.to_dict(),
            "K_prime": self.K_prime,
            "outliers": [o.to_dict() for o in self.outliers],
            "rejected": [o.to_dict() for o in self.rejected],
            "point_mass_bulk": self.point_mass_bulk,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path):
        """Flat table; on the circle ``rho`` is written as its angle."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "k", "ell", "weightA", "weightB", "sources"])
            for o in self.outliers:
                rho = o.angle if self.kind == ConvolutionKind.CIRCLE else float(np.real(o.rho))
                w.writerow([repr(rho), o.k, o.ell, repr(float(o.weight_A)),
                            repr(float(o.weight_B)), ";".join(o.sources)])

    @staticmethod
    def read_csv(path):
        rows = []
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rows.append({"rho": float(r["rho"]), "k": int(r["k"]), "ell": int(r["ell"]),
                             "weightA": float(r["weightA"]), "weightB": float(r["weightB"]),
                             "sources": r["sources"].split(";") if r["sources"] else []})
        return rows


@dataclass(frozen=True)
class PredictOptions:
    scan_points: int = 512
    refine_angle: float = math.pi / 8
    max_refine: int = 12
    root_xtol: float = 1e-12
    verify_tol: float = 1e-9
    degenerate_tol: float = 1e-8
    bound_factor: float = 4.0
    support_y: float = 1e-6
    support_threshold: float = 1e-4
    support_points: int = 2001

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown predict option(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# coordinates: outlier location x  <->  argument of the subordination functions


def _to_domain(kind, x):
    if kind == ConvolutionKind.ADDITIVE:
        return np.asarray(x, dtype=float) + 0j
    if kind == ConvolutionKind.POSITIVE:
        return 1.0 / np.asarray(x, dtype=float) + 0j
    return np.exp(-1j * np.asarray(x, dtype=float))      # x is an angle; 1/e^{ix}


def _target(kind, spike):
    if kind == ConvolutionKind.ADDITIVE:
        return complex(spike)
    if kind == ConvolutionKind.POSITIVE:
        return complex(1.0 / spike) if spike != 0 else complex(np.inf)
    return complex(np.conj(spike))


def _cayley(s):
    s = np.asarray(s, dtype=complex)
    with np.errstate(all="ignore"):
        c = (s - 1j) / (s + 1j)
    return np.where(np.isfinite(s), c, 1.0 + 0j)


def _phase(kind, s, target):
    """Signed angle between s and the target, continuous through infinity."""
    if kind == ConvolutionKind.CIRCLE:
        return np.angle(np.asarray(s) * np.conj(target))
    return np.angle(_cayley(s) * np.conj(_cayley(np.asarray([target]))[0]))


def _rho_from_x(kind, x):
    return complex(np.exp(1j * x)) if kind == ConvolutionKind.CIRCLE else float(x)


# ---------------------------------------------------------------------------


def _scan_intervals(kind, K, A, B, opts: PredictOptions):
    """Bounded scan intervals (in outlier coordinates) for each gap of K."""
    m = K.margin
    out = []
    if kind == ConvolutionKind.CIRCLE:
        for a, b in K.gaps():
            if b - a > 2 * m:
                out.append((a + m / 2, b - m / 2))
        return out
    spikes = [abs(v) for v, _ in A.spikes + B.spikes] or [0.0]
    if kind == ConvolutionKind.ADDITIVE:
        # beyond this, omega_j(x) ~ x - mean leaves the range of every spike
        bound = (opts.bound_factor * (A.bulk.radius + B.bulk.radius) + max(spikes)
                 + abs(A.bulk.mean) + abs(B.bulk.mean))
        lo_lim, hi_lim = -bound, bound
    else:
        ra = A.bulk.radius + max([v for v, _ in A.spikes] or [0.0])
        rb = B.bulk.radius + max([v for v, _ in B.spikes] or [0.0])
        lo_lim, hi_lim = 0.0, opts.bound_factor * ra * rb
    for a, b in K.gaps():
        a = max(a, lo_lim)
        b = min(b, hi_lim)
        if b - a > 2 * m:
            out.append((a + m / 2, b - m / 2))
    return out


class _Scanner:
    """Boundary values on an adaptively refined grid over one gap."""

    def __init__(self, sol, kind, a, b, opts):
        self.sol, self.kind, self.opts = sol, kind, opts
        if kind == ConvolutionKind.POSITIVE and a <= 0:
            a = min(b * 1e-6, b / 2)
        self.x = np.linspace(a, b, opts.scan_points)
        bv = sol.boundary(_to_domain(kind, self.x))
        self.s1, self.s2, self.st, self.state = bv.omega1, bv.omega2, bv.status, bv.state

    def _insert(self, xs):
        bv = self.sol.boundary(_to_domain(self.kind, xs))
        x = np.concatenate([self.x, xs])
        order = np.argsort(x, kind="stable")
        self.x = x[order]
        self.s1 = np.concatenate([self.s1, bv.omega1])[order]
        self.s2 = np.concatenate([self.s2, bv.omega2])[order]
        self.st = np.concatenate([self.st, bv.status])[order]
        self.state = np.concatenate([self.state, bv.state])[order]

    def refine(self):
        for _ in range(self.opts.max_refine):
            good = self.st >= 0
            pair = good[:-1] & good[1:]
            jump = np.zeros(self.x.size - 1, dtype=bool)
            for s in (self.s1, self.s2):
                c = _cayley(s) if self.kind != ConvolutionKind.CIRCLE else s
                d = np.abs(np.angle(c[1:] * np.conj(c[:-1])))
                jump |= pair & (d > self.opts.refine_angle)
            # also split cells next to failed points so brackets can be found
            jump |= (good[:-1] ^ good[1:]) & (np.diff(self.x) > 1e-9 * (1 + np.abs(self.x[1:])))
            if not np.any(jump):
                return
            i = np.flatnonzero(jump)
            self._insert(0.5 * (self.x[i] + self.x[i + 1]))

    def evaluate(self, x0, which, near):
        """Boundary value of omega_which at a single point, warm-started."""
        bv = self.sol.boundary(_to_domain(self.kind, np.array([x0])), start=self.state[near])
        if bv.status[0] < 0:
            return None, None
        return (bv.omega1 if which == 1 else bv.omega2)[0], bv


def _find_roots(scanner, which, target, opts):
    kind = scanner.kind
    s = scanner.s1 if which == 1 else scanner.s2
    ok = scanner.st >= 0
    g = np.where(ok, _phase(kind, s, target), np.nan)
    roots = []
    x = scanner.x
    exact = np.flatnonzero(ok & (g == 0))
    roots.extend(float(x[i]) for i in exact)
    a, b = g[:-1], g[1:]
    br = np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(a) * np.sign(b) < 0)
                        & (np.abs(a) < np.pi / 2) & (np.abs(b) < np.pi / 2))
    for i in br:
        def f(t, i=i):
            near = i if abs(t - x[i]) < abs(t - x[i + 1]) else i + 1
            val, _ = scanner.evaluate(t, which, near)
            if val is None:
                raise BoundaryError("ladder-non-convergence", f"boundary failed at {t!r}")
            return float(_phase(kind, np.array([val]), target)[0])
        try:
            r = brentq(f, x[i], x[i + 1], xtol=opts.root_xtol, rtol=8.9e-16, maxiter=200)
            # a steep omega can miss the verification tolerance at root_xtol
            val, _ = scanner.evaluate(r, which, i)
            if val is None or abs(val - target) >= 0.1 * opts.verify_tol * max(1.0, abs(target)):
                r = brentq(f, x[i], x[i + 1], xtol=1e-15 * (1 + abs(r)), rtol=8.9e-16,
                           maxiter=200)
        except (BoundaryError, ValueError, RuntimeError):
            continue
        roots.append(float(r))
    return roots


def _point_mass_report(kind, A, B, K_opts):
    """Positive model with a bulk equal to delta_0: the spikes of X are tau_j * m_mu."""
    if B.bulk.point_location == 0:
        other, spiked, side = A, B, "B"
    else:
        other, spiked, side = B, A, "A"
    gamma = float(other.bulk.mean)
    K = SupportSet(kind, (), (0.0,), margin=0.0, flags=("point-mass-bulk",))
    recs = {}
    for v, m in spiked.spikes:
        rho = v * gamma
        rec = recs.get(rho)
        if rec is None:
            rec = OutlierRecord(rho=rho, k=0, ell=0, sources=[], weight_A=math.nan,
                                weight_B=math.nan, distance_to_support=abs(rho),
                                flags=["point-mass-bulk", "weights-not-covered"])
            recs[rho] = rec
        if side == "B":
            rec.ell += m
            rec.sources.append(f"B:{v!r}x{m}")
        else:
            rec.k += m
            rec.sources.append(f"A:{v!r}x{m}")
    outs = sorted(recs.values(), key=lambda r: r.rho)
    _set_epsilons(kind, K, outs)
    return OutlierReport(kind, K, outs, [], point_mass_bulk=True)


def _set_epsilons(kind, K, outs):
    for o in outs:
        x = o.angle if kind == ConvolutionKind.CIRCLE else float(np.real(o.rho))
        d = K.distance(x) if (K.components or K.atoms) else math.inf
        for p in outs:
            if p is o:
                continue
            if kind == ConvolutionKind.CIRCLE:
                d = min(d, abs(float(np.angle(p.rho / o.rho))))
            else:
                d = min(d, abs(float(np.real(p.rho)) - x))
        o.epsilon = 0.5 * d


def predict(kind, A: SpikedModel, B: SpikedModel, solver_opts: SolverOptions | None = None,
            opts: PredictOptions | None = None, K: SupportSet | None = None):
    """Predicted outliers, their counts and overlap weights.

    Parameters
    ----------
    kind : ConvolutionKind or str
    A, B : SpikedModel
        Deformations on the ``A`` side and on the conjugated ``B`` side.
    solver_opts : SolverOptions, optional
    opts : PredictOptions, optional
    K : SupportSet, optional
        Precomputed support of the convolution of the bulks.

    Returns
    -------
    OutlierReport
    """
    kind = ConvolutionKind.parse(kind)
    opts = opts or PredictOptions()
    solver_opts = solver_opts or SolverOptions()
    A.check_kind(kind)
    B.check_kind(kind)
    if (kind == ConvolutionKind.POSITIVE and solver_opts.point_mass_shortcut
            and 0 in (A.bulk.point_location, B.bulk.point_location)):
        return _point_mass_report(kind, A, B, opts)
    if kind == ConvolutionKind.POSITIVE and 0 in (A.bulk.point_location, B.bulk.point_location):
        raise ModelError("point-mass-input", "delta_0 bulk needs the point-mass shortcut")
    sol = SubordinationSolution(kind, A.bulk, B.bulk, solver_opts)
    if K is None:
        K = conv_support(sol, y=opts.support_y, threshold=opts.support_threshold,
                         points=opts.support_points)
    found = {}     # x -> dict(which -> list of (spike, mult))
    if A.spikes or B.spikes:
        for a, b in _scan_intervals(kind, K, A, B, opts):
            sc = _Scanner(sol, kind, a, b, opts)
            sc.refine()
            for which, model in ((1, A), (2, B)):
                for v, m in model.spikes:
                    tgt = _target(kind, v)
                    for r in _find_roots(sc, which, tgt, opts):
                        found.setdefault(r, []).append((which, v, m))

    # merge coinciding roots
    xs = sorted(found)
    groups = []
    for x in xs:
        tol = 1e-9 * (1 + abs(x))
        if groups and abs(x - groups[-1][0]) <= tol:
            groups[-1][1].extend(found[x])
        else:
            groups.append([x, list(found[x])])

    outs, rejected = [], []
    for x, hits in groups:
        rec = _make_record(sol, kind, K, x, hits, opts)
        if rec is None:
            continue
        if rec.distance_to_support < K.margin:
            rec.flags.append("root-too-close-to-support")
            rejected.append(rec)
        else:
            outs.append(rec)
    _set_epsilons(kind, K, outs)
    return OutlierReport(kind, K, outs, rejected)


def _make_record(sol, kind, K, x, hits, opts):
    rho = _rho_from_x(kind, x)
    dom = _to_domain(kind, np.array([x]))[0]
    bv = sol.boundary(np.array([dom]))
    if bv.status[0] < 0:
        return None
    w1, w2 = complex(bv.omega1[0]), complex(bv.omega2[0])
    k = ell = 0
    sources, flags = [], []
    resid = 0.0
    seen = set()
    for which, v, m in hits:
        if (which, v) in seen:
            continue
        seen.add((which, v))
        s = w1 if which == 1 else w2
        tgt = _target(kind, v)
        err = abs(s - tgt) / max(1.0, abs(tgt))
        if not err < opts.verify_tol:
            flags.append(f"unverified:{'A' if which == 1 else 'B'}:{v!r}")
            continue
        resid = max(resid, err)
        if which == 1:
            k += m
        else:
            ell += m
        sources.append(f"{'A' if which == 1 else 'B'}:{_fmt(v)}x{m}")
    if k + ell == 0:
        return None
    dist = K.distance(x)
    rec = OutlierRecord(rho=rho, k=k, ell=ell, sources=sources, weight_A=0.0, weight_B=0.0,
                        distance_to_support=float(dist), omega1=_clean(kind, w1),
                        omega2=_clean(kind, w2), residual=resid, flags=flags)
    if dist < K.margin:
        return rec
    try:
        overlap_weights(kind, rec, sol, K=K, opts=opts)
    except BoundaryError as exc:
        rec.flags.append(f"derivative-failed:{exc.code}")
        rec.weight_A = rec.weight_B = math.nan
    return rec


def _clean(kind, w):
    return w if kind == ConvolutionKind.CIRCLE else float(w.real)


def _fmt(v):
    if isinstance(v, complex):
        return f"exp({float(np.angle(v))!r}i)"
    return repr(v)


def _domain_distance(kind, K, x):
    d = K.distance(x)
    if kind == ConvolutionKind.POSITIVE:
        return d / (x * (x + d))
    return d


def overlap_weights(kind, rec: OutlierRecord, solution: SubordinationSolution, K=None, opts=None):
    """Overlap weights (weight-A, weight-B) of an outlier record; stored on it too.

    additive:        weight = 1 / omega_j'(rho)
    multiplicative:  weight = rho * omega_j(1/rho) / omega_j'(1/rho)

    A weight is zero when no spike of that side maps to ``rho``.
    """
    kind = ConvolutionKind.parse(kind)
    opts = opts or PredictOptions()
    x = rec.angle if kind == ConvolutionKind.CIRCLE else float(np.real(rec.rho))
    dom = complex(_to_domain(kind, np.array([x]))[0])
    dist = _domain_distance(kind, K, x) if K is not None else None
    weights = []
    for which, count in ((1, rec.k), (2, rec.ell)):
        name = "omega1" if which == 1 else "omega2"
        val = getattr(rec, name)
        d = solution.derivative(dom, name, dist=dist)
        setattr(rec, name + "_prime", d if kind == ConvolutionKind.CIRCLE else float(np.real(d)))
        if count and abs(d) < opts.degenerate_tol:
            rec.degenerate = True
        if count == 0:
            weights.append(0.0)
            continue
        if kind == ConvolutionKind.ADDITIVE:
            wgt = 1.0 / float(np.real(d))
        else:
            z = complex(rec.rho) * complex(val) / complex(d)
            if abs(z.imag) > 1e-6 * max(1.0, abs(z)):
                rec.flags.append(f"complex-weight:{name}")
            wgt = z.real
        if not (0 < wgt <= 1 + 1e-9):
            rec.flags.append(f"weight-out-of-range:{name}")
        weights.append(wgt)
    rec.weight_A, rec.weight_B = weights
    return rec.weight_A, rec.weight_B
