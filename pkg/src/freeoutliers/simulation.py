"""Monte Carlo sampling of the spiked models and measurement of outliers.

The three models are

* additive:        ``X = A + U* B U``
* positive:        ``X = A^{1/2} U* B U A^{1/2}``
* circle:          ``X = A U* B U``

with ``U`` Haar distributed.  Spikes are always placed on coordinate axes
(the first ``p`` coordinates), so the spike projections ``P`` and ``Q`` are
coordinate projections.

Seeding: trial ``t`` of a run with master seed ``s`` draws from
``np.random.default_rng(np.random.SeedSequence(s, spawn_key=(t,)))``, which
is the ``t``-th child of ``SeedSequence(s).spawn``.  Inside a trial the
draws happen in the order A recipe, B recipe, U.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ModelError
from .measures import Measure, quantiles
from .outliers import OutlierReport, SpikedModel
from .subordination import ConvolutionKind

__all__ = ["haar_unitary", "MatrixRecipe", "build_diagonal", "assemble", "eigensystem",
           "measure_trial", "det_FN", "spike_free", "trial_rng", "SimulationConfig",
           "TrialRecord", "SimulationResult", "run_monte_carlo"]

def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_rng(master_seed, trial):
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),)))


def haar_unitary(n, seed=None):
    """Haar distributed ``n x n`` unitary (QR of a complex Ginibre matrix).

    The phases of the diagonal of ``R`` are moved into ``Q`` so that ``R``
    has a positive diagonal, which makes ``Q`` exactly Haar.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    while True:
        z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
        q, r = np.linalg.qr(z)
        d = np.diagonal(r)
        ad = np.abs(d)
        if np.all(ad > 0):
            break
    return q * (d / ad)[None, :]


# ---------------------------------------------------------------------------
# deterministic matrices


@dataclass(frozen=True, eq=False)
class MatrixRecipe:
    """How to build ``A_N`` or ``B_N``.

    source:
        ``"quantile"``  bulk values are quantiles of ``measure`` at (i-1/2)/(N-p)
        ``"diagonal"``  bulk values given explicitly (``values``, length N-p)
        ``"gue"``       bulk block ``c W`` with ``W`` a standard GUE
                        (E|W_ij|^2 = 1) and ``c = scale``, or
                        ``c = scale_per_n / (N - 1)`` when ``scale_per_n`` is set
    spikes:
        ``((value, multiplicity), ...)``, placed on the first coordinates.
    """

    source: str = "quantile"
    measure: Measure | None = None
    values: tuple = ()
    scale: float = 1.0
    scale_per_n: float | None = None
    spikes: tuple = ()
    carrier: str = "real"

    @property
    def p(self):
        return sum(int(m) for _, m in self.spikes)

    def spike_values(self):
        return np.array([v for v, m in self.spikes for _ in range(int(m))],
                        dtype=complex if self.carrier == "circle" else float)

    @classmethod
    def from_model(cls, model: SpikedModel, spec=None):
        """Recipe for a :class:`SpikedModel`; ``spec`` may select another source."""
        spec = dict(spec or {})
        src = str(spec.get("source", "quantile"))
        return cls(source=src, measure=model.bulk,
                   values=tuple(spec.get("values", ())),
                   scale=float(spec.get("scale", 1.0)),
                   scale_per_n=(None if spec.get("scale_per_n") is None
                                else float(spec["scale_per_n"])),
                   spikes=tuple(model.spikes), carrier=model.bulk.carrier)


def build_diagonal(recipe: MatrixRecipe, N, seed=None):
    """Matrix for a recipe: spikes first, then the bulk block.

    Returns a dense ``N x N`` array (diagonal except for the GUE bulk).
    """
    p = recipe.p
    if N < p or N < 1:
        raise ModelError("N-too-small", f"N = {N} is smaller than the {p} spikes")
    n = N - p
    spikes = recipe.spike_values()
    circle = recipe.carrier == "circle"
    if recipe.source == "quantile":
        if recipe.measure is None:
            raise ModelError("bad-recipe", "quantile recipe needs a measure")
        bulk = quantiles(recipe.measure, n) if n else np.zeros(0)
        return np.diag(np.concatenate([spikes, bulk]).astype(complex if circle else float))
    if recipe.source == "diagonal":
        bulk = np.asarray(recipe.values, dtype=complex if circle else float)
        if bulk.shape != (n,):
            raise ModelError("bad-recipe", f"diagonal recipe needs {n} values, got {bulk.size}")
        return np.diag(np.concatenate([spikes, bulk]))
    if recipe.source == "gue":
        if circle:
            raise ModelError("bad-recipe", "a GUE block is not unitary")
        rng = _rng(seed)
        c = recipe.scale if recipe.scale_per_n is None else recipe.scale_per_n / max(N - 1, 1)
        g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
        w = (g + g.conj().T) / math.sqrt(2)
        out = np.zeros((N, N), dtype=complex)
        out[:p, :p] = np.diag(spikes)
        out[p:, p:] = c * w
        return out
    raise ModelError("bad-recipe", f"unknown recipe source {recipe.source!r}")


def _is_diag(M):
    return np.count_nonzero(M - np.diag(np.diagonal(M))) == 0


def _psd_sqrt(M, name):
    if _is_diag(M):
        d = np.diagonal(M)
        if np.any(np.abs(np.imag(d)) > 0) or np.any(np.real(d) < 0):
            raise ModelError("negativity-violation", f"{name} is not nonnegative")
        return np.diag(np.sqrt(np.real(d)))
    lam, V = np.linalg.eigh(M)
    if lam[0] < -1e-12 * max(1.0, abs(lam[-1])):
        raise ModelError("negativity-violation", f"{name} is not nonnegative")
    return (V * np.sqrt(np.clip(lam, 0, None))) @ V.conj().T


def _conj_by(U, B):
    """``U* B U``, cheaper when B is diagonal."""
    if _is_diag(B):
        return (U.conj().T * np.diagonal(B)[None, :]) @ U
    return U.conj().T @ B @ U


def assemble(kind, A, B, U):
    """Model matrix ``X`` for the given kind."""
    kind = ConvolutionKind.parse(kind)
    A, B, U = np.asarray(A), np.asarray(B), np.asarray(U)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n) or U.shape != (n, n):
        raise ModelError("shape-mismatch", f"shapes {A.shape}, {B.shape}, {U.shape}")
    if kind == ConvolutionKind.ADDITIVE:
        X = A + _conj_by(U, B)
        return (X + X.conj().T) / 2
    if kind == ConvolutionKind.POSITIVE:
        ra = _psd_sqrt(A, "A")
        _psd_sqrt(B, "B")
        if _is_diag(ra):
            s = np.diagonal(ra)
            X = s[:, None] * _conj_by(U, B) * s[None, :]
        else:
            X = ra @ _conj_by(U, B) @ ra
        return (X + X.conj().T) / 2
    eye = np.eye(n)
    for name, M in (("A", A), ("B", B)):
        if np.linalg.norm(M.conj().T @ M - eye, 2) > 1e-10:
            raise ModelError("non-unitary-input", f"{name} is not unitary")
    return A @ _conj_by(U, B)


def eigensystem(kind, X):
    """Eigenvalues and orthonormal eigenvectors of a model matrix.

    Hermitian kinds use ``eigh``; the unitary kind uses the complex Schur form,
    whose triangular factor is diagonal up to rounding for a normal matrix.
    Circle eigenvalues are sorted by angle in ``(-pi, pi]``.
    """
    kind = ConvolutionKind.parse(kind)
    if kind != ConvolutionKind.CIRCLE:
        return np.linalg.eigh(X)
    T, Z = sla.schur(X, output="complex")
    lam = np.diagonal(T).copy()
    order = np.argsort(np.angle(lam), kind="stable")
    return lam[order], Z[:, order]


# ---------------------------------------------------------------------------
# one trial


def _eigenbasis(M, value, circle=False):
    """Orthonormal basis of ``ker(M - value)``.

    Coordinate vectors when the eigenspace sits on coordinate axes (the
    recipes above always do this), an eigendecomposition otherwise.
    """
    M = np.asarray(M)
    d = np.diagonal(M)
    tol = 1e-9 * max(1.0, abs(value))
    idx = np.flatnonzero(np.abs(d - value) < tol)
    if idx.size:
        rows = M[idx].copy()
        rows[np.arange(idx.size), idx] = 0
        cols = M[:, idx].copy()
        cols[idx, np.arange(idx.size)] = 0
        if not np.any(np.abs(rows) > tol) and not np.any(np.abs(cols) > tol):
            return idx, None
    if _is_diag(M):
        return np.zeros(0, dtype=int), None
    if circle:
        lam, V = eigensystem(ConvolutionKind.CIRCLE, M)
    else:
        lam, V = np.linalg.eigh(M)
    return None, V[:, np.abs(lam - value) < tol]


def _compress(V, basis):
    """Coefficients of the columns of V on an eigenspace basis."""
    idx, E = basis
    if idx is not None:
        return V[idx, :]
    return E.conj().T @ V


def _spike_basis(M, spikes, circle):
    idx, mats = [], []
    for v in spikes:
        i, E = _eigenbasis(M, v, circle)
        if i is not None:
            idx.extend(i.tolist())
        else:
            mats.append(E)
    if not mats:
        return np.array(sorted(set(idx)), dtype=int), None
    E = np.concatenate([np.eye(M.shape[0])[:, sorted(set(idx))]] + mats, axis=1)
    return None, E


def _opnorm2(M):
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2) ** 2)


def _within(kind, lam, rho, eps):
    if kind == ConvolutionKind.CIRCLE:
        return np.abs(np.angle(lam * np.conj(rho))) < eps
    return np.abs(np.real(lam) - float(np.real(rho))) < eps


def _side_value(kind, omega):
    """Spike value hit by the subordination function at an outlier."""
    if kind == ConvolutionKind.ADDITIVE:
        return float(np.real(omega))
    if kind == ConvolutionKind.POSITIVE:
        return 1.0 / float(np.real(omega))
    return 1.0 / complex(omega)


def _position(kind, lam):
    return np.angle(lam) if kind == ConvolutionKind.CIRCLE else np.real(lam)


def measure_trial(kind, X, report: OutlierReport, A, B, U, epsilon=None, A_spikes=None,
                  B_spikes=None, outside_distance=0.1, eig=None):
    """Measure one sampled matrix against a report.

    Parameters
    ----------
    kind : ConvolutionKind or str
    X : ndarray
        Model matrix (may be None when ``eig`` is given).
    report : OutlierReport
    A, B, U : ndarray
        Deformations and the Haar unitary used to build ``X``.
    epsilon : sequence of float, optional
        Window half widths; defaults to each record's ``epsilon``.
    A_spikes, B_spikes : sequence, optional
        Spike values of A and B; ``P`` and ``Q`` project on their eigenspaces.
    outside_distance : float
        Eigenvalues farther than this from ``K`` count as detected outliers.
    eig : (eigenvalues, eigenvectors), optional
        Precomputed eigensystem of ``X``.

    Returns
    -------
    dict with eigenvalues, per-window measurements and detected outliers.
    """
    kind = ConvolutionKind.parse(kind)
    circle = kind == ConvolutionKind.CIRCLE
    outs = report.outliers
    eps = [o.epsilon for o in outs] if epsilon is None else [float(e) for e in epsilon]
    if len(eps) != len(outs):
        raise ModelError("window-overlap", "one epsilon per predicted outlier is required")
    _check_windows(kind, report, eps)
    if eig is not None:
        lam, V = eig
    elif circle:
        lam, V = eigensystem(kind, X)
    else:
        # all eigenvalues, eigenvectors only inside the windows
        lam, V = np.linalg.eigvalsh(X), None
    A_spikes = list(A_spikes or [])
    B_spikes = list(B_spikes or [])
    P = _spike_basis(A, A_spikes, circle)
    roots = (_psd_sqrt(A, "A"), _psd_sqrt(B, "B")) if kind == ConvolutionKind.POSITIVE else None
    Q = _spike_basis(B, B_spikes, circle)

    windows = []
    in_any = np.zeros(lam.shape, dtype=bool)
    for j, (o, e) in enumerate(zip(outs, eps)):
        mask = _within(kind, lam, o.rho, e)
        in_any |= mask
        if V is not None:
            vals, Vw = lam[mask].copy(), V[:, mask]
        elif mask.any():
            x = float(np.real(o.rho))
            vals, Vw = sla.eigh(X, subset_by_value=(x - e, x + e), driver="evr")
        else:
            vals, Vw = lam[:0].copy(), np.zeros((lam.size, 0), dtype=complex)
        MA = _compress(Vw, P)
        W = _b_side(kind, Vw, U, roots)
        MB = _compress(W, Q)
        rec = {"window": j, "rho": o.rho, "epsilon": e, "count": int(vals.size),
               "expected": int(o.k + o.ell), "values": vals,
               "overlapA": _opnorm2(MA), "overlapB": _opnorm2(MB)}
        if len(rec["values"]):
            off = (np.abs(np.angle(rec["values"] * np.conj(o.rho))) if circle
                   else np.abs(np.real(rec["values"]) - float(np.real(o.rho))))
            rec["location_delta"] = float(off.max())
        else:
            rec["location_delta"] = math.inf
        for side, M, basis, val, count, wgt, proj in (
                ("A", A, P, o.omega1, o.k, o.weight_A, MA),
                ("B", B, Q, o.omega2, o.ell, o.weight_B, MB)):
            target = _side_value(kind, val) if count else None
            tb = _eigenbasis(M, target, circle) if count else None
            Ct = _compress(Vw if side == "A" else W, tb) if count else np.zeros((0, Vw.shape[1]))
            # || P E P - w E(target) || on the spike block
            G = proj @ proj.conj().T
            if count and np.isfinite(wgt) and basis[0] is not None and tb[0] is not None:
                G = G - wgt * np.diag(np.isin(basis[0], tb[0]).astype(float))
            rec[f"deviation{side}"] = float(np.linalg.norm(G, 2)) if G.size else 0.0
            rec[f"trace{side}"] = float(np.sum(np.abs(Ct) ** 2))
            other = o.ell if side == "A" else o.k
            if count and other == 0:
                rec[f"perVector{side}"] = np.sum(np.abs(Ct) ** 2, axis=0)
            else:
                rec[f"perVector{side}"] = np.zeros(0)
        windows.append(rec)

    pos = _position(kind, lam)
    dist = report.K.distance(pos) if (report.K.components or report.K.atoms) \
        else np.full(lam.shape, np.inf)
    dist = np.atleast_1d(dist)
    outside = dist > outside_distance
    win_of = np.full(lam.shape, -1)
    for j, w in enumerate(windows):
        win_of[_within(kind, lam, outs[j].rho, eps[j])] = j
    detected = [(lam[i], int(win_of[i])) for i in np.flatnonzero(outside)]
    unassigned = int(np.sum(outside & ~in_any))
    return {"eigenvalues": lam, "windows": windows, "detected": detected,
            "outside_unassigned": unassigned,
            "modulus_error": float(np.max(np.abs(np.abs(lam) - 1))) if circle else 0.0}


def _b_side(kind, Vw, U, roots):
    """Window eigenvectors seen from the B side.

    ``U xi`` for the additive and circle models.  For the positive model the
    window is carried to the similar matrix ``B^{1/2} U A U* B^{1/2}`` by
    ``xi -> B^{1/2} U A^{1/2} xi`` and re-orthonormalised.
    """
    W = U @ (Vw if roots is None else _apply(roots[0], Vw))
    if roots is None or W.shape[1] == 0:
        return W
    W = _apply(roots[1], W)
    return np.linalg.qr(W)[0]


def _apply(M, V):
    if _is_diag(M):
        return np.diagonal(M)[:, None] * V
    return M @ V


def _check_windows(kind, report, eps):
    outs = report.outliers
    for i, (o, e) in enumerate(zip(outs, eps)):
        x = float(np.angle(o.rho)) if kind == ConvolutionKind.CIRCLE else float(np.real(o.rho))
        if report.K.components or report.K.atoms:
            if report.K.distance(x) <= e:
                raise ModelError("window-overlap", f"window {i} meets K_eps")
        for j in range(i + 1, len(outs)):
            if kind == ConvolutionKind.CIRCLE:
                d = abs(float(np.angle(outs[j].rho * np.conj(o.rho))))
            else:
                d = abs(float(np.real(outs[j].rho)) - x)
            if d < e + eps[j]:
                raise ModelError("window-overlap", f"windows {i} and {j} overlap")


# ---------------------------------------------------------------------------
# determinant reduction


def spike_free(A, spike_index, alpha):
    """Split ``A = A' + P* Theta P``: spikes on ``spike_index`` replaced by ``alpha``.

    Returns ``(A', Theta)`` with ``Theta = diag(theta_i - alpha)``.
    """
    idx = np.asarray(spike_index, dtype=int)
    Ap = np.array(A, copy=True)
    theta = np.real(np.diagonal(A)[idx]) - alpha
    Ap[idx, idx] = alpha
    return Ap, np.diag(theta)


def det_FN(z, spike_index, X_prime, Theta):
    """``F_N(z) = I_p - P (z - X')^{-1} P* Theta`` as a ``p x p`` matrix.

    ``P`` selects the coordinates ``spike_index``.  Zeros of ``det F_N`` off
    the spectrum of ``X'`` are the eigenvalues of ``X' + P* Theta P`` there.
    """
    idx = np.asarray(spike_index, dtype=int)
    Xp = np.asarray(X_prime)
    n = Xp.shape[0]
    p = idx.size
    Theta = np.atleast_2d(np.asarray(Theta))
    if p == 0:
        return np.eye(0)
    lam = np.linalg.eigvalsh(Xp)
    if np.min(np.abs(lam - z)) < 1e-12 * max(1.0, np.max(np.abs(lam))):
        raise ModelError("z-in-spectrum", f"z = {z!r} is an eigenvalue of X'")
    rhs = np.zeros((n, p), dtype=complex)
    rhs[idx, np.arange(p)] = 1.0
    R = np.linalg.solve(z * np.eye(n) - Xp, rhs)
    return np.eye(p) - R[idx, :] @ Theta


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class SimulationConfig:
    kind: ConvolutionKind
    A: SpikedModel
    B: SpikedModel
    N: int
    trials: int = 1
    seed: int = 0
    A_recipe: dict = field(default_factory=dict)
    B_recipe: dict = field(default_factory=dict)
    epsilon: list | None = None
    outside_distance: float = 0.1
    workers: int = 1


@dataclass
class TrialRecord:
    trial: int
    eigenvalues: np.ndarray
    windows: list
    detected: list
    outside_unassigned: int
    modulus_error: float


@dataclass
class SimulationResult:
    kind: ConvolutionKind
    N: int
    seed: int
    trials: list
    report: OutlierReport

    def aggregate(self):
        """Means, standard deviations and pass counts per predicted window."""
        out = []
        for j, o in enumerate(self.report.outliers):
            rows = [t.windows[j] for t in self.trials]
            cnt = np.array([r["count"] for r in rows], dtype=float)
            a = np.array([r["overlapA"] for r in rows])
            b = np.array([r["overlapB"] for r in rows])
            loc = np.array([r["location_delta"] for r in rows])
            out.append({
                "window": j, "rho": _jsonnum(o.rho), "k": o.k, "ell": o.ell,
                "epsilon": float(self.trials[0].windows[j]["epsilon"]) if self.trials else o.epsilon,
                "count_mean": float(cnt.mean()), "count_std": float(cnt.std()),
                "count_exact_trials": int(np.sum(cnt == o.k + o.ell)),
                "overlapA_mean": float(a.mean()), "overlapA_std": float(a.std()),
                "overlapB_mean": float(b.mean()), "overlapB_std": float(b.std()),
                "weightA": _jsonnum(o.weight_A), "weightB": _jsonnum(o.weight_B),
                "overlapA_delta": _jsonnum(abs(a.mean() - o.weight_A)),
                "overlapB_delta": _jsonnum(abs(b.mean() - o.weight_B)),
                "location_delta_max": _jsonnum(float(loc.max())),
                "location_delta_mean": _jsonnum(float(loc.mean())),
            })
        return out

    def summary(self):
        return {
            "kind": self.kind.value, "N": self.N, "seed": self.seed,
            "trials": len(self.trials),
            "windows": self.aggregate(),
            "detected_per_trial": [len(t.detected) for t in self.trials],
            "outside_unassigned_per_trial": [t.outside_unassigned for t in self.trials],
            "max_modulus_error": float(max((t.modulus_error for t in self.trials), default=0.0)),
        }

    # -- file output -----------------------------------------------------
    def _pos(self, lam):
        return _position(self.kind, np.asarray(lam))

    def write_spectra(self, path):
        col = "angle" if self.kind == ConvolutionKind.CIRCLE else "eigenvalue"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "rank", col])
            for t in self.trials:
                for r, v in enumerate(self._pos(t.eigenvalues)):
                    w.writerow([t.trial, r, repr(float(v))])

    def write_outliers(self, path):
        """Rows per (trial, window); window -1 collects outliers outside every window."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "window", "count", "values"])
            for t in self.trials:
                for r in t.windows:
                    vals = self._pos(r["values"])
                    w.writerow([t.trial, r["window"], r["count"],
                                ";".join(repr(float(v)) for v in vals)])
                stray = [v for v, j in t.detected if j < 0]
                if stray:
                    w.writerow([t.trial, -1, len(stray),
                                ";".join(repr(float(v)) for v in self._pos(stray))])

    def write_overlaps(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "window", "overlapA", "overlapB"])
            for t in self.trials:
                for r in t.windows:
                    w.writerow([t.trial, r["window"], repr(r["overlapA"]), repr(r["overlapB"])])

    def write_histogram(self, path, bins=200):
        """Histogram of all eigenvalues (density normalised) for plotting."""
        allv = np.concatenate([self._pos(t.eigenvalues) for t in self.trials])
        if self.kind == ConvolutionKind.CIRCLE:
            rng = (-math.pi, math.pi)
        else:
            lo, hi = float(allv.min()), float(allv.max())
            pad = 0.02 * max(hi - lo, 1e-12)
            rng = (lo - pad, hi + pad)
        cnt, edges = np.histogram(allv, bins=bins, range=rng)
        dens = cnt / (cnt.sum() * np.diff(edges))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["left", "right", "count", "density"])
            for a, b, c, d in zip(edges[:-1], edges[1:], cnt, dens):
                w.writerow([repr(float(a)), repr(float(b)), int(c), repr(float(d))])

    def write_markers(self, path):
        """Predicted outlier positions, for overlaying on the histogram."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["position", "k", "ell", "epsilon"])
            for o in self.report.outliers:
                w.writerow([repr(float(self._pos(o.rho))), o.k, o.ell, repr(float(o.epsilon))])


def _jsonnum(v):
    v = complex(v)
    if v.imag != 0:
        return [v.real, v.imag]
    r = v.real
    return r if math.isfinite(r) else repr(r)


def _recipe(model, spec):
    return MatrixRecipe.from_model(model, spec)


def simulate_trial(cfg: SimulationConfig, report: OutlierReport, trial: int) -> TrialRecord:
    rng = trial_rng(cfg.seed, trial)
    A = build_diagonal(_recipe(cfg.A, cfg.A_recipe), cfg.N, rng)
    B = build_diagonal(_recipe(cfg.B, cfg.B_recipe), cfg.N, rng)
    U = haar_unitary(cfg.N, rng)
    X = assemble(cfg.kind, A, B, U)
    r = measure_trial(cfg.kind, X, report, A, B, U, epsilon=cfg.epsilon,
                      A_spikes=[v for v, _ in cfg.A.spikes], B_spikes=[v for v, _ in cfg.B.spikes],
                      outside_distance=cfg.outside_distance)
    return TrialRecord(trial, r["eigenvalues"], r["windows"], r["detected"],
                       r["outside_unassigned"], r["modulus_error"])


def run_monte_carlo(config: SimulationConfig, report: OutlierReport) -> SimulationResult:
    """Run ``config.trials`` independent trials and collect them in trial order."""
    if config.trials < 1:
        raise ModelError("bad-trials", "trials must be >= 1")
    cfg = config
    cfg.kind = ConvolutionKind.parse(cfg.kind)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
            trials = list(ex.map(lambda t: simulate_trial(cfg, report, t), range(cfg.trials)))
    else:
        trials = [simulate_trial(cfg, report, t) for t in range(cfg.trials)]
    return SimulationResult(cfg.kind, cfg.N, cfg.seed, trials, report)

