import cmath
import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq, newton

from freeoutliers import measures as M
from freeoutliers.errors import ModelError
from freeoutliers.outliers import OutlierReport, SpikedModel, predict
from freeoutliers.subordination import SolverOptions, SubordinationSolution

ADD, POS, CIR = "additive", "positive", "circle"


def _G(m, x):
    return complex(M.transform(m, "G", x))


def test_bbp_prediction():
    r = predict(ADD, SpikedModel(M.point_mass(0.0), (2.0,)), SpikedModel(M.semicircle(0, 1)))
    (o,) = r.outliers
    assert abs(o.rho - 2.5) < 1e-8
    assert (o.k, o.ell) == (1, 0)
    assert abs(o.weight_A - 0.75) < 1e-8
    assert o.weight_B == 0.0


def test_one_spike_two_outliers():
    mu = M.two_atom(-1, 1, 0.5)
    r = predict(ADD, SpikedModel(mu), SpikedModel(M.point_mass(0.0), (10.0,)))
    rhos = sorted(float(o.rho) for o in r.outliers)
    assert rhos == pytest.approx([5 - math.sqrt(26), 5 + math.sqrt(26)], abs=1e-8)
    for o in r.outliers:
        assert (o.k, o.ell) == (0, 1)
        rho = float(o.rho)
        gp = -0.5 / (rho - 1) ** 2 - 0.5 / (rho + 1) ** 2
        assert abs(o.weight_B - (-(1 / 100) / gp)) < 1e-8
        assert o.weight_A == 0.0


def test_no_spikes_gives_empty_report():
    r = predict(ADD, SpikedModel(M.semicircle(0, 1)), SpikedModel(M.two_atom(-1, 1, 0.5)))
    assert r.outliers == []
    assert r.K_prime["components"] == [list(c) for c in r.K.components]
    assert r.K_prime["atoms"] == list(r.K.atoms)


@pytest.mark.parametrize("nu", [M.semicircle(0.3, 0.8), M.marchenko_pastur(0.4, 1.0),
                                M.two_atom(-1, 2, 0.3)])
@pytest.mark.parametrize("theta", [-4.0, 3.0, 5.5])
def test_rank_one_additive_matches_inverse_cauchy(nu, theta):
    r = predict(ADD, SpikedModel(M.point_mass(0.0), (theta,)), SpikedModel(nu))
    lo, hi = nu.support_bounds()
    # G is monotone on each unbounded gap; root of G(x) = 1/theta there if any
    if theta > 0:
        f = lambda x: _G(nu, x).real - 1 / theta  # noqa: E731
        a, b = hi + 1e-12, hi + 100
    else:
        f = lambda x: _G(nu, x).real - 1 / theta  # noqa: E731
        a, b = lo - 100, lo - 1e-12
    outer = [o for o in r.outliers if not lo <= float(o.rho) <= hi]
    if f(a) * f(b) < 0:
        want = brentq(f, a, b, xtol=1e-14)
        assert len(outer) == 1 and abs(float(outer[0].rho) - want) < 1e-8
    else:
        assert outer == []


def test_below_threshold_no_outlier():
    # 1/theta = 2 lies above G(2) = 1 for the semicircle: no outlier
    r = predict(ADD, SpikedModel(M.point_mass(0.0), (0.5,)), SpikedModel(M.semicircle(0, 1)))
    assert r.outliers == []


def test_positive_rank_one_secular_equation():
    # A = I + (theta - 1) e e*: outliers solve rho G_nu(rho) = theta / (theta - 1)
    nu = M.marchenko_pastur(0.3, 1.0)
    theta = 3.0
    r = predict(POS, SpikedModel(M.point_mass(1.0), (theta,)), SpikedModel(nu))
    (o,) = r.outliers
    hi = nu.support_bounds()[1]
    want = brentq(lambda x: x * _G(nu, x).real - theta / (theta - 1), hi + 1e-9, 100, xtol=1e-14)
    assert abs(float(o.rho) - want) < 1e-8


def test_circle_rank_one_secular_equation():
    # A = I + (theta - 1) e e* times a unitary with 7 atoms: by interlacing one
    # eigenvalue sits in each of the 7 gaps, all roots of z G(z) = theta/(theta - 1)
    nu = M.circle_atomic(np.linspace(-0.8, 0.8, 7), [1 / 7] * 7)
    theta = cmath.exp(2.5j)
    r = predict(CIR, SpikedModel(M.point_mass(1.0 + 0j, carrier="circle"), (theta,)),
                SpikedModel(nu))
    assert len(r.outliers) == 7
    gaps = r.K.gaps()
    f = lambda z: z * _G(nu, z) - theta / (theta - 1)  # noqa: E731
    for o in r.outliers:
        rho = complex(o.rho)
        assert abs(abs(rho) - 1) < 1e-12
        assert abs(f(rho)) < 1e-8
        root = newton(f, rho * cmath.exp(0.001j), tol=1e-14)
        assert abs(cmath.phase(root / rho)) < 1e-8
        a = o.angle
        assert sum(lo < a < hi or lo < a + 2 * math.pi < hi for lo, hi in gaps) == 1
    # the perturbation vector is split among the outlier eigenvectors only
    assert abs(sum(o.weight_A for o in r.outliers) - 1) < 1e-6


def test_point_mass_bulk_positive():
    mu = M.marchenko_pastur(0.1, 1.0)
    r = predict(POS, SpikedModel(mu), SpikedModel(M.point_mass(0.0), (2.0, 5.0)))
    assert r.point_mass_bulk
    assert sorted(float(o.rho) for o in r.outliers) == pytest.approx([2 * mu.mean, 5 * mu.mean],
                                                                    abs=1e-12)
    for o in r.outliers:
        assert o.ell == 1 and math.isnan(o.weight_B)


def test_point_mass_without_shortcut_is_an_error():
    opts = SolverOptions(point_mass_shortcut=False)
    with pytest.raises(ModelError) as ei:
        predict(POS, SpikedModel(M.marchenko_pastur(0.1, 1.0)),
                SpikedModel(M.point_mass(0.0), (2.0,)), solver_opts=opts)
    assert ei.value.code == "point-mass-input"


def test_multiplicity_adds_to_count():
    r = predict(ADD, SpikedModel(M.point_mass(0.0), ((3.0, 2), 3.0)),
                SpikedModel(M.semicircle(0, 1)))
    (o,) = r.outliers
    assert o.k == 3 and abs(o.rho - (3 + 1 / 3)) < 1e-8


def test_coinciding_roots_from_both_sides_merge():
    # omega1(rho) = theta and omega2(rho) = tau at the same point:
    # semicircle (+) semicircle with equal variances is symmetric in the two sides
    s = M.semicircle(0, 1)
    r = predict(ADD, SpikedModel(s, (3.0,)), SpikedModel(s, (3.0,)))
    (o,) = r.outliers
    assert (o.k, o.ell) == (1, 1)
    assert o.weight_A == pytest.approx(o.weight_B, rel=1e-9)


@pytest.mark.parametrize("spec", [
    ("spike-in-support", lambda: SpikedModel(M.semicircle(0, 1), (1.0,))),
    ("bad-multiplicity", lambda: SpikedModel(M.semicircle(0, 1), ((3.0, 0),))),
    ("off-carrier-spike", lambda: SpikedModel(M.marchenko_pastur(0.5, 1.0), (-2.0,)).check_kind(POS)),
    ("off-carrier-spike", lambda: SpikedModel(M.circle_atomic([0.0], [1.0]), (0.5j,))),
])
def test_spiked_model_errors(spec):
    code, make = spec
    with pytest.raises(ModelError) as ei:
        make()
    assert ei.value.code == code


def test_spikes_sorted():
    m = SpikedModel(M.semicircle(0, 1), (3.0, -4.0, 5.0))
    assert m.values() == [5.0, 3.0, -4.0]
    c = SpikedModel(M.circle_atomic([0.0], [1.0]), (cmath.exp(1j), cmath.exp(-1j)))
    assert [cmath.phase(v) % (2 * math.pi) for v in c.values()] == pytest.approx(
        [2 * math.pi - 1, 1.0])


def _swap_check(kind, A, B):
    r1, r2 = predict(kind, A, B), predict(kind, B, A)
    assert len(r1.outliers) == len(r2.outliers)
    for o, p in zip(r1.outliers, r2.outliers):
        assert abs(o.rho - p.rho) < 1e-9
        assert (o.k, o.ell) == (p.ell, p.k)
        assert o.weight_A == pytest.approx(p.weight_B, abs=1e-9)
        assert o.weight_B == pytest.approx(p.weight_A, abs=1e-9)


def test_swap_symmetry_all_kinds():
    _swap_check(ADD, SpikedModel(M.two_atom(-1, 1, 0.4), (4.0,)),
                SpikedModel(M.semicircle(0, 1), (-5.0,)))
    _swap_check(POS, SpikedModel(M.marchenko_pastur(0.3, 1.0), (3.0,)),
                SpikedModel(M.marchenko_pastur(0.2, 1.0), (6.0,)))
    a = M.circle_atomic(np.linspace(-0.8, 0.8, 7), [1 / 7] * 7)
    b = M.circle_atomic(np.linspace(-0.6, 0.6, 5), [0.2] * 5)
    _swap_check(CIR, SpikedModel(a, (cmath.exp(2.5j),)), SpikedModel(b))


def test_reported_roots_resubstitute():
    A = SpikedModel(M.two_atom(-1, 1, 0.4), (4.0, -3.0))
    B = SpikedModel(M.semicircle(0, 1), (-5.0,))
    r = predict(ADD, A, B)
    sol = SubordinationSolution(ADD, A.bulk, B.bulk)
    assert r.outliers
    for o in r.outliers:
        bv = sol.boundary(np.array([float(o.rho)]))
        w1, w2 = bv.omega1[0], bv.omega2[0]
        hits = [abs(w1 - t) for t in A.values()] + [abs(w2 - t) for t in B.values()]
        assert min(hits) < 1e-9


def test_translation_covariance():
    c = 0.7
    A = SpikedModel(M.semicircle(0, 1), (3.0,))
    B = SpikedModel(M.two_atom(-1, 1, 0.5), (-4.0,))
    As = SpikedModel(M.semicircle(c, 1), (3.0 + c,))
    r, rs = predict(ADD, A, B), predict(ADD, As, B)
    assert len(r.outliers) == len(rs.outliers) > 0
    for o, p in zip(r.outliers, rs.outliers):
        assert abs((o.rho + c) - p.rho) < 1e-9
        assert o.weight_A == pytest.approx(p.weight_A, abs=1e-8)
        assert o.weight_B == pytest.approx(p.weight_B, abs=1e-8)


def test_dilation_covariance_positive():
    c = 2.5
    A = SpikedModel(M.marchenko_pastur(0.3, 1.0), (3.0,))
    As = SpikedModel(M.marchenko_pastur(0.3, c), (3.0 * c,))
    B = SpikedModel(M.marchenko_pastur(0.2, 1.0), (6.0,))
    r, rs = predict(POS, A, B), predict(POS, As, B)
    assert len(r.outliers) == len(rs.outliers) == 2
    for o, p in zip(r.outliers, rs.outliers):
        assert abs(c * o.rho - p.rho) < 1e-9 * c * abs(o.rho)
        assert o.weight_A == pytest.approx(p.weight_A, abs=1e-8)
        assert o.weight_B == pytest.approx(p.weight_B, abs=1e-8)


def test_weights_in_unit_interval_and_epsilon_recorded():
    A = SpikedModel(M.two_atom(-1, 1, 0.4), (4.0, -3.0))
    B = SpikedModel(M.semicircle(0, 1), (-5.0,))
    for o in predict(ADD, A, B).outliers:
        for w, n in ((o.weight_A, o.k), (o.weight_B, o.ell)):
            assert (0 < w <= 1) if n else w == 0
        assert o.epsilon > 0 and o.distance_to_support >= 2 * o.epsilon - 1e-12


def test_report_serialisation(tmp_path):
    r = predict(ADD, SpikedModel(M.two_atom(-1, 1, 0.5)), SpikedModel(M.point_mass(0.0), (10.0,)))
    r.to_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert len(d["outliers"]) == 2 and d["kind"] == "additive-real"
    r.to_csv(tmp_path / "r.csv")
    rows = OutlierReport.read_csv(tmp_path / "r.csv")
    assert [row["rho"] for row in rows] == [float(o.rho) for o in r.outliers]
    assert [row["weightB"] for row in rows] == [o.weight_B for o in r.outliers]
    assert rows[0]["sources"] == r.outliers[0].sources
