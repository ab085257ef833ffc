import math

import numpy as np
import pytest

from freeoutliers import measures as M
from freeoutliers.errors import BoundaryError, ZeroFirstMomentError
from freeoutliers.measures import _F, _cauchy, _eta, _h
from freeoutliers.simulation import haar_unitary
from freeoutliers.subordination import (ConvolutionKind, SolverOptions, SubordinationSolution,
                                        cauchy_of_convolution, continue_to_boundary, derivative_at,
                                        solve_additive, solve_multiplicative_circle,
                                        solve_multiplicative_positive)

ADD, POS, CIR = ConvolutionKind.ADDITIVE, ConvolutionKind.POSITIVE, ConvolutionKind.CIRCLE


def test_kind_parse_and_carriers():
    assert ConvolutionKind.parse("additive") is ADD
    assert ConvolutionKind.parse("multiplicative-positive") is POS
    assert ConvolutionKind.parse("unitary") is CIR
    assert POS.carriers == ("positive",)


def test_carrier_mismatch_rejected():
    with pytest.raises(ValueError):
        SubordinationSolution(CIR, M.semicircle(), M.semicircle())


# -- additive ---------------------------------------------------------------


def test_point_mass_translation():
    nu = M.arcsine(0.5, 1.0)
    z = np.array([0.3 + 0.2j, -4 + 1e-3j, 2j])
    w1, w2, _ = solve_additive(M.point_mass(1.5), nu, z)
    assert np.array_equal(w2, z - 1.5)
    assert np.allclose(w1, _F(nu, z - 1.5) + 1.5, rtol=1e-14)


def test_semicircles_at_i():
    w1, w2, F = solve_additive(M.semicircle(0, 1), M.semicircle(0, 1), 1j)
    assert abs(w1 - 1.5j) < 1e-12 and abs(w2 - 1.5j) < 1e-12
    assert abs(F - 2j) < 1e-12


def test_subordination_identities_additive():
    mu, nu = M.two_atom(-1, 1, 0.3), M.semicircle(0.5, 2.0)
    z = np.array([0.1 + 1e-6j, 3 + 0.5j, -2 + 1e-4j])
    w1, w2, F = solve_additive(mu, nu, z)
    assert np.allclose(w1 + w2 - z, F, rtol=1e-11)
    assert np.allclose(_F(mu, w1), F, rtol=1e-11)
    assert np.allclose(_F(nu, w2), F, rtol=1e-11)


def test_fixed_point_map_reproduces_omega():
    sol = SubordinationSolution(ADD, M.two_atom(-1, 1, 0.5), M.semicircle(0, 1))
    z = np.array([0.2 + 0.01j, 1 + 1j])
    w1 = sol.omega1(z)
    tw = sol.fixed_point_map(w1, z)
    assert np.all(np.abs(tw - w1) < 1e-12 * (1 + np.abs(w1)))


def _trace_resolvent(X, z):
    n = X.shape[0]
    return np.trace(np.linalg.inv(z * np.eye(n) - X)) / n


@pytest.mark.slow
def test_additive_against_simulation():
    N = 4000
    rng = np.random.default_rng(7)
    mu, nu = M.two_atom(-1, 1, 0.5), M.semicircle(0, 1)
    a, b = M.quantiles(mu, N), M.quantiles(nu, N)
    U = haar_unitary(N, rng)
    X = np.diag(a) + (U.conj().T * b) @ U
    g = _trace_resolvent(X, 3j)
    w2_mc = g + 1 / g          # inverse of the semicircle Cauchy transform
    _, w2, F = solve_additive(mu, nu, 3j)
    assert abs(1 / F - g) < 2e-4
    assert abs(w2 - w2_mc) < 2e-3


# -- positive ---------------------------------------------------------------


def test_positive_dilation():
    mu = M.marchenko_pastur(0.5, 1.0)
    z = np.array([-1 + 0.5j, 0.3 + 0.1j, -5.0])
    w1, w2, e = solve_multiplicative_positive(mu, M.point_mass(2.0, carrier="positive"), z)
    assert np.array_equal(w1, 2.0 * z)
    assert np.allclose(e, _eta(mu, 2.0 * z), rtol=1e-14)


def test_positive_first_moment_at_origin():
    mu, nu = M.marchenko_pastur(0.5, 2.0), M.two_atom(1, 3, 0.25, carrier="positive")
    z = np.array([-1e-4, -1e-5, -1e-6])
    w1, _, _ = solve_multiplicative_positive(mu, nu, z)
    r = (w1 / z).real
    assert abs(r[-1] - nu.mean) < 1e-4
    assert np.all(np.diff(np.abs(r - nu.mean)) < 0)


def test_positive_identities():
    mu, nu = M.marchenko_pastur(0.3, 1.0), M.two_atom(1, 2, 0.5, carrier="positive")
    z = np.array([-1.0, 0.7 + 0.1j, 3 + 1e-5j])
    w1, w2, e = solve_multiplicative_positive(mu, nu, z)
    assert np.allclose(w1 * w2 / z, e, rtol=1e-10)
    assert np.allclose(_eta(mu, w1), e, rtol=1e-10)
    assert np.allclose(_eta(nu, w2), e, rtol=1e-10)


def test_zero_first_moment_rejected():
    with pytest.raises(ZeroFirstMomentError):
        SubordinationSolution(CIR, M.circle_atomic([0, np.pi], [0.5, 0.5]),
                              M.circle_atomic([0.0], [1.0]))


@pytest.mark.slow
def test_positive_against_simulation():
    N = 4000
    rng = np.random.default_rng(8)
    mu = nu = M.two_atom(1, 2, 0.5, carrier="positive")
    a, b = M.quantiles(mu, N), M.quantiles(nu, N)
    U = haar_unitary(N, rng)
    s = np.sqrt(a)
    X = s[:, None] * ((U.conj().T * b) @ U) * s[None, :]
    z = -1.0
    # psi(z) = tr((1 - zX)^{-1}) / N - 1
    psi = np.trace(np.linalg.inv(np.eye(N) - z * X)) / N - 1
    eta_mc = psi / (1 + psi)
    _, _, e = solve_multiplicative_positive(mu, nu, z)
    assert abs(e - eta_mc) < 1e-3


# -- circle -----------------------------------------------------------------


def test_circle_rotation_and_identity():
    mu = M.circle_atomic([0.0, 1.0], [0.7, 0.3])
    z = np.array([0.5, 0.3j, -0.2 + 0.6j])
    w1, _, _ = solve_multiplicative_circle(mu, M.circle_atomic([0.8], [1.0]), z)
    assert np.allclose(w1, np.exp(0.8j) * z, rtol=0, atol=1e-15)
    one = M.circle_atomic([0.0], [1.0])
    w1, w2, e = solve_multiplicative_circle(one, one, z)
    assert np.allclose(w1, z) and np.allclose(w2, z) and np.allclose(e, z)


def test_circle_contraction():
    mu = M.circle_atomic([0, np.pi], [0.9, 0.1])
    nu = M.circle_atomic([0, np.pi / 2], [0.8, 0.2])
    z = 0.99 * np.exp(1j * np.linspace(-3, 3, 25))
    w1, w2, e = solve_multiplicative_circle(mu, nu, z)
    assert np.all(np.abs(w1) <= np.abs(z) + 1e-14)
    assert np.all(np.abs(w2) <= np.abs(z) + 1e-14)
    assert np.allclose(w1 * w2 / z, e, rtol=1e-10)


@pytest.mark.slow
def test_circle_against_simulation():
    N = 4000
    rng = np.random.default_rng(9)
    mu = M.circle_atomic([0, np.pi], [0.9, 0.1])
    nu = M.circle_atomic([0, np.pi / 2], [0.8, 0.2])
    a, b = M.quantiles(mu, N), M.quantiles(nu, N)
    U = haar_unitary(N, rng)
    X = a[:, None] * ((U.conj().T * b) @ U)
    z = 0.5
    psi = np.trace(np.linalg.inv(np.eye(N) - z * X)) / N - 1
    _, _, e = solve_multiplicative_circle(mu, nu, z)
    assert abs(e - psi / (1 + psi)) < 1e-3


# -- boundary values and derivatives ----------------------------------------


def test_boundary_point_mass_semicircle():
    w1, w2, pole = continue_to_boundary(ADD, M.point_mass(0.0), M.semicircle(0, 1), 3.0)
    assert pole is None
    assert abs(w1 - (3 + math.sqrt(5)) / 2) < 1e-12
    assert w2 == 3.0


def test_boundary_symmetry():
    sol = SubordinationSolution(ADD, M.two_atom(-1, 1, 0.5), M.semicircle(0, 1))
    x = np.array([2.7, 3.5])
    a, b = sol.boundary(x), sol.boundary(-x)
    assert np.all(a.status == 0) and np.all(b.status == 0)
    assert np.allclose(a.omega1, -b.omega1, atol=1e-9)
    assert np.allclose(a.omega2, -b.omega2, atol=1e-9)


def test_boundary_read_backwards_two_outliers():
    x = 5 + math.sqrt(26)
    _, w2, _ = continue_to_boundary(ADD, M.two_atom(-1, 1, 0.5), M.point_mass(0.0), x)
    assert abs(w2 - 10) < 1e-10


def test_boundary_consistency_relations():
    mu, nu = M.two_atom(-1, 1, 0.5), M.semicircle(0, 1)
    w1, w2, _ = continue_to_boundary(ADD, mu, nu, 3.2)
    assert abs(w2 - (_h(mu, w1) + 3.2)) < 1e-9
    mu, nu = M.marchenko_pastur(0.3, 1.0), M.two_atom(1, 2, 0.5, carrier="positive")
    x = 0.05  # domain point 1/rho with rho = 20 beyond the support
    w1, w2, _ = continue_to_boundary(POS, mu, nu, x)
    assert abs(1 / w2 - w1 / (x * _eta(mu, w1))) < 1e-9 * abs(1 / w2)


def test_boundary_circle_unimodular():
    ang = np.linspace(-0.8, 0.8, 7)
    mu = M.circle_atomic(ang, np.full(7, 1 / 7))
    sol = SubordinationSolution(CIR, mu, mu)
    x = np.exp(1j * np.array([2.5, 3.0, -2.2]))
    bv = sol.boundary(x)
    assert np.all(bv.status == 0)
    assert np.all(np.abs(np.abs(bv.omega1) - 1) < 1e-10)
    assert np.all(np.abs(np.abs(bv.omega2) - 1) < 1e-10)


def test_pole_companion_value():
    # symmetric atoms: G_nu vanishes at 0, so omega2 blows up like 1/eps there
    mu, nu = M.two_atom(-1, 1, 0.5), M.two_atom(-0.1, 0.1, 0.5)
    sol = SubordinationSolution(ADD, mu, nu)
    bv = sol.boundary(np.array([0.0, 0.3]))
    assert list(bv.status) == [2, 0]
    assert np.isinf(bv.omega2[0])
    assert bv.omega1[0] == 0.0 - nu.mean
    # the swapped pair reports the mirror pole
    bv = SubordinationSolution(ADD, nu, mu).boundary(np.array([0.0]))
    assert bv.status[0] == 1 and np.isinf(bv.omega1[0])


def test_derivative_examples():
    sol = SubordinationSolution(ADD, M.point_mass(0.0), M.semicircle(0, 1))
    assert abs(derivative_at(sol, 2.5, "omega1") - 4 / 3) < 1e-8
    assert abs(derivative_at(sol, 2.5, "omega2") - 1) < 1e-12
    mu = M.two_atom(-1, 1, 0.5)
    sol = SubordinationSolution(ADD, mu, M.point_mass(0.0))
    rho = 5 + math.sqrt(26)
    d = derivative_at(sol, rho, "omega2")
    gp = -0.5 / (rho - 1) ** 2 - 0.5 / (rho + 1) ** 2
    assert abs(1 / d - (-(1 / 100) / gp)) < 1e-8


def test_derivative_stencil_error():
    sol = SubordinationSolution(ADD, M.two_atom(-1, 1, 0.5), M.semicircle(0, 1))
    with pytest.raises(BoundaryError):
        sol.derivative(0.0, "omega1")


def test_swap_symmetry_exact():
    mu, nu = M.two_atom(-1, 1, 0.3), M.semicircle(0.2, 0.5)
    z = np.array([0.1 + 0.01j, 2 + 1j])
    a = SubordinationSolution(ADD, mu, nu).solve(z)
    b = SubordinationSolution(ADD, nu, mu).solve(z)
    assert np.array_equal(a[0], b[1]) and np.array_equal(a[1], b[0])


def test_options_roundtrip():
    o = SolverOptions(tol=1e-12, eps_ladder=(1e-2, 1e-4))
    assert SolverOptions.from_dict(o.to_dict()) == o
    with pytest.raises(ValueError):
        SolverOptions.from_dict({"bogus": 1})


def test_cauchy_consistency_with_convolution_transform():
    mu, nu = M.semicircle(0, 1), M.semicircle(0, 1)
    sol = SubordinationSolution(ADD, mu, nu)
    z = 0.4 + 0.3j
    w1, w2, F = sol.solve(z)
    assert abs(_cauchy(mu, w1) - 1 / F) < 1e-13
    assert abs(_cauchy(nu, w2) - 1 / F) < 1e-13


def test_cauchy_of_convolution_by_kind():
    # translation, dilation and rotation by a point mass are explicit
    mu = M.two_atom(-1, 1, 0.3)
    z = np.array([0.3 + 0.5j, -2 + 1e-3j, 4 - 2j])
    g = cauchy_of_convolution(SubordinationSolution("additive", mu, M.point_mass(0.7)), z[:2])
    assert np.allclose(g, M.transform(mu, "G", z[:2] - 0.7), rtol=1e-12, atol=0)
    mp = M.marchenko_pastur(0.4, 1.0)
    g = cauchy_of_convolution(SubordinationSolution("positive", mp, M.point_mass(2.5)), z)
    assert np.allclose(g, M.transform(mp, "G", z / 2.5) / 2.5, rtol=1e-12, atol=0)
    a = M.circle_atomic([0.0, 1.0], [0.6, 0.4])
    r = np.exp(0.5j)
    zz = 1.5 * np.exp(1j * np.linspace(0, 6, 20))
    g = cauchy_of_convolution(SubordinationSolution("circle", a, M.circle_atomic([0.5], [1.0])), zz)
    assert np.allclose(g, M.transform(a, "G", zz / r) / r, rtol=1e-12, atol=0)
    with pytest.raises(ValueError):
        cauchy_of_convolution(SubordinationSolution("circle", a, a), np.array([0.5 + 0j]))
