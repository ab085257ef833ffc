import math

import numpy as np
import pytest
from scipy import integrate

from freeoutliers import measures as M
from freeoutliers.errors import EvaluationOnSupportError, MeasureError


def test_two_atom_moments():
    m = M.make_measure({"family": "two-atom", "a": -1, "b": 1, "weight_a": 0.5})
    assert m.mean == 0 and m.variance == 1
    assert m.support_bounds() == (-1.0, 1.0)


def test_semicircle_moments():
    m = M.semicircle(0, 1)
    assert m.mean == 0 and m.variance == 1
    assert m.support_bounds() == (-2.0, 2.0)


def test_circle_atomic_first_moment():
    m = M.circle_atomic([0.0, np.pi / 2], [0.9, 0.1])
    assert m.carrier == "circle"
    assert abs(m.mean - (0.9 + 0.1j)) < 1e-15


@pytest.mark.parametrize("spec,code", [
    ({"family": "atomic", "atoms": [[0, 0.5], [1, 0.4]]}, "invalid-weights"),
    ({"family": "atomic", "atoms": [[-1, 0.5], [1, 0.5]], "carrier": "positive"},
     "off-carrier-atom"),
    ({"family": "semicircle", "variance": -1}, "negative-variance-family"),
    ({"family": "nope"}, "unknown-family"),
])
def test_make_measure_errors(spec, code):
    with pytest.raises(MeasureError) as ei:
        M.make_measure(spec)
    assert ei.value.code == code


def test_circle_atoms_must_be_unimodular():
    with pytest.raises(MeasureError) as ei:
        M.atomic([1.0, 0.5j], [0.5, 0.5], carrier="circle")
    assert ei.value.code == "off-carrier-atom"


def test_G_two_atom():
    assert abs(M.transform(M.two_atom(-1, 1, 0.5), "G", 2) - 2 / 3) < 1e-15


def test_G_semicircle_closed_form_and_quadrature():
    g = M.transform(M.semicircle(0, 1), "G", 3)
    assert abs(g - (3 - math.sqrt(5)) / 2) < 1e-14
    # independent oracle: quadrature of the density
    q, _ = integrate.quad(lambda t: math.sqrt(4 - t * t) / (2 * math.pi) / (3 - t), -2, 2,
                          epsabs=1e-13)
    assert abs(g - q) < 1e-10


@pytest.mark.parametrize("m", [M.semicircle(0.3, 2.0), M.arcsine(1.0, 0.5),
                               M.marchenko_pastur(0.4, 2.0)])
def test_family_G_against_quadrature(m):
    (a, b), = m.intervals
    z = complex(b + 0.7, 0.3)
    f = lambda t: M.density(m, np.array([t]))[0]  # noqa: E731
    # cos substitution removes the edge singularities of the arcsine law
    mid, half = (a + b) / 2, (b - a) / 2

    def part(fn):
        g = lambda s: fn(mid - half * math.cos(s)) * half * math.sin(s)  # noqa: E731
        return integrate.quad(g, 0, math.pi, epsabs=1e-13, limit=200)[0]
    re = part(lambda t: (1 / (z - t)).real * f(t))
    im = part(lambda t: (1 / (z - t)).imag * f(t))
    assert abs(M.transform(m, "G", z) - complex(re, im)) < 1e-9


def test_point_mass_eta():
    z = np.array([0.3 + 0.2j, -2.0 + 0.1j, 5j])
    assert np.allclose(M.transform(M.point_mass(2.5), "eta", z), 2.5 * z, atol=1e-13, rtol=0)


def test_transform_identities_on_atomic_measures(rng):
    t = np.sort(rng.normal(size=10_000))
    m = M.empirical(t)
    z = np.array([3 + 1j, -0.5 + 0.2j, 0.1 + 4j])
    g = np.array([np.sum(1.0 / (zz - t)) / t.size for zz in z])
    assert np.allclose(M.transform(m, "G", z), g, rtol=1e-13, atol=0)
    assert np.allclose(M.transform(m, "F", z), 1 / g, rtol=1e-13, atol=0)
    assert np.allclose(M.transform(m, "h", z), 1 / g - z, rtol=1e-12, atol=1e-13)
    zp = np.array([0.05 + 0.02j, -0.3 + 0.1j])
    psi = np.array([np.sum(t * zz / (1 - t * zz)) / t.size for zz in zp])
    assert np.allclose(M.transform(m, "psi", zp), psi, rtol=1e-13, atol=1e-15)
    assert np.allclose(M.transform(m, "eta", zp), psi / (1 + psi), rtol=1e-12, atol=1e-15)


def test_eta_large_argument_matches_definition():
    m = M.marchenko_pastur(0.3, 1.0)
    z = -1938.6 + 3.76j
    e = M.transform(m, "eta", z)
    assert abs(e - (1 - z / M.transform(m, "G", 1 / z))) < 1e-12 * abs(e)
    # quantile discretisation as a rough independent check
    t = M.quantiles(m, 200_000)
    psi = np.mean(t * z / (1 - t * z))
    assert abs(e - psi / (1 + psi)) / abs(e) < 1e-3


def test_on_support_error():
    with pytest.raises(EvaluationOnSupportError):
        M.transform(M.semicircle(0, 1), "G", 1.0)
    with pytest.raises(EvaluationOnSupportError):
        M.transform(M.two_atom(1, 2, 0.5, carrier="positive"), "psi", 0.5)


def test_support_radius_examples():
    assert M.support_radius(M.semicircle(0, 1)) == 2
    assert M.support_radius(M.two_atom(-1, 1, 0.5)) == 1
    s = np.sort(np.concatenate([np.linspace(-0.98, 0.97, 50)]))
    assert M.support_radius(M.empirical(s)) == pytest.approx(0.98, abs=0)


def test_support_radius_circle_returns_gaps():
    gaps = M.support_radius(M.circle_atomic([0.0, np.pi / 2], [0.5, 0.5]))
    lengths = sorted(b - a for a, b in gaps)
    assert lengths == pytest.approx([np.pi / 2, 3 * np.pi / 2])


def test_zG_tends_to_one():
    for m in (M.semicircle(1, 2), M.arcsine(0, 3), M.marchenko_pastur(2.0, 1.0),
              M.two_atom(-1, 4, 0.2)):
        z = 1e8 * (1 + 1j)
        assert abs(z * M.transform(m, "G", z) - 1) < 1e-6


def test_quantiles_two_atom():
    q = M.quantiles(M.two_atom(-1, 1, 0.5), 10)
    assert list(q) == [-1.0] * 5 + [1.0] * 5


def test_quantiles_continuous_match_cdf():
    m = M.semicircle(0, 1)
    q = M.quantiles(m, 8)
    for i, x in enumerate(q):
        cdf, _ = integrate.quad(lambda t: math.sqrt(4 - t * t) / (2 * math.pi), -2, x)
        assert abs(cdf - (i + 0.5) / 8) < 1e-8


def test_density_integrates_to_one():
    for m in (M.semicircle(0.5, 3.0), M.marchenko_pastur(0.5, 2.0)):
        (a, b), = m.intervals
        mass, _ = integrate.quad(lambda t: M.density(m, np.array([t]))[0], a, b, limit=200)
        assert abs(mass - 1) < 1e-8
