import cmath
import math

import numpy as np
import pytest
from scipy.integrate import quad

from opasym import equilibrium as eq
from opasym.potential import Potential


def test_gaussian_one_cut(gauss_measure):
    (a, b), = gauss_measure.cuts.cuts
    assert a == pytest.approx(-2.0, abs=1e-10)
    assert b == pytest.approx(2.0, abs=1e-10)
    assert len(gauss_measure.M_coeffs) == 1
    assert gauss_measure.M_coeffs[0] == pytest.approx(1.0, abs=1e-10)
    assert (b - a) / 4 == pytest.approx(1.0, abs=1e-10)


def test_gaussian_density_is_semicircle(gauss_measure):
    for x in (-1.5, 0.0, 0.3, 1.9):
        assert eq.density(gauss_measure, x) == pytest.approx(
            math.sqrt(4 - x * x) / (2 * math.pi), abs=1e-12)
    assert eq.density(gauss_measure, 2.5) == 0.0


def test_one_cut_rejects_two_cut_potential(quartic2_pot):
    with pytest.raises(eq.NegativeDensityError):
        eq.solve_one_cut(quartic2_pot, 1.0)


def test_two_cut_quartic_endpoints(quartic2_measure):
    (a1, b1), (a2, b2) = quartic2_measure.cuts.cuts
    assert a1 == pytest.approx(-math.sqrt(6), abs=1e-8)
    assert b1 == pytest.approx(-math.sqrt(2), abs=1e-8)
    assert a2 == pytest.approx(math.sqrt(2), abs=1e-8)
    assert b2 == pytest.approx(math.sqrt(6), abs=1e-8)
    # M(x) = x
    assert quartic2_measure.M_coeffs[0] == pytest.approx(0.0, abs=1e-8)
    assert quartic2_measure.M_coeffs[1] == pytest.approx(1.0, abs=1e-8)


def test_two_cut_symmetry(quartic2_measure):
    pts = quartic2_measure.cuts.endpoints
    assert pts[0] == pytest.approx(-pts[3], abs=1e-10)
    assert pts[1] == pytest.approx(-pts[2], abs=1e-10)
    assert quartic2_measure.fillings[0] == pytest.approx(0.5, abs=1e-10)


def test_total_mass(quartic2_measure, gauss_measure):
    for meas in (gauss_measure, quartic2_measure):
        total, _ = quad(lambda x: eq.density(meas, x),
                        meas.cuts.cuts[0][0] - 0.1, meas.cuts.cuts[-1][1] + 0.1,
                        limit=200)
        assert total == pytest.approx(meas.T, abs=1e-8)


def test_resolvent_closed_form(gauss_measure, gauss_pot):
    w = eq.resolvent(gauss_measure, gauss_pot, 10.0)
    assert w.real == pytest.approx((10 - math.sqrt(96)) / 2, abs=1e-12)
    assert abs(w.imag) < 1e-14


def test_resolvent_large_x(gauss_measure, gauss_pot, quartic2_measure, quartic2_pot):
    for meas, pot in [(gauss_measure, gauss_pot), (quartic2_measure, quartic2_pot)]:
        w = eq.resolvent(meas, pot, 1e4)
        assert abs(1e4 * w - meas.T) < 1e-6


def test_resolvent_schwarz_symmetry(quartic2_measure, quartic2_pot):
    z = 1.3 + 0.8j
    w = eq.resolvent(quartic2_measure, quartic2_pot, z)
    wc = eq.resolvent(quartic2_measure, quartic2_pot, z.conjugate())
    assert wc == pytest.approx(w.conjugate(), rel=1e-12)


def test_saddle_residuals(gauss_measure, gauss_pot, quartic2_measure, quartic2_pot):
    assert eq.saddle_residual(gauss_measure, gauss_pot, 0.5) < 1e-12
    assert eq.saddle_residual(quartic2_measure, quartic2_pot, 1.7) < 1e-10
    for meas, pot in [(gauss_measure, gauss_pot), (quartic2_measure, quartic2_pot)]:
        for a, b in meas.cuts.cuts:
            pad = 0.02 * (b - a)
            for x in np.linspace(a + pad, b - pad, 20):
                assert eq.saddle_residual(meas, pot, float(x)) < 1e-10


def test_discontinuity_identity(quartic2_measure, quartic2_pot):
    """rho(x) = -(omega_+ - omega_-)/(2 pi i) pointwise (total mass T)."""
    for x in (1.6, 2.1, -1.9, -2.3):
        wp = eq.resolvent(quartic2_measure, quartic2_pot, x, side=+1)
        wm = eq.resolvent(quartic2_measure, quartic2_pot, x, side=-1)
        jump = -(wp - wm) / (2j * math.pi)
        assert abs(jump.imag) < 1e-12
        assert jump.real == pytest.approx(
            float(eq.density(quartic2_measure, x)), abs=1e-10)


def test_resolvent_contour_residue(quartic2_measure, quartic2_pot):
    """Contour around all cuts picks up the full mass 2 pi i T."""
    R = 6.0
    n = 1024
    acc = 0j
    for k in range(n):
        th = 2 * math.pi * k / n
        z = R * cmath.exp(1j * th)
        dz = R * cmath.exp(1j * th) * 1j * (2 * math.pi / n)
        acc += eq.resolvent(quartic2_measure, quartic2_pot, z) * dz
    assert abs(acc - 2j * math.pi * quartic2_measure.T) < 1e-8


def test_multi_cut_s1_matches_one_cut(quartic1_pot):
    m1 = eq.solve_one_cut(quartic1_pot, 1.0)
    m2 = eq.solve_multi_cut(quartic1_pot, 1.0, 1, (1.0,))
    for e1, e2 in zip(m1.cuts.endpoints, m2.cuts.endpoints):
        assert e1 == pytest.approx(e2, abs=1e-10)


def test_effective_potential_flat_on_cut(gauss_measure, gauss_pot,
                                         quartic2_measure, quartic2_pot):
    for meas, pot in [(gauss_measure, gauss_pot), (quartic2_measure, quartic2_pot)]:
        for a, b in meas.cuts.cuts:
            for x in np.linspace(a + 0.05 * (b - a), b - 0.05 * (b - a), 7):
                v = eq.effective_potential(meas, pot, float(x))
                assert abs(v.real) < 1e-8


def test_effective_potential_vs_quadrature(gauss_measure, gauss_pot):
    v3 = eq.effective_potential(gauss_measure, gauss_pot, 3.0)
    v2 = eq.effective_potential(gauss_measure, gauss_pot, 2.0)
    oracle, _ = quad(lambda t: math.sqrt(t * t - 4), 2, 3)
    assert (v3 - v2).real == pytest.approx(oracle, abs=1e-10)
    assert abs(v3.imag) < 1e-10


def test_effective_potential_real_off_cuts(quartic2_measure, quartic2_pot):
    for x in (2.6, 3.5, -2.7, 0.0, 0.9):
        v = eq.effective_potential(quartic2_measure, quartic2_pot, x)
        assert abs(v.imag) < 1e-8 or abs(v.imag - round(v.imag / math.pi) * math.pi) < 1e-8
        # off the cuts the derivative M sqrt(sigma) is real, so up to the
        # 2 pi i jumps collected when the detour passes over cuts the
        # value is real; Re part must be path-independent
        v2 = eq.effective_potential(quartic2_measure, quartic2_pot, x, side=-1)
        assert v2.real == pytest.approx(v.real, abs=1e-9)


def test_gaussian_offset_is_one(gauss_measure, gauss_pot):
    assert eq.effective_potential_offset(gauss_measure, gauss_pot) == \
        pytest.approx(1.0, abs=1e-9)


def test_classify_regime(gauss_measure, gauss_pot):
    assert eq.classify_regime(gauss_measure, gauss_pot, 3.0, 1e-3).kind == "outside"
    tag = eq.classify_regime(gauss_measure, gauss_pot, 0.5, 1e-3)
    assert tag.kind == "on_cut" and tag.cut_index == 0
    assert eq.classify_regime(gauss_measure, gauss_pot, 2.0 + 1e-9, 1e-3).kind == \
        "excluded_edge"


def test_optimize_fillings_symmetric(quartic2_pot):
    meas, eps, zeta = eq.optimize_fillings(quartic2_pot, 1.0, 2)
    assert eps[0] == pytest.approx(0.5, abs=1e-9)
    assert abs(eq.b_period_W(meas, quartic2_pot, 0).real) < 1e-8
    assert all(abs(complex(z).imag) < 1e-8 for z in zeta)


def test_filling_convexity(quartic2_pot):
    """Perturbing the filling away from the optimum raises Re F: the
    gradient Re dF/deps points back toward eps*."""
    for delta in (+0.01, -0.01):
        meas = eq.solve_multi_cut(quartic2_pot, 1.0, 2, (0.5 + delta, 0.5 - delta))
        grad = -eq.b_period_W(meas, quartic2_pot, 0).real  # dF/deps_1
        assert math.copysign(1.0, grad) == math.copysign(1.0, delta)


def test_cut_merging_detected():
    # double-well potential that is actually in the one-cut phase: the
    # two requested cuts collide at the origin
    pot = Potential((0.0, 0.0, -0.8, 0.0, 0.25))
    assert eq.solve_one_cut(pot, 1.0).cuts.s == 1
    with pytest.raises(eq.CutMergingError, match="merging"):
        eq.solve_multi_cut(pot, 1.0, 2, (0.5, 0.5))


def test_extreme_fillings_still_solve(quartic2_pot):
    # heavily asymmetric fillings remain a legitimate constrained saddle
    m = eq.solve_multi_cut(quartic2_pot, 1.0, 2, (0.999, 0.001))
    assert m.cuts.s == 2
    assert m.fillings[0] == pytest.approx(0.999, abs=1e-8)


def test_charged_solve_reduces_at_h0(quartic2_pot, quartic2_measure):
    cm = eq.solve_charged(quartic2_pot, 1.0, 2, (0.5, 0.5), 3.5, 0.0)
    for e1, e2 in zip(cm.cuts.endpoints, quartic2_measure.cuts.endpoints):
        assert e1 == pytest.approx(e2, abs=1e-9)
    w0 = eq.charged_resolvent(cm, quartic2_pot, 4.0)
    w1 = eq.resolvent(quartic2_measure, quartic2_pot, 4.0)
    assert w0 == pytest.approx(w1, rel=1e-9)


def test_capacity_values(quartic2_measure):
    assert eq.capacity(eq.CutSet(((-2.0, 2.0),))) == pytest.approx(1.0, abs=1e-9)
    assert eq.capacity(eq.CutSet(((0.5, 3.0),))) == pytest.approx(0.625, abs=1e-9)
    # symmetric two-cut [-b,-a] u [a,b]: capacity = sqrt(b^2-a^2)/2
    a, b = math.sqrt(2), math.sqrt(6)
    assert eq.capacity(quartic2_measure.cuts) == pytest.approx(
        math.sqrt(b * b - a * a) / 2, abs=1e-8)


def test_density_vanishes_outside(quartic2_measure):
    xs = np.array([-3.0, 0.0, 1.0, 3.0])
    assert np.all(eq.density(quartic2_measure, xs) == 0.0)


def test_resolvent_near_branch_point_errors(gauss_measure, gauss_pot):
    with pytest.raises(eq.EquilibriumError):
        eq.resolvent(gauss_measure, gauss_pot, 2.0 + 1e-14)
