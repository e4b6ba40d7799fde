import math

import numpy as np
import pytest

from opasym import equilibrium as eq
from opasym import exact, genus0


@pytest.fixture(scope="module")
def jmap(gauss_measure):
    return genus0.JoukowskiMap.from_measure(gauss_measure)


def test_map_to_p_examples(jmap):
    assert genus0.map_to_p(jmap, 2.5) == pytest.approx(2.0, abs=1e-12)
    p0 = genus0.map_to_p(jmap, 0.0)
    assert p0 == pytest.approx(1j, abs=1e-12)
    pb = genus0.map_to_p(jmap, 2.0)
    assert pb == pytest.approx(1.0, abs=1e-6)


def test_map_roundtrip_random(jmap):
    rng = np.random.default_rng(7)
    for _ in range(100):
        xi = complex(rng.uniform(-6, 6), rng.uniform(-3, 3))
        if abs(xi.imag) < 1e-3 and -2.2 < xi.real < 2.2:
            continue
        p = genus0.map_to_p(jmap, xi)
        assert abs(jmap.x(p) - xi) < 1e-12 * max(1.0, abs(xi))
        assert abs(p) >= 1.0 - 1e-12


def test_sheet_involution(jmap):
    for xi in (2.7, -3.3, 1.0 + 1.0j):
        p = genus0.map_to_p(jmap, xi)
        assert abs(jmap.x(1.0 / p) - xi) < 1e-12 * max(1.0, abs(xi))


def test_lambda_h_values(jmap):
    lam, h = genus0.lambda_h_genus0(jmap, 2.0)
    assert lam == pytest.approx(2.0)
    assert h == pytest.approx(4.0 / 3.0)
    for p in (1.7, -2.4, 0.3 + 1.2j):
        lam, h = genus0.lambda_h_genus0(jmap, p)
        assert lam == pytest.approx(jmap.gamma * p)
        assert h * (1.0 - 1.0 / (p * p)) == pytest.approx(1.0)
        # H = gamma / x'(p)
        assert h == pytest.approx(jmap.gamma / jmap.dx_dp(p))


def test_outside_prediction_accuracy(table_factory, gauss_measure, gauss_pot, jmap):
    N = 30
    _, table = table_factory(gauss_pot, N)
    pred = genus0.asym_outside(gauss_measure, gauss_pot, jmap, N, N, 2.5)
    psi = exact.eval_wave(table, gauss_pot, N, N, 2.5).psi
    assert 0.9 <= pred.psi_pred / psi <= 1.1


def test_outside_ratio_is_gamma_p(table_factory, gauss_measure, gauss_pot, jmap):
    N = 30
    _, table = table_factory(gauss_pot, N)
    xi = 2.5
    pred_hi = genus0.asym_outside(gauss_measure, gauss_pot, jmap, N, N, xi)
    pred_lo = genus0.asym_outside(gauss_measure, gauss_pot, jmap, N - 1, N, xi)
    p = genus0.map_to_p(jmap, xi)
    assert pred_hi.psi_pred / pred_lo.psi_pred == pytest.approx(
        (jmap.gamma * p).real, rel=1e-12)
    exact_ratio = (exact.eval_wave(table, gauss_pot, N, N, xi).psi
                   / exact.eval_wave(table, gauss_pot, N, N - 1, xi).psi)
    assert abs(exact_ratio - jmap.gamma * p) <= 2.0 / N


def test_prediction_growth_matches_monic_scale(gauss_measure, gauss_pot, jmap):
    # log-derivative of the prediction in n approaches ln(gamma p) ~ ln xi
    N = 20
    xi = 8.0
    hi = genus0.asym_outside(gauss_measure, gauss_pot, jmap, N, N, xi)
    lo = genus0.asym_outside(gauss_measure, gauss_pot, jmap, N - 1, N, xi)
    dlog = math.log(hi.psi_pred / lo.psi_pred)
    assert dlog == pytest.approx(math.log(xi), rel=0.05)


def test_bulk_zero_spacing(gauss_measure, gauss_pot):
    N = 30
    zeros = genus0.predicted_bulk_zeros(gauss_measure, gauss_pot, N, N, -0.4, 0.4)
    rho0 = eq.density(gauss_measure, 0.0)
    expect = 1.0 / (N * rho0)
    gaps = np.diff(zeros)
    assert np.all(np.abs(gaps - expect) < 0.1 * expect)


def test_bulk_parity_at_center(gauss_measure, gauss_pot, table_factory):
    # the prediction must reproduce the (-1)^N parity of psi_N at the
    # symmetric point: even N -> even function, nonzero at 0
    for N in (8, 9):
        _, table = table_factory(gauss_pot, N)
        pr = genus0.asym_bulk(gauss_measure, gauss_pot,
                              genus0.JoukowskiMap.from_measure(gauss_measure),
                              N, N, 1e-9)
        psi = exact.eval_wave(table, gauss_pot, N, N, 1e-9).psi
        if N % 2 == 1:
            assert abs(psi) < 1e-6
            assert abs(pr.psi_pred) < 1e-4 * pr.envelope
        else:
            assert math.copysign(1, pr.psi_pred) == math.copysign(1, psi)


def test_bulk_pointwise_accuracy(table_factory, gauss_measure, gauss_pot):
    N = 30
    _, table = table_factory(gauss_pot, N)
    for xi in (-1.2, -0.3, 0.45, 1.4):
        pr = genus0.predict(gauss_measure, gauss_pot, N, N, xi)
        psi = exact.eval_wave(table, gauss_pot, N, N, xi).psi
        assert abs(pr.psi_pred - psi) < 0.05 * pr.envelope


def test_bulk_zero_locations_vs_exact(table_factory, gauss_measure, gauss_pot):
    N = 30
    _, table = table_factory(gauss_pot, N)
    delta = genus0.default_edge_delta(N, gauss_measure)
    lo, hi = -2 + delta, 2 - delta
    pred = genus0.predicted_bulk_zeros(gauss_measure, gauss_pot, N, N, lo, hi)
    # exact zeros by sign scan + bisection of psi_N
    xs = np.linspace(lo, hi, 1200)
    vals = [exact.eval_wave(table, gauss_pot, N, N, float(x)).psi for x in xs]
    exact_zeros = []
    for x0, x1, v0, v1 in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if (v0 < 0) != (v1 < 0):
            a, b = float(x0), float(x1)
            fa = v0
            for _ in range(50):
                m = 0.5 * (a + b)
                fm = exact.eval_wave(table, gauss_pot, N, N, m).psi
                if (fm < 0) == (fa < 0):
                    a, fa = m, fm
                else:
                    b = m
            exact_zeros.append(0.5 * (a + b))
    assert abs(len(pred) - len(exact_zeros)) <= 1
    spacing = np.mean(np.diff(exact_zeros))
    for pz, ez in zip(pred, exact_zeros):
        assert abs(pz - ez) < 0.2 * spacing


def test_calibration_constants(table_factory, gauss_pot):
    N = 40
    _, table = table_factory(gauss_pot, N, precision=40)
    c, alpha = genus0.calibrate_bulk_constants(table, gauss_pot, N)
    assert abs(c - genus0.BULK_ENVELOPE_CONST) < 0.1
    assert abs(alpha - genus0.BULK_PHASE_ALPHA) < 0.1


def test_regime_mismatch_raises(gauss_measure, gauss_pot, jmap):
    with pytest.raises(ValueError):
        genus0.asym_outside(gauss_measure, gauss_pot, jmap, 10, 10, 0.5)
    with pytest.raises(ValueError):
        genus0.asym_bulk(gauss_measure, gauss_pot, jmap, 10, 10, 2.5)


def test_edge_hard_core_gives_nan(gauss_measure, gauss_pot):
    pr = genus0.predict(gauss_measure, gauss_pot, 10, 10, 2.0)
    assert pr.regime.kind == "excluded_edge"
    assert math.isnan(pr.psi_pred)
