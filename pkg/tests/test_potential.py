import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opasym.potential import (ConfigError, Potential, RunConfig, parse_config,
                              serialize_config)


def test_eval_examples():
    assert Potential((0, 0, 0.5)).eval(2.0) == 2.0
    assert Potential((0, 0, -2.0, 0, 0.25)).eval(1.0) == -1.75
    assert Potential((0, 0, 0.5)).eval(0.0) == 0.0


def test_deriv_examples():
    assert Potential((0, 0, 0.5)).deriv(3.0) == 3.0
    assert Potential((0, 0, -2.0, 0, 0.25)).deriv(1.0) == pytest.approx(-3.0)


def test_deriv_central_difference():
    pot = Potential((0.3, -1.0, 0.5, 0.0, 0.25))
    x, h = 0.7, 1e-5
    fd = (pot.eval(x + h) - pot.eval(x - h)) / (2 * h)
    assert abs(fd - pot.deriv(x)) < 1e-8


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=7),
       st.floats(-2, 2, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_deriv_matches_fd_property(low_coeffs, x):
    coeffs = low_coeffs[:-1] + [abs(low_coeffs[-1]) + 0.5]
    if (len(coeffs) - 1) % 2 == 1:
        coeffs.append(1.0)
    pot = Potential(tuple(coeffs))
    h = 1e-6 * max(1.0, abs(x))
    fd = (pot.eval(x + h) - pot.eval(x - h)) / (2 * h)
    scale = max(1.0, abs(pot.deriv(x)))
    assert abs(fd - pot.deriv(x)) / scale < 1e-7


def test_complex_evaluation():
    pot = Potential((0, 0, 0.5))
    z = 1.0 + 2.0j
    assert pot.eval(z) == 0.5 * z * z


def test_parse_gaussian():
    pot, cfg = parse_config(json.dumps(
        {"V": [0, 0, 0.5], "N": 20, "grid": [0.0, 1.0]}))
    assert pot.degree == 2
    assert cfg.N == 20
    assert cfg.n_values == (19, 20)
    assert cfg.T == 1.0


def test_parse_implicit_degree_two():
    pot, _ = parse_config(json.dumps({"V": [0, 0, 1], "N": 3, "grid": [0.5]}))
    assert pot.degree == 2


def test_parse_odd_degree_rejected():
    with pytest.raises(ConfigError, match="non-integrable"):
        parse_config(json.dumps({"V": [0, 0, 0, 1], "N": 3, "grid": [0.5]}))


def test_parse_negative_leading_rejected():
    with pytest.raises(ConfigError, match="non-integrable"):
        parse_config(json.dumps({"V": [0, 0, -1.0], "N": 3, "grid": [0.5]}))


def test_parse_empty_grid_rejected():
    with pytest.raises(ConfigError, match="grid"):
        parse_config(json.dumps({"V": [0, 0, 1.0], "N": 3, "grid": []}))


def test_parse_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config(json.dumps({"V": [0, 0, 1], "N": 3, "grid": [0.5], "bogus": 1}))


def test_error_reports_field_path():
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps({"V": [0, 0, 1], "N": 3,
                                 "grid": {"min": 0, "max": 1}}))
    assert "grid.count" in str(err.value)


def test_grid_expansion():
    _, cfg = parse_config(json.dumps(
        {"V": [0, 0, 1], "N": 2, "grid": {"min": -1.0, "max": 1.0, "count": 5}}))
    assert cfg.grid == (-1.0, -0.5, 0.0, 0.5, 1.0)


def test_roundtrip_bit_exact():
    doc = {"V": [0.1, 0.0, 0.5], "N": 7, "grid": [0.25, 0.5, 1.1],
           "T": 1.25, "precision_digits": 22, "seed": 9,
           "edge_exclusion_delta": 0.125, "cuts_hint": 2,
           "n_values": [6, 7]}
    pot, cfg = parse_config(json.dumps(doc))
    text = serialize_config(pot, cfg)
    pot2, cfg2 = parse_config(text)
    assert pot2.coeffs == pot.coeffs
    assert cfg2 == cfg
    assert serialize_config(pot2, cfg2) == text


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=4),
       st.integers(1, 50))
@settings(max_examples=40, deadline=None)
def test_roundtrip_property(vals, n):
    coeffs = list(vals) + [1.0]
    if (len(coeffs) - 1) % 2 == 1:
        coeffs.append(2.0)
    pot = Potential(tuple(coeffs))
    cfg = RunConfig(N=n, grid=(0.5, 1.5), precision=20)
    text = serialize_config(pot, cfg)
    pot2, cfg2 = parse_config(text)
    assert pot2.coeffs == pot.coeffs
    assert cfg2.N == cfg.N


def test_runconfig_invariants():
    with pytest.raises(ConfigError):
        RunConfig(N=0, grid=(0.5,))
    with pytest.raises(ConfigError):
        RunConfig(N=3, grid=(0.5,), precision=10)
    with pytest.raises(ConfigError):
        RunConfig(N=3, grid=())
    with pytest.raises(ConfigError):
        RunConfig(N=3, grid=(0.5,), edge_exclusion_delta=-1.0)


def test_degree_too_low_rejected():
    with pytest.raises(ConfigError):
        Potential((1.0, 2.0))
