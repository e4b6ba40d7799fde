import pytest

from opasym import equilibrium as eq
from opasym import exact
from opasym.potential import Potential

GAUSS = Potential((0.0, 0.0, 0.5))                 # V = x^2/2
QUARTIC_ONE_CUT = Potential((0.0, 0.0, 0.5, 0.0, 0.25))   # V = x^4/4 + x^2/2
QUARTIC_TWO_CUT = Potential((0.0, 0.0, -2.0, 0.0, 0.25))  # V = x^4/4 - 2 x^2


@pytest.fixture(scope="session")
def gauss_pot():
    return GAUSS


@pytest.fixture(scope="session")
def quartic1_pot():
    return QUARTIC_ONE_CUT


@pytest.fixture(scope="session")
def quartic2_pot():
    return QUARTIC_TWO_CUT


@pytest.fixture(scope="session")
def table_factory():
    """Session-cached recurrence tables keyed by (coeffs, N, n_max, precision)."""
    cache = {}

    def build(pot, N, n_max=None, precision=None):
        if n_max is None:
            n_max = N + 2
        if precision is None:
            precision = max(30, N)
        key = (pot.coeffs, N, n_max, precision)
        if key not in cache:
            rule = exact.build_weight_quadrature(
                pot, N, deg_needed=2 * n_max + 2, precision=precision)
            cache[key] = (rule, exact.compute_recurrence(rule, pot, N, n_max))
        return cache[key]

    return build


@pytest.fixture(scope="session")
def gauss_measure():
    return eq.solve_one_cut(GAUSS, 1.0)


@pytest.fixture(scope="session")
def quartic2_measure():
    return eq.solve_multi_cut(QUARTIC_TWO_CUT, 1.0, 2, (0.5, 0.5))
