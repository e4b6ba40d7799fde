"""Exact orthogonal polynomials, wave functions and kernels at finite N.

Everything here is computed to a configurable number of decimal digits
with mpmath: the weight exp(-N*V) spans hundreds of orders of magnitude
and the Stieltjes inner products cancel catastrophically in double
precision.  Monic polynomial values and norms are ordinary mpf numbers,
whose unbounded exponent plays the role of a (sign, log-magnitude)
representation.

The recurrence table produced here is the ground truth against which the
large-N asymptotic formulas are validated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from mpmath import mp
from mpmath.calculus.quadrature import GaussLegendre

from .potential import Potential


def default_precision(N: int) -> int:
    return max(30, 2 * N)


class PrecisionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Fixed rule for integrals against the measure exp(-N*V(x)) dx.

    ``weights`` already include the weight function, so
    integral(f) = sum_i weights[i] * f(nodes[i]).
    """

    nodes: tuple
    weights: tuple
    domain: tuple
    target_error: float
    dps: int
    deg_validated: int = 0

    def integrate(self, f) -> "mp.mpf":
        with mp.workdps(self.dps):
            return mp.fsum(w * f(x) for x, w in zip(self.nodes, self.weights))

    def integrate_values(self, values) -> "mp.mpf":
        with mp.workdps(self.dps):
            return mp.fsum(w * v for w, v in zip(self.weights, values))


@dataclass(frozen=True)
class RecurrenceTable:
    """Three-term recurrence data: p_{n+1} = (x - a_n) p_n - b_n p_{n-1}.

    b_n = h_n / h_{n-1} for n >= 1; h_n are the squared norms
    int p_n^2 exp(-N V).  All entries are mpf.
    """

    a_n: tuple
    b_n: tuple
    h_n: tuple
    n_max: int
    dps: int
    domain: tuple

    def log_h(self, n: int) -> float:
        with mp.workdps(self.dps):
            return float(mp.log(self.h_n[n]))


@dataclass(frozen=True)
class WaveSample:
    n: int
    xi: float
    psi: float
    p_value: float
    log_abs_p: float
    sign_p: int


def truncation_domain(pot: Potential, N: int, precision: int) -> tuple:
    """Interval outside which N*(V - min V) exceeds the representable range."""
    crit = np.roots(np.array(pot.deriv_coeffs[::-1], dtype=float))
    real_crit = [float(r.real) for r in crit if abs(r.imag) < 1e-9]
    vmin = min(pot.eval(x) for x in real_crit) if real_crit else pot.eval(0.0)
    thresh = (precision + 10) * math.log(10.0) / N
    lo = min(real_crit) if real_crit else 0.0
    hi = max(real_crit) if real_crit else 0.0
    step = max(1.0, (hi - lo) / 4)
    while pot.eval(hi) - vmin < thresh:
        hi += step
    while pot.eval(lo) - vmin < thresh:
        lo -= step
    # bisect the exact crossings for a tight domain
    a, b = hi - step, hi
    for _ in range(80):
        m = 0.5 * (a + b)
        if pot.eval(m) - vmin < thresh:
            a = m
        else:
            b = m
    hi = b
    a, b = lo, lo + step
    for _ in range(80):
        m = 0.5 * (a + b)
        if pot.eval(m) - vmin < thresh:
            b = m
        else:
            a = m
    lo = a
    return (lo, hi)


def _panel_edges(lo: float, hi: float, count: int) -> list:
    return [lo + (hi - lo) * i / count for i in range(count + 1)]


def build_weight_quadrature(pot: Potential, N: int, deg_needed: int,
                            precision: int | None = None) -> QuadratureRule:
    """Composite Gauss-Legendre rule for x^k exp(-N V(x)), k <= deg_needed.

    Panels of the truncated domain are refined until two successive node
    budgets agree to the target relative error on a set of monomial test
    integrands.  Raises PrecisionError if the budget cap is hit.
    """
    if precision is None:
        precision = default_precision(N)
    dps = precision + 10
    target = mp.mpf(10) ** (-(precision - 5))
    lo, hi = truncation_domain(pot, N, precision)
    panels = max(6, int(math.ceil((precision + 10) * math.log(10.0) / 20.0)),
                 deg_needed // 12)
    test_ks = sorted({0, 1, 2, deg_needed // 2, deg_needed})

    def build(degree: int):
        with mp.workdps(dps):
            gl = GaussLegendre(mp)
            base = gl.calc_nodes(degree, mp.prec)
            nodes, weights = [], []
            edges = _panel_edges(lo, hi, panels)
            for a, b in zip(edges[:-1], edges[1:]):
                for x, w in gl.transform_nodes(base, mp.mpf(a), mp.mpf(b)):
                    nodes.append(x)
                    weights.append(w * mp.e ** (-N * pot.eval(x)))
            return nodes, weights

    def moments(nodes, weights):
        with mp.workdps(dps):
            out = []
            for k in test_ks:
                out.append((mp.fsum(w * x ** k for x, w in zip(nodes, weights)),
                            mp.fsum(w * abs(x) ** k for x, w in zip(nodes, weights))))
            return out

    prev = None
    with mp.workdps(dps):
        for degree in range(5, 10):
            nodes, weights = build(degree)
            mom = moments(nodes, weights)
            if prev is not None:
                ok = all(abs(m1 - m0) <= target * max(abs(m1), sc)
                         for (m0, _), (m1, sc) in zip(prev, mom))
                if ok:
                    return QuadratureRule(tuple(nodes), tuple(weights),
                                          (lo, hi), float(target), dps,
                                          deg_validated=deg_needed)
            prev = mom
    raise PrecisionError(
        f"quadrature did not reach relative error {float(target):.1e} "
        f"within the node budget (precision={precision}, N={N})")


def compute_recurrence(rule: QuadratureRule, pot: Potential, N: int,
                       n_max: int, ortho_tol: float | None = None) -> RecurrenceTable:
    """Stieltjes procedure: recurrence coefficients from iterated inner products.

    Raises PrecisionError (with the failing index) when positivity of the
    norms is lost or when the near-diagonal orthogonality residuals exceed
    the precision budget, both symptoms of an insufficient working
    precision or quadrature degree.
    """
    if rule.deg_validated and 2 * n_max + 2 > rule.deg_validated:
        raise PrecisionError(
            f"rule validated only to degree {rule.deg_validated}, need "
            f"{2 * n_max + 2} for n_max={n_max}")
    with mp.workdps(rule.dps):
        if ortho_tol is None:
            ortho_tol = float(mp.mpf(10) ** (-(rule.dps - 10 - 8)))
        xs = list(rule.nodes)
        ws = list(rule.weights)
        m = len(xs)
        p_prev = [mp.mpf(0)] * m
        p_cur = [mp.mpf(1)] * m
        h = [mp.fsum(ws)]
        a = [mp.fsum(w * x for w, x in zip(ws, xs)) / h[0]]
        b = [mp.mpf(0)]
        for n in range(n_max):
            an, bn = a[n], b[n]
            p_next = [ (x - an) * pc - bn * pp
                       for x, pc, pp in zip(xs, p_cur, p_prev) ]
            hn1 = mp.fsum(w * p * p for w, p in zip(ws, p_next))
            if hn1 <= 0:
                raise PrecisionError(
                    f"lost positivity at n={n + 1}: h={mp.nstr(hn1, 5)}; "
                    "increase working precision")
            ip1 = mp.fsum(w * p * q for w, p, q in zip(ws, p_next, p_cur))
            ip1 = abs(ip1) / mp.sqrt(hn1 * h[n])
            ip2 = abs(mp.fsum(w * p * q for w, p, q in zip(ws, p_next, p_prev)))
            ip2 = ip2 / mp.sqrt(hn1 * h[n - 1]) if n >= 1 else mp.mpf(0)
            if max(ip1, ip2) > ortho_tol:
                raise PrecisionError(
                    f"orthogonality residual {mp.nstr(max(ip1, ip2), 3)} at "
                    f"n={n + 1} exceeds {ortho_tol:.1e}; increase working "
                    "precision or quadrature degree")
            h.append(hn1)
            b.append(hn1 / h[n])
            a.append(mp.fsum(w * x * p * p for w, x, p in zip(ws, xs, p_next)) / hn1)
            p_prev, p_cur = p_cur, p_next
        return RecurrenceTable(tuple(a), tuple(b[1:]), tuple(h), n_max,
                               rule.dps, rule.domain)


def monic_value(table: RecurrenceTable, n: int, xi) -> "mp.mpf":
    """p_n(xi) by forward recurrence, in the table's working precision."""
    if n > table.n_max:
        raise IndexError(f"n={n} beyond table n_max={table.n_max}")
    with mp.workdps(table.dps):
        x = mp.mpf(xi) if not isinstance(xi, mp.mpf) else xi
        p_prev, p_cur = mp.mpf(0), mp.mpf(1)
        for k in range(n):
            bk = table.b_n[k - 1] if k >= 1 else mp.mpf(0)
            p_prev, p_cur = p_cur, (x - table.a_n[k]) * p_cur - bk * p_prev
        return p_cur


def _monic_and_derivative(table: RecurrenceTable, n: int, x):
    with mp.workdps(table.dps):
        p_prev, p_cur = mp.mpf(0), mp.mpf(1)
        d_prev, d_cur = mp.mpf(0), mp.mpf(0)
        for k in range(n):
            bk = table.b_n[k - 1] if k >= 1 else mp.mpf(0)
            p_prev, p_cur = p_cur, (x - table.a_n[k]) * p_cur - bk * p_prev
            d_prev, d_cur = d_cur, p_prev + (x - table.a_n[k]) * d_cur - bk * d_prev
        return p_cur, d_cur


def eval_wave(table: RecurrenceTable, pot: Potential, N: int, n: int,
              xi: float) -> WaveSample:
    """psi_n(xi) = p_n(xi) exp(-N V(xi)/2) / sqrt(h_n)."""
    with mp.workdps(table.dps):
        p = monic_value(table, n, xi)
        psi = p * mp.e ** (-mp.mpf(N) * pot.eval(mp.mpf(xi)) / 2) / mp.sqrt(table.h_n[n])
        sign = 0 if p == 0 else (1 if p > 0 else -1)
        log_abs = float(mp.log(abs(p))) if p != 0 else float("-inf")
        return WaveSample(n=n, xi=float(xi), psi=float(psi),
                          p_value=float(p), log_abs_p=log_abs, sign_p=sign)


def psi_value(table: RecurrenceTable, pot: Potential, N: int, n: int, x) -> "mp.mpf":
    with mp.workdps(table.dps):
        xm = mp.mpf(x) if not isinstance(x, mp.mpf) else x
        p = monic_value(table, n, xm)
        return p * mp.e ** (-mp.mpf(N) * pot.eval(xm) / 2) / mp.sqrt(table.h_n[n])


def _psi_and_derivative(table, pot, N, n, x):
    with mp.workdps(table.dps):
        xm = mp.mpf(x)
        p, dp = _monic_and_derivative(table, n, xm)
        w = mp.e ** (-mp.mpf(N) * pot.eval(xm) / 2) / mp.sqrt(table.h_n[n])
        psi = p * w
        dpsi = (dp - mp.mpf(N) / 2 * pot.deriv(xm) * p) * w
        return psi, dpsi


def kernel_cd(table: RecurrenceTable, pot: Potential, N: int,
              x: float, y: float) -> float:
    """Christoffel-Darboux form of K(x,y) = sum_{n<N} psi_n(x) psi_n(y).

    The prefactor sqrt(h_N/h_{N-1}) is fixed by requiring equality with
    the direct sum (checked in the test suite, not assumed).  The
    confluent branch takes over below a width-relative threshold in
    |x - y|.
    """
    if N > table.n_max:
        raise IndexError(f"kernel needs index N={N} <= n_max={table.n_max}")
    with mp.workdps(table.dps):
        width = table.domain[1] - table.domain[0]
        gamma = mp.sqrt(table.h_n[N] / table.h_n[N - 1])
        if abs(x - y) < 1e-10 * width:
            xm = mp.mpf(0.5) * (mp.mpf(x) + mp.mpf(y))
            pN, dN = _psi_and_derivative(table, pot, N, N, xm)
            pM, dM = _psi_and_derivative(table, pot, N, N - 1, xm)
            return float(gamma * (dN * pM - pN * dM))
        psiN_x = psi_value(table, pot, N, N, x)
        psiN_y = psi_value(table, pot, N, N, y)
        psiM_x = psi_value(table, pot, N, N - 1, x)
        psiM_y = psi_value(table, pot, N, N - 1, y)
        return float(gamma * (psiN_x * psiM_y - psiN_y * psiM_x) / (mp.mpf(x) - mp.mpf(y)))


def kernel_direct(table: RecurrenceTable, pot: Potential, N: int,
                  x: float, y: float) -> float:
    """Direct-sum definition of the kernel; oracle for kernel_cd."""
    with mp.workdps(table.dps):
        acc = mp.fsum(psi_value(table, pot, N, n, x) * psi_value(table, pot, N, n, y)
                      for n in range(N))
        return float(acc)


def correlation(table: RecurrenceTable, pot: Potential, N: int,
                points) -> float:
    """k-point correlation det(K(x_i, x_j)) over the given points."""
    pts = list(points)
    if not 1 <= len(pts) <= N:
        raise ValueError(f"need 1 <= #points <= N (got {len(pts)})")
    k = len(pts)
    mat = np.empty((k, k), dtype=float)
    for i in range(k):
        for j in range(k):
            mat[i, j] = kernel_cd(table, pot, N, pts[i], pts[j])
    return float(np.linalg.det(mat))


def log_partition(table: RecurrenceTable, N: int) -> float:
    """ln Z_N = ln N! + sum_{n<N} ln h_n."""
    if N - 1 > table.n_max:
        raise IndexError("table does not cover indices 0..N-1")
    with mp.workdps(table.dps):
        return float(mp.fsum(mp.log(table.h_n[n]) for n in range(N))
                     + mp.log(mp.factorial(N)))


# ---------------------------------------------------------------------------
# small-n tensor-quadrature oracles (independent of the Stieltjes machinery)

def _float_rule(pot: Potential, N: int, nodes_per_panel: int = 48):
    lo, hi = truncation_domain(pot, N, 16)
    xs, ws = np.polynomial.legendre.leggauss(nodes_per_panel)
    panels = 8
    edges = np.linspace(lo, hi, panels + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x = 0.5 * (b - a) * xs + 0.5 * (a + b)
        w = 0.5 * (b - a) * ws * np.exp(-N * np.polyval(pot.coeffs[::-1], x))
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _vandermonde_sq(grids):
    n = len(grids)
    out = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            out = out * (grids[i] - grids[j]) ** 2
    return out


def heine_oracle(pot: Potential, N: int, n: int, xi: float) -> float:
    """<prod_i (xi - x_i)> over the n-eigenvalue gas, by tensor quadrature.

    Equals the monic p_n(xi) (Heine); only feasible for n <= 4.
    """
    if n == 0:
        return 1.0
    if n > 4:
        raise ValueError("heine_oracle: direct quadrature only supported for n <= 4")
    x, w = _float_rule(pot, N)
    m = len(x)
    num = 0.0
    den = 0.0
    if n == 1:
        den = float(np.sum(w))
        num = float(np.sum(w * (xi - x)))
        return num / den
    # chunk over the first axis to bound memory for n in {3, 4}
    shape_rest = [1] * (n - 1)
    grids_rest = []
    for axis in range(1, n):
        sh = [1] * n
        sh[axis] = m
        grids_rest.append(x.reshape(sh))
    w_rest = 1.0
    for axis in range(1, n):
        sh = [1] * n
        sh[axis] = m
        w_rest = w_rest * w.reshape(sh)
    for i in range(m):
        g0 = np.full([1] * n, x[i])
        grids = [g0] + grids_rest
        van = _vandermonde_sq(grids)
        wt = w[i] * w_rest
        fac = np.ones([1] * n)
        for g in grids:
            fac = fac * (xi - g)
        num += float(np.sum(wt * van * fac))
        den += float(np.sum(wt * van))
    return num / den


def partition_quadrature(pot: Potential, N: int) -> float:
    """ln of the N-fold eigenvalue integral, by direct tensor quadrature.

    Oracle for log_partition; feasible for N <= 3.
    """
    if N > 3:
        raise ValueError("partition_quadrature only supported for N <= 3")
    x, w = _float_rule(pot, N)
    m = len(x)
    if N == 1:
        return math.log(float(np.sum(w)))
    if N == 2:
        xi, xj = x.reshape(m, 1), x.reshape(1, m)
        wi, wj = w.reshape(m, 1), w.reshape(1, m)
        val = np.sum(wi * wj * (xi - xj) ** 2)
        return math.log(float(val))
    x1 = x.reshape(m, 1, 1)
    x2 = x.reshape(1, m, 1)
    x3 = x.reshape(1, 1, m)
    w23 = w.reshape(1, m, 1) * w.reshape(1, 1, m)
    acc = 0.0
    for i in range(m):
        van = ((x[i] - x2) * (x[i] - x3) * (x2 - x3)) ** 2
        acc += w[i] * float(np.sum(w23 * van))
    return math.log(acc)
