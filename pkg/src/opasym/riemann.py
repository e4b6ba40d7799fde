"""Numerical algebraic geometry on the hyperelliptic spectral curve.

Conventions (fixed once, validated by the finite-difference oracles in the
test suite rather than derived from first principles):

* sqrt(sigma) is the global branch from the equilibrium module (cuts on
  the cuts, positive on (b_s, inf)); the physical sheet carries
  y = +sqrt(sigma).
* A_i is the cycle around cut i (i = 1..g, of the s-1 leftmost cuts),
  oriented so that its period equals 2 * int_{a_i}^{b_i} f(x+i0) dx.
* B_i runs along the real axis (+i0 side) from cut i to the last cut and
  back on the second sheet: periods are 2 * int_{b_i}^{a_s} f(x+i0) dx.
* The Abel map integrates from the base point q0 = b_s along a detour
  through the upper half plane; second-sheet values are the negatives of
  physical-sheet values (the base point is a branch point).

With these choices Im(tau) is positive definite and the derivative
formulas dW/dT = -dS(infinity+, infinity-) and d2F/deps2 = -2 pi i tau
hold with the signs below.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import (CutSet, EquilibriumMeasure, _endpoint_series,
                          _gl_segment, _gl_segment_sqrtstart, _leggauss,
                          _segment_integral_inv, classify_regime,
                          cut_branch_factor, effective_potential,
                          gap_branch_factor, sqrt_sigma)
from .potential import Potential

TAIL_ORDER = 32


class ThetaError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SurfacePoint:
    """Point of the hyperelliptic curve: x-value plus sheet (+1 physical,
    -1 second); at_infinity selects one of the two points over x = inf."""

    x: complex = 0.0
    sheet: int = +1
    at_infinity: bool = False

    def __post_init__(self):
        if self.sheet not in (+1, -1):
            raise ValueError("sheet must be +1 or -1")

    @classmethod
    def infinity(cls, sheet: int) -> "SurfacePoint":
        return cls(x=0.0, sheet=sheet, at_infinity=True)


INF_PLUS = SurfacePoint.infinity(+1)
INF_MINUS = SurfacePoint.infinity(-1)


@dataclass(frozen=True)
class SpectralCurve:
    cuts: CutSet

    def __post_init__(self):
        if self.cuts.s < 2:
            raise ValueError("riemann module needs genus >= 1 (s >= 2 cuts)")

    @property
    def genus(self) -> int:
        return self.cuts.s - 1

    @property
    def branch_points(self) -> tuple:
        return self.cuts.endpoints

    def y(self, p: SurfacePoint) -> complex:
        if p.at_infinity:
            raise ValueError("y is infinite at infinity")
        return p.sheet * sqrt_sigma(self.cuts, p.x)

    @classmethod
    def from_measure(cls, meas: EquilibriumMeasure) -> "SpectralCurve":
        return cls(meas.cuts)


@dataclass(frozen=True)
class CycleDescriptors:
    """Documentation of the homology realization used by the integrals."""

    a_cycles: tuple   # (cut_index,) per A_i
    b_segments: tuple # per B_i: tuple of ("gap"|"cut", lo, hi, branch_factor)


@dataclass(frozen=True)
class PeriodData:
    curve: SpectralCurve
    holo_coeffs: np.ndarray   # C[k, j]: du_j = sum_k C[k,j] x^{k-1} dx / sqrt(sigma)
    a_periods_raw: np.ndarray # A-periods of x^{k-1} dx / sqrt(sigma)
    tau: np.ndarray
    u_inf_plus: np.ndarray    # Abel map of infinity_+ (base point b_s)

    @property
    def genus(self) -> int:
        return self.curve.genus

    @property
    def delta_u_inf(self) -> np.ndarray:
        """u(inf_+) - u(inf_-) along the canonical paths."""
        return 2.0 * self.u_inf_plus


def build_homology(curve: SpectralCurve) -> CycleDescriptors:
    """A_i circles cut i; B_i connects cut i to the last cut through the
    intervening gaps (the stretches over intermediate cuts contribute a
    full A-period, i.e. an integer, and are dropped to stay in the
    canonical symplectic basis -- certified by tau symmetry)."""
    cuts = curve.cuts
    s = cuts.s
    a_cycles = tuple(range(s - 1))
    b_all = []
    for i in range(s - 1):
        segs = []
        for j in range(i, s - 1):
            u, v = cuts.cuts[j][1], cuts.cuts[j + 1][0]
            segs.append(("gap", u, v, gap_branch_factor(cuts, j + 1)))
        b_all.append(tuple(segs))
    return CycleDescriptors(a_cycles=a_cycles, b_segments=tuple(b_all))


def _monomial(k: int):
    return lambda x: x ** k


def _cut_inv_integral(cuts: CutSet, g, i: int, n: int = 200) -> complex:
    """int over cut i of g(x)/sqrt(|sigma|) dx (angle substitution)."""
    a, b = cuts.cuts[i]
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    t, w = _leggauss(n)
    th = 0.5 * math.pi * t
    x = c + r * np.sin(th)
    rest = np.ones_like(x)
    for e in cuts.endpoints:
        if e != a and e != b:
            rest = rest * np.abs(x - e)
    vals = g(x) / np.sqrt(rest)
    return complex(np.sum(w * vals)) * 0.5 * math.pi


def holo_basis(curve: SpectralCurve) -> tuple:
    """(holo_coeffs, raw A-period matrix): normalized so that the A-period
    of du_j over cycle i equals delta_ij."""
    cuts = curve.cuts
    g = curve.genus
    P = np.empty((g, g), dtype=complex)
    for i in range(g):
        fac = 1.0 / cut_branch_factor(cuts, i)   # 1/sqrt(sigma)_+ = fac/sqrt|sigma|
        for k in range(g):
            P[i, k] = 2.0 * fac * _cut_inv_integral(cuts, _monomial(k), i)
    C = np.linalg.solve(P, np.eye(g)).astype(complex)
    return C, P


def _du_segment_value(curve: SpectralCurve, C: np.ndarray, kind: str,
                      lo: float, hi: float, factor, n: int = 200) -> np.ndarray:
    """Integral of all du_j over a real-axis segment between adjacent branch
    points, on the +i0 side of the physical sheet."""
    cuts = curve.cuts
    g = curve.genus
    out = np.zeros(g, dtype=complex)
    for k in range(g):
        val = _segment_integral_inv(cuts, _monomial(k), lo, hi, n=n)
        for j in range(g):
            out[j] += C[k, j] * val / factor
    return out


def period_matrix(curve: SpectralCurve, C: np.ndarray) -> np.ndarray:
    """tau_ij = B_i-period of du_j over the documented B realization."""
    g = curve.genus
    hom = build_homology(curve)
    tau = np.zeros((g, g), dtype=complex)
    for i, segs in enumerate(hom.b_segments):
        acc = np.zeros(g, dtype=complex)
        for kind, lo, hi, factor in segs:
            acc += _du_segment_value(curve, C, kind, lo, hi, factor)
        tau[i, :] = 2.0 * acc
    asym = float(np.max(np.abs(tau - tau.T))) if g > 1 else 0.0
    if asym > 1e-6:
        raise ArithmeticError(f"period matrix asymmetry {asym:.2e}: integration failure")
    tau = 0.5 * (tau + tau.T)
    eig = np.linalg.eigvalsh(tau.imag)
    if eig.min() <= 0:
        raise ArithmeticError(f"Im tau not positive definite: eigenvalues {eig}")
    return tau


def _tail_coeffs(curve: SpectralCurve, C: np.ndarray, K: int) -> np.ndarray:
    """Series coefficients of L_j(x)/sqrt(sigma) = sum_m c[m, j] x^{-m}."""
    cuts = curve.cuts
    s = cuts.s
    g = curve.genus
    q = np.array([1.0])
    for e in cuts.endpoints:
        q = np.convolve(q, [1.0, -float(e)])
    from .equilibrium import _inv_sqrt_series
    S = _inv_sqrt_series(q, K)
    c = np.zeros((K + 1, g), dtype=complex)
    for j in range(g):
        for k in range(g):           # monomial x^k, k = 0..g-1
            if C[k, j] == 0:
                continue
            for m in range(len(S)):
                t = s + m - k
                if 0 <= t <= K:
                    c[t, j] += C[k, j] * S[m]
    return c


def abel_map_infinity(curve: SpectralCurve, C: np.ndarray) -> np.ndarray:
    """u(inf_+) from base point b_s, along the real axis to X plus an
    analytically integrated series tail."""
    cuts = curve.cuts
    g = curve.genus
    bs = cuts.cuts[-1][1]
    X = 6.0 * max(abs(e) for e in cuts.endpoints) + 4.0

    def f_all(z):
        base = 1.0 / sqrt_sigma(cuts, z)
        return [sum(C[k, j] * z ** k for k in range(g)) * base for j in range(g)]

    u = np.zeros(g, dtype=complex)
    for j in range(g):
        u[j] = _gl_segment_sqrtstart(
            lambda z, j=j: f_all(z)[j], complex(bs), complex(X), n=240)
    tails = _tail_coeffs(curve, C, TAIL_ORDER + g + 4)
    for j in range(g):
        u[j] += sum(tails[m, j] * X ** (1 - m) / (m - 1)
                    for m in range(2, tails.shape[0]))
    return u


def abel_map(curve: SpectralCurve, pdata_or_C, p: SurfacePoint,
             n: int = 200) -> np.ndarray:
    """Abel map u(p) = int_{b_s}^{p} du along the canonical path family.

    Physical-sheet paths go through the upper half plane; second-sheet
    values are negated (hyperelliptic involution, branch-point base)."""
    C = pdata_or_C.holo_coeffs if isinstance(pdata_or_C, PeriodData) else pdata_or_C
    if p.at_infinity:
        u = (pdata_or_C.u_inf_plus if isinstance(pdata_or_C, PeriodData)
             else abel_map_infinity(curve, C))
        return p.sheet * u
    cuts = curve.cuts
    g = curve.genus
    bs = cuts.cuts[-1][1]
    z = complex(p.x)
    u = np.zeros(g, dtype=complex)
    if z.imag == 0.0 and z.real >= bs:
        for _J in range(g):
            fj = lambda t, _J=_J: (sum(C[k, _J] * t ** k for k in range(g))
                                   / sqrt_sigma(cuts, t))
            u[_J] = (_gl_segment_sqrtstart(fj, complex(bs), z, n=n)
                     if z.real > bs else 0.0)
        return p.sheet * u
    R = 0.75 * cuts.span + 0.5
    up, corner = complex(bs, R), complex(z.real, R)
    for _J in range(g):
        fj = lambda t, _J=_J: (sum(C[k, _J] * t ** k for k in range(g))
                               / sqrt_sigma(cuts, t))
        u[_J] = (_gl_segment_sqrtstart(fj, complex(bs), up, n=n)
                 + _gl_segment(fj, up, corner, n=n)
                 + _gl_segment(fj, corner, z, n=n))
    return p.sheet * u


def build_period_data(curve: SpectralCurve) -> PeriodData:
    C, P = holo_basis(curve)
    tau = period_matrix(curve, C)
    u_inf = abel_map_infinity(curve, C)
    return PeriodData(curve=curve, holo_coeffs=C, a_periods_raw=P, tau=tau,
                      u_inf_plus=u_inf)


# ---------------------------------------------------------------------------
# theta functions

@dataclass(frozen=True)
class ThetaContext:
    tau: np.ndarray
    m1: tuple
    m2: tuple
    target_tol: float = 1e-12

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=complex)
        object.__setattr__(self, "tau", tau)
        g = tau.shape[0]
        if tau.shape != (g, g):
            raise ValueError("tau must be square")
        if np.max(np.abs(tau - tau.T)) > 1e-8:
            raise ValueError("tau must be symmetric")
        if np.linalg.eigvalsh(tau.imag).min() <= 0:
            raise ValueError("Im tau must be positive definite")
        if len(self.m1) != g or len(self.m2) != g:
            raise ValueError("characteristic vectors must have length g")
        object.__setattr__(self, "m1", tuple(int(v) for v in self.m1))
        object.__setattr__(self, "m2", tuple(int(v) for v in self.m2))

    @property
    def genus(self) -> int:
        return self.tau.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(np.linalg.eigvalsh(self.tau.imag).min())

    @property
    def odd(self) -> bool:
        return (sum(a * b for a, b in zip(self.m1, self.m2)) % 2) == 1

    @property
    def z_half_period(self) -> np.ndarray:
        return 0.5 * (np.array(self.m1) + self.tau @ np.array(self.m2))


def _lattice_box(g: int, R: int) -> np.ndarray:
    rng = np.arange(-R, R + 1)
    grids = np.meshgrid(*([rng] * g), indexing="ij")
    return np.stack([gr.ravel() for gr in grids], axis=1)


def _radius_for(ctx: ThetaContext, y_norm: float) -> int:
    lam = ctx.lambda_min
    g = ctx.genus
    R = 2
    while R < 120:
        r_eff = max(R - 1.0, 1.0)
        count = 2 * g * (2 * R + 3) ** (g - 1)
        bound = count * math.exp(-math.pi * lam * r_eff ** 2
                                 + 2.0 * math.pi * (r_eff + 1.0) * y_norm)
        if bound < 0.1 * ctx.target_tol:
            return R
        R += 1
    raise ThetaError(
        f"theta truncation radius exceeds cap (lambda_min={lam:.3e}, "
        f"|Im u|={y_norm:.3e}, tol={ctx.target_tol:.1e})")


def _theta_char_raw(ctx: ThetaContext, a: np.ndarray, b: np.ndarray,
                    u: np.ndarray) -> complex:
    y = np.asarray(u, dtype=complex).imag
    R = _radius_for(ctx, float(np.max(np.abs(y))))
    m = _lattice_box(ctx.genus, R) + np.asarray(a, dtype=float)
    quad = np.einsum("ni,ij,nj->n", m, ctx.tau, m)
    lin = m @ (np.asarray(u, dtype=complex) + np.asarray(b, dtype=complex))
    return complex(np.sum(np.exp(1j * math.pi * quad + 2j * math.pi * lin)))


def _reduce_u(ctx: ThetaContext, u: np.ndarray):
    """Split u = u_red + tau m with m integer minimizing |Im u_red|;
    returns (u_red, m, log_prefactor) with
    theta[a;b](u) = exp(log_prefactor + 2 pi i m.b_shift...) handled by caller."""
    y = np.asarray(u, dtype=complex).imag
    m = np.round(np.linalg.solve(ctx.tau.imag, y)).astype(int)
    u_red = np.asarray(u, dtype=complex) - ctx.tau @ m
    return u_red, m


def theta_log(ctx: ThetaContext, u, a=None, b=None) -> complex:
    """log theta[a;b](u, tau), lattice-reduced so the sum never overflows."""
    g = ctx.genus
    u = np.asarray(u, dtype=complex).reshape(g)
    a = np.zeros(g) if a is None else np.asarray(a, dtype=float)
    b = np.zeros(g) if b is None else np.asarray(b, dtype=float)
    u_red, m = _reduce_u(ctx, u)
    val = _theta_char_raw(ctx, a, b, u_red)
    if val == 0:
        raise ThetaError("theta value underflowed to zero")
    # theta[a;b](u_red + tau m) = e^{-i pi m.tau.m - 2 pi i m.(u_red + b)} theta[a;b](u_red)
    log_pref = (-1j * math.pi * complex(m @ ctx.tau @ m)
                - 2j * math.pi * complex(m @ (u_red + b)))
    return cmath.log(val) + log_pref


def theta(ctx: ThetaContext, u) -> complex:
    """theta(u, tau) = sum_m exp(i pi m.tau.m + 2 i pi m.u)."""
    g = ctx.genus
    u = np.asarray(u, dtype=complex).reshape(g)
    u_red, m = _reduce_u(ctx, u)
    val = _theta_char_raw(ctx, np.zeros(g), np.zeros(g), u_red)
    if np.any(m != 0):
        pref = cmath.exp(-1j * math.pi * complex(m @ ctx.tau @ m)
                         - 2j * math.pi * complex(m @ u_red))
        val = val * pref
    return val


def theta_char(ctx: ThetaContext, u) -> complex:
    """Odd-characteristic theta_z(u) = theta[m2/2; m1/2](u, tau)."""
    if not ctx.odd:
        raise ValueError(f"characteristic (m1={ctx.m1}, m2={ctx.m2}) is even")
    g = ctx.genus
    u = np.asarray(u, dtype=complex).reshape(g)
    a = 0.5 * np.array(ctx.m2, dtype=float)
    b = 0.5 * np.array(ctx.m1, dtype=float)
    u_red, m = _reduce_u(ctx, u)
    val = _theta_char_raw(ctx, a, b, u_red)
    if np.any(m != 0):
        pref = cmath.exp(-1j * math.pi * complex(m @ ctx.tau @ m)
                         - 2j * math.pi * complex(m @ (u_red + b)))
        val = val * pref
    return val


def theta_char_log(ctx: ThetaContext, u) -> complex:
    if not ctx.odd:
        raise ValueError("characteristic is even")
    g = ctx.genus
    a = 0.5 * np.array(ctx.m2, dtype=float)
    b = 0.5 * np.array(ctx.m1, dtype=float)
    u = np.asarray(u, dtype=complex).reshape(g)
    u_red, m = _reduce_u(ctx, u)
    val = _theta_char_raw(ctx, a, b, u_red)
    if val == 0:
        raise ThetaError("theta_z underflowed to zero")
    log_pref = (-1j * math.pi * complex(m @ ctx.tau @ m)
                - 2j * math.pi * complex(m @ (u_red + b)))
    return cmath.log(val) + log_pref


def theta_nonzero_log(ctx: ThetaContext, u, label: str = "theta") -> complex:
    """theta_log that raises 'theta divisor hit' when the reduced value is
    numerically on the theta divisor (denominator use)."""
    g = ctx.genus
    u = np.asarray(u, dtype=complex).reshape(g)
    u_red, m = _reduce_u(ctx, u)
    val = _theta_char_raw(ctx, np.zeros(g), np.zeros(g), u_red)
    scale = abs(_theta_char_raw(ctx, np.zeros(g), np.zeros(g), np.zeros(g)))
    if abs(val) < 1e-10 * scale:
        raise ThetaError(f"theta divisor hit: {label} at argument {u}")
    log_pref = (-1j * math.pi * complex(m @ ctx.tau @ m)
                - 2j * math.pi * complex(m @ u_red))
    return cmath.log(val) + log_pref


def theta_grad_char(ctx: ThetaContext, u=None, step: float = 1e-6) -> np.ndarray:
    """Gradient of theta_z at u (default 0), by central differences."""
    g = ctx.genus
    u0 = np.zeros(g, dtype=complex) if u is None else np.asarray(u, dtype=complex)
    grad = np.zeros(g, dtype=complex)
    for j in range(g):
        e = np.zeros(g)
        e[j] = step
        grad[j] = (theta_char(ctx, u0 + e) - theta_char(ctx, u0 - e)) / (2 * step)
    return grad


def pick_odd_characteristic(curve: SpectralCurve, tau: np.ndarray, C: np.ndarray,
                            probe_points, target_tol: float = 1e-12) -> ThetaContext:
    """First odd characteristic (lexicographic in (m1, m2), entries in {0,1})
    whose dh_z stays away from zero at the probe points."""
    g = curve.genus
    combos = []
    import itertools
    for m1 in itertools.product((0, 1), repeat=g):
        for m2 in itertools.product((0, 1), repeat=g):
            if sum(a * b for a, b in zip(m1, m2)) % 2 == 1:
                combos.append((m1, m2))
    for m1, m2 in combos:
        ctx = ThetaContext(tau=tau, m1=m1, m2=m2, target_tol=target_tol)
        ok = True
        for p in probe_points:
            if abs(dh_z_dx(curve, C, ctx, p)) <= 1e-6:
                ok = False
                break
        if ok:
            return ctx
    raise ThetaError("no odd characteristic with nonvanishing dh_z at probes")


def dh_z_dx(curve: SpectralCurve, C: np.ndarray, ctx: ThetaContext,
            p: SurfacePoint) -> complex:
    """dh_z(p)/dx = sum_j d(theta_z)/du_j|_0 * du_j/dx at p."""
    if p.at_infinity:
        raise ValueError("dh_z/dx needs a finite point")
    grad = theta_grad_char(ctx)
    g = curve.genus
    y = curve.y(p)
    out = 0.0 + 0.0j
    for j in range(g):
        lj = sum(C[k, j] * p.x ** k for k in range(g))
        out += grad[j] * lj / y
    return out


def prime_form(curve: SpectralCurve, pdata: PeriodData, ctx: ThetaContext,
               p: SurfacePoint, q: SurfacePoint) -> complex:
    """E(p,q) = theta_z(u(p)-u(q)) / sqrt(dh_z(p) dh_z(q)), dh against dx."""
    up = abel_map(curve, pdata, p)
    uq = abel_map(curve, pdata, q)
    num = theta_char(ctx, up - uq)
    dp = dh_z_dx(curve, pdata.holo_coeffs, ctx, p)
    dq = dh_z_dx(curve, pdata.holo_coeffs, ctx, q)
    return num / cmath.sqrt(dp * dq)


# ---------------------------------------------------------------------------
# third-kind differentials

def _block_eta_finite(curve: SpectralCurve, q: SurfacePoint, p: SurfacePoint) -> complex:
    """(y(p) + y(q)) / (2 y(p) (x(p) - x(q))): residue +1 at q, -1/2 at both
    infinities, regular elsewhere."""
    yq = curve.y(q)
    yp = curve.y(p)
    return (yp + yq) / (2.0 * yp * (p.x - q.x))


def _block_eta_inf(curve: SpectralCurve, p: SurfacePoint) -> complex:
    """x^{s-1}/(2y): residues -1/2 at infinity_+, +1/2 at infinity_-."""
    s = curve.cuts.s
    return p.x ** (s - 1) / (2.0 * curve.y(p))


def third_kind_dS(curve: SpectralCurve, pdata: PeriodData,
                  q1, q2, p: SurfacePoint) -> complex:
    """dS_{q1,q2}/dx at p: residues +1 at q1, -1 at q2, zero A-periods.

    q1, q2 are finite SurfacePoints off the cuts, or INF_PLUS/INF_MINUS.
    """
    cuts = curve.cuts
    g = curve.genus

    def block_val(q, pt):
        if isinstance(q, SurfacePoint) and q.at_infinity:
            return -q.sheet * _block_eta_inf(curve, pt)
        return _block_eta_finite(curve, q, pt)

    def block_A(q):
        out = np.zeros(g, dtype=complex)
        for i in range(g):
            fac = cut_branch_factor(cuts, i)
            if isinstance(q, SurfacePoint) and q.at_infinity:
                val = _cut_inv_integral(cuts, _monomial(cuts.s - 1), i)
                out[i] = -q.sheet * 2.0 * val / (2.0 * fac)
            else:
                yq = curve.y(q)
                val = _cut_inv_integral(cuts, lambda x: 1.0 / (x - q.x), i)
                out[i] = yq * 2.0 * val / (2.0 * fac)
        return out

    raw_A = block_A(q1) - block_A(q2)
    beta = -raw_A   # du_j are A-normalized, so the correction is immediate
    val = block_val(q1, p) - block_val(q2, p)
    yp = curve.y(p)
    for j in range(g):
        lj = sum(pdata.holo_coeffs[k, j] * p.x ** k for k in range(g))
        val += beta[j] * lj / yp
    return val


def ds_residue(curve: SpectralCurve, pdata: PeriodData, q1, q2,
               q: SurfacePoint, radius: float = 1e-3, n: int = 64) -> complex:
    """Numerical residue of dS_{q1,q2} at the finite point q (small circle)."""
    acc = 0.0 + 0.0j
    for k in range(n):
        th = 2.0 * math.pi * k / n
        dz = radius * cmath.exp(1j * th) * 1j * (2.0 * math.pi / n)
        pt = SurfacePoint(x=q.x + radius * cmath.exp(1j * th), sheet=q.sheet)
        acc += third_kind_dS(curve, pdata, q1, q2, pt) * dz
    return acc / (2j * math.pi)


def ds_a_period(curve: SpectralCurve, pdata: PeriodData, q1, q2, i: int,
                n: int = 400) -> complex:
    """A_i-period of dS by direct contour quadrature around cut i."""
    a, b = curve.cuts.cuts[i]
    c, r = 0.5 * (a + b), 0.6 * (b - a)
    acc = 0.0 + 0.0j
    for k in range(n):
        th = 2.0 * math.pi * k / n
        z = c + r * math.cos(th) + 1j * 0.35 * (b - a) * math.sin(th)
        dz = (-r * math.sin(th) + 1j * 0.35 * (b - a) * math.cos(th)) * 2.0 * math.pi / n
        pt = SurfacePoint(x=z, sheet=+1)
        acc += third_kind_dS(curve, pdata, q1, q2, pt) * dz
    return acc


# ---------------------------------------------------------------------------
# Lambda, H and the multi-cut asymptotic formula

def theta_gamma(curve: SpectralCurve, pdata: PeriodData, ctx: ThetaContext) -> complex:
    """gamma = lim_{p->inf+} x(p) theta_z(u(p)-u(inf+)) / theta_z(u(inf+)-u(inf-))."""
    grad = theta_grad_char(ctx)
    g = curve.genus
    lead = np.array([pdata.holo_coeffs[g - 1, j] for j in range(g)])
    num = -complex(grad @ lead)
    den = theta_char(ctx, pdata.delta_u_inf)
    return num / den


def lambda_h_genusg(curve: SpectralCurve, pdata: PeriodData, ctx: ThetaContext,
                    p: SurfacePoint) -> tuple:
    """(Lambda(p), H(p)) from the theta-function representation."""
    up = abel_map(curve, pdata, p)
    ui = pdata.u_inf_plus
    gam = theta_gamma(curve, pdata, ctx)
    lam = gam * theta_char(ctx, up + ui) / theta_char(ctx, up - ui)
    # H(p) with pbar = involution(p): u(pbar) = -u(p)
    num = theta_char(ctx, up + ui) * theta_char(ctx, ui + up)
    den = theta_char(ctx, 2.0 * up) * theta_char(ctx, 2.0 * ui)
    h = num / den
    return lam, h


@dataclass(frozen=True)
class MulticutContext:
    pot: Potential
    meas: EquilibriumMeasure
    curve: SpectralCurve
    pdata: PeriodData
    theta_ctx: ThetaContext
    eps_star: np.ndarray   # independent fillings, length g
    zeta: np.ndarray       # length g, real
    gamma: complex         # theta-limit constant in Lambda
    cap: float             # logarithmic capacity: smooth norm scale

    @property
    def genus(self) -> int:
        return self.curve.genus


def build_multicut_context(pot: Potential, T: float, s: int,
                           theta_tol: float = 1e-12) -> MulticutContext:
    from .equilibrium import capacity, optimize_fillings
    meas, eps, zeta = optimize_fillings(pot, T, s)
    curve = SpectralCurve.from_measure(meas)
    pdata = build_period_data(curve)
    span = curve.cuts.span
    probes = [SurfacePoint(x=curve.cuts.cuts[-1][1] + 0.37 * span, sheet=+1),
              SurfacePoint(x=curve.cuts.cuts[0][0] - 0.29 * span, sheet=+1)]
    ctx = pick_odd_characteristic(curve, pdata.tau, pdata.holo_coeffs, probes,
                                  target_tol=theta_tol)
    gam = theta_gamma(curve, pdata, ctx)
    return MulticutContext(pot=pot, meas=meas, curve=curve, pdata=pdata,
                           theta_ctx=ctx,
                           eps_star=np.array(eps[: s - 1], dtype=float),
                           zeta=np.array([z.real if isinstance(z, complex) else z
                                          for z in zeta], dtype=float),
                           gamma=gam, cap=capacity(meas.cuts))


def _v_argument(mctx: MulticutContext, n: int, N: int) -> np.ndarray:
    """Theta argument N(zeta - tau eps*) + (n-N)(u(inf+)-u(inf-)).

    The infinity difference enters with the orientation opposite to the
    raw Abel map of this module: our A-cycle orientation was fixed by
    Im(tau) > 0, which flips du relative to the convention in which the
    wave-function drift formulas are written.  The sign below is pinned
    by the exact-engine ratio tests (n = N+-1) in the suite.
    """
    t = mctx.pdata.tau
    return (N * (mctx.zeta - t @ mctx.eps_star)
            - (n - N) * mctx.pdata.delta_u_inf)


def theta_hat_log(ctx: ThetaContext, v) -> float:
    """Lattice-invariant log-modulus: ln|theta(v)| - pi Im(v).(Im tau)^-1.Im(v).

    Invariant under v -> v + m + tau m', which makes it the right object
    for norm models whose theta arguments grow linearly with n."""
    g = ctx.genus
    v = np.asarray(v, dtype=complex).reshape(g)
    y = v.imag
    quad = math.pi * float(y @ np.linalg.solve(ctx.tau.imag, y))
    return float(theta_log(ctx, v).real) - quad


def _log_h_model(mctx: MulticutContext, n: int, N: int) -> float:
    """ln h_n relative to the flat-anchored effective potential:
    h_n ~ 2 pi cap^{2(n-N)+1} * theta_hat(v_{n+1})/theta_hat(v_n).

    The lattice-invariant modulus absorbs the per-step phase factor
    exp(-2 pi i N eps*.du) of the partition-function expansion; the smooth
    scale is the logarithmic capacity of the support."""
    ctx = mctx.theta_ctx
    base = math.log(2.0 * math.pi * mctx.cap)
    step = 2.0 * math.log(mctx.cap)
    tn1 = theta_hat_log(ctx, _v_argument(mctx, n + 1, N))
    tn = theta_hat_log(ctx, _v_argument(mctx, n, N))
    return base + (n - N) * step + (tn1 - tn)


def predicted_b_ratio(mctx: MulticutContext, n: int, N: int) -> float:
    """Model of b_n = h_n/h_{n-1} (recurrence-coefficient modulation)."""
    return float(math.exp(_log_h_model(mctx, n, N) - _log_h_model(mctx, n - 1, N)))


def asym_multicut(mctx: MulticutContext, n: int, N: int, xi: float,
                  delta: float | None = None):
    """Multi-cut prediction of psi_n(xi): saddle sum with theta-ratio terms."""
    from .genus0 import AsymptoticPrediction, default_edge_delta

    pot, meas = mctx.pot, mctx.meas
    if delta is None:
        delta = default_edge_delta(N, meas)
    hard_core = 1e-9 * meas.cuts.span
    if min(abs(xi - e) for e in meas.cuts.endpoints) < hard_core:
        from .equilibrium import RegimeTag
        return AsymptoticPrediction(
            n=n, N=N, xi=float(xi), regime=RegimeTag("excluded_edge"),
            psi_pred=math.nan, envelope=math.nan, phase=None, ingredients={})
    membership = classify_regime(meas, pot, xi, 0.0)
    regime = classify_regime(meas, pot, xi, delta)
    ctx = mctx.theta_ctx
    pdata = mctx.pdata
    v_n = _v_argument(mctx, n, N)
    log_theta_den = theta_nonzero_log(ctx, v_n, label="saddle-sum denominator")

    def term(sheet: int) -> complex:
        p = SurfacePoint(x=complex(xi, 0.0), sheet=sheet)
        up = sheet * abel_map(mctx.curve, pdata, SurfacePoint(x=complex(xi, 0.0), sheet=+1))
        lam, h = lambda_h_genusg(mctx.curve, pdata, ctx, p) if sheet == +1 else \
            _lambda_h_from_u(mctx, up)
        veff = sheet * effective_potential(meas, pot, xi, side=+1)
        w = up - pdata.u_inf_plus
        log_t = (0.5 * cmath.log(h) + (n - N) * cmath.log(lam)
                 - 0.5 * N * veff
                 - 2j * math.pi * N * complex(mctx.eps_star @ w)
                 + theta_log(ctx, v_n + w) - log_theta_den)
        return cmath.exp(log_t)

    if membership.kind == "outside":
        total = term(+1)
    else:
        total = term(+1) + term(-1)
    # V_eff is anchored at the cut level, so the weight and norm-model
    # exponentials cancel: psi = sum of terms / sqrt(h-model)
    psi = total * math.exp(-0.5 * _log_h_model(mctx, n, N))
    return AsymptoticPrediction(
        n=n, N=N, xi=float(xi), regime=regime,
        psi_pred=float(psi.real), envelope=float(abs(psi)), phase=None,
        ingredients={"v_n": v_n, "gamma": mctx.gamma, "psi_complex": complex(psi)})


def _lambda_h_from_u(mctx: MulticutContext, up: np.ndarray) -> tuple:
    ctx = mctx.theta_ctx
    ui = mctx.pdata.u_inf_plus
    lam = mctx.gamma * theta_char(ctx, up + ui) / theta_char(ctx, up - ui)
    num = theta_char(ctx, up + ui) * theta_char(ctx, ui + up)
    den = theta_char(ctx, 2.0 * up) * theta_char(ctx, 2.0 * ui)
    return lam, num / den
