"""Metropolis sampler for the eigenvalue gas ~ Delta(x)^2 prod exp(-(n/T) V).

Independent stochastic oracle for the analytic modules: density histograms,
per-cut occupation fractions and characteristic-polynomial averages.
Single-site Gaussian proposals, systematic site scan; the inner loop is
JIT-compiled and consumes pre-drawn random streams so runs are exactly
reproducible from the seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit


@dataclass
class ChainState:
    positions: np.ndarray
    log_weight: float
    step_scale: float
    rng_seed: int
    accepted: int = 0
    proposed: int = 0
    sweeps_done: int = 0

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / max(1, self.proposed)


def log_gas_weight(positions: np.ndarray, coeffs: np.ndarray, n: int, T: float) -> float:
    """-(n/T) sum V(x_i) + 2 sum_{i<j} ln|x_i - x_j|."""
    v = np.polyval(coeffs[::-1], positions)
    acc = -(n / T) * float(np.sum(v))
    for i in range(len(positions)):
        d = positions[i] - positions[i + 1:]
        acc += 2.0 * float(np.sum(np.log(np.abs(d))))
    return acc


@njit(cache=True)
def _sweep_kernel(x, coeffs, beta_v, step, normals, uniforms):
    """Run len(normals)//n systematic sweeps; returns (accepted, dlogw)."""
    n = x.shape[0]
    nsweeps = normals.shape[0] // n
    accepted = 0
    dlogw = 0.0
    k = 0
    for _ in range(nsweeps):
        for i in range(n):
            xi = x[i]
            xp = xi + step * normals[k]
            # potential difference via Horner
            vnew = coeffs[-1]
            vold = coeffs[-1]
            for c in range(len(coeffs) - 2, -1, -1):
                vnew = vnew * xp + coeffs[c]
                vold = vold * xi + coeffs[c]
            dlog = -beta_v * (vnew - vold)
            ok = True
            for j in range(n):
                if j != i:
                    dn = xp - x[j]
                    do = xi - x[j]
                    if dn == 0.0:
                        ok = False
                        break
                    dlog += 2.0 * (math.log(abs(dn)) - math.log(abs(do)))
            if ok and math.log(uniforms[k]) < dlog:
                x[i] = xp
                accepted += 1
                dlogw += dlog
            k += 1
    return accepted, dlogw


def init_chain(pot, n: int, T: float, seed: int, step_scale: float = 0.5) -> ChainState:
    rng = np.random.default_rng(seed)
    pos = rng.normal(0.0, 1.0, size=n)
    coeffs = np.array(pot.coeffs, dtype=float)
    return ChainState(positions=pos,
                      log_weight=log_gas_weight(pos, coeffs, n, T),
                      step_scale=step_scale, rng_seed=seed)


def run_sweeps(chain: ChainState, pot, T: float, sweeps: int,
               rng: np.random.Generator, tune: bool = False,
               chunk: int = 2000) -> None:
    """Advance the chain in place; optionally adapt step_scale to 30-50%."""
    n = chain.n
    coeffs = np.array(pot.coeffs, dtype=float)
    beta_v = n / T
    done = 0
    while done < sweeps:
        todo = min(chunk, sweeps - done)
        normals = rng.standard_normal(todo * n)
        uniforms = rng.random(todo * n)
        acc, dlogw = _sweep_kernel(chain.positions, coeffs, beta_v,
                                   chain.step_scale, normals, uniforms)
        chain.accepted += int(acc)
        chain.proposed += todo * n
        chain.log_weight += float(dlogw)
        chain.sweeps_done += todo
        done += todo
        if tune:
            rate = acc / (todo * n)
            if rate < 0.30:
                chain.step_scale *= 0.8
            elif rate > 0.50:
                chain.step_scale *= 1.25


@dataclass
class GasRun:
    chain: ChainState
    samples: np.ndarray          # (k, n) thinned positions
    bin_edges: np.ndarray
    counts: np.ndarray
    burn_in: int
    thin: int

    def occupation_fraction(self, lo: float, hi: float) -> float:
        inside = (self.samples >= lo) & (self.samples <= hi)
        return float(np.mean(np.sum(inside, axis=1))) / self.samples.shape[1]


def sample_gas(pot, n: int, T: float = 1.0, sweeps: int = 200_000,
               seed: int = 0, burn_in: int | None = None, thin: int = 10,
               bins: int = 60, bin_range: tuple | None = None) -> GasRun:
    """Run the Metropolis chain and return thinned samples + histogram.

    Defaults: burn-in = min(100000, sweeps//2), thinning every 10 sweeps.
    """
    if n < 2:
        raise ValueError("need at least 2 eigenvalues")
    if burn_in is None:
        burn_in = min(100_000, sweeps // 2)
    rng = np.random.default_rng(seed)
    chain = init_chain(pot, n, T, seed)
    # burn-in with step adaptation, then freeze the step (detailed balance)
    run_sweeps(chain, pot, T, burn_in, rng, tune=True)
    keep = []
    remaining = sweeps
    while remaining > 0:
        todo = min(thin, remaining)
        run_sweeps(chain, pot, T, todo, rng, tune=False)
        keep.append(chain.positions.copy())
        remaining -= todo
    samples = np.array(keep)
    if bin_range is None:
        lo, hi = float(samples.min()), float(samples.max())
        pad = 0.05 * (hi - lo)
        bin_range = (lo - pad, hi + pad)
    counts, edges = np.histogram(samples.ravel(), bins=bins, range=bin_range)
    return GasRun(chain=chain, samples=samples, bin_edges=edges, counts=counts,
                  burn_in=burn_in, thin=thin)


def recompute_drift(run: GasRun, pot, T: float) -> float:
    """|incremental log-weight - full recomputation| for the final state."""
    coeffs = np.array(pot.coeffs, dtype=float)
    full = log_gas_weight(run.chain.positions, coeffs, run.chain.n, T)
    return abs(full - run.chain.log_weight)


@dataclass
class CharPolyEstimate:
    log_mean: float
    error: float
    sign_stable: bool
    n_blocks: int


def estimate_char_poly(run: GasRun, xi: float, blocks: int = 20) -> CharPolyEstimate:
    """ln < prod_i (xi - x_i) > with jackknife error bars.

    Only reliable for xi outside the support: inside, the product changes
    sign between samples and the estimate is flagged unstable.
    """
    samples = run.samples
    k = samples.shape[0]
    signs = np.prod(np.sign(xi - samples), axis=1)
    sign_stable = bool(np.all(signs == signs[0]))
    logs = np.sum(np.log(np.abs(xi - samples)), axis=1)
    ref = logs.max()
    vals = np.exp(logs - ref) * signs
    if blocks > k:
        blocks = max(2, k // 2)
    usable = (k // blocks) * blocks
    vals = vals[:usable].reshape(blocks, -1)
    block_means = vals.mean(axis=1)
    mean_all = float(block_means.mean())
    if mean_all <= 0:
        return CharPolyEstimate(log_mean=math.nan, error=math.inf,
                                sign_stable=False, n_blocks=blocks)
    jack = np.array([(mean_all * blocks - bm) / (blocks - 1) for bm in block_means])
    jack_logs = np.log(np.abs(jack)) + ref
    log_mean = math.log(mean_all) + ref
    err = math.sqrt((blocks - 1) / blocks * float(np.sum((jack_logs - jack_logs.mean()) ** 2)))
    return CharPolyEstimate(log_mean=log_mean, error=err,
                            sign_stable=sign_stable, n_blocks=blocks)
