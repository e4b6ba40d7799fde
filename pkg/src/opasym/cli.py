"""Command-line front end: equilibrium solving, exact computation,
asymptotic evaluation, comparison reports and gas sampling.

All outputs are UTF-8 CSV with a header row and a leading comment line
recording the tool version and the config hash; given the same config and
seed every command is byte-reproducible.

Exit codes: 0 success, 1 numerical failure, 2 model-mismatch diagnostics
(e.g. wrong cut count), 3 config errors.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import __version__
from .potential import ConfigError, Potential, RunConfig, config_hash, parse_config

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_MISMATCH = 2
EXIT_CONFIG = 3


def _fmt(x) -> str:
    import numpy as np
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def _write_csv(path: Path, header, rows, stamp: str) -> None:
    lines = [f"# opasym {__version__} config={stamp}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load(args):
    text = Path(args.config).read_text(encoding="utf-8")
    pot, cfg = parse_config(text)
    if args.precision is not None:
        from dataclasses import replace
        cfg = replace(cfg, precision=args.precision)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    cfg = cfg.with_defaults_for(pot)
    return pot, cfg


def _solve_measure(pot, cfg):
    from . import equilibrium as eq
    s = cfg.cuts_hint or 1
    if s <= 1:
        return eq.solve_one_cut(pot, cfg.T)
    meas, eps, zeta = eq.optimize_fillings(pot, cfg.T, s)
    return meas


def _edge_delta(cfg, N, meas):
    from .genus0 import default_edge_delta
    if cfg.edge_exclusion_delta is not None:
        return cfg.edge_exclusion_delta
    return default_edge_delta(N, meas)


def cmd_equilibrium(args) -> int:
    from . import equilibrium as eq
    pot, cfg = _load(args)
    stamp = config_hash(pot, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.cuts_hint or 1
    try:
        if s <= 1:
            meas = eq.solve_one_cut(pot, cfg.T)
            eps_star, zeta = (cfg.T,), ()
        else:
            meas, eps_star, zeta = eq.optimize_fillings(pot, cfg.T, s)
    except eq.NegativeDensityError as exc:
        sys.stderr.write(f"equilibrium: {exc}\n")
        return EXIT_MISMATCH
    except eq.EquilibriumError as exc:
        sys.stderr.write(f"equilibrium: {exc}\n")
        return EXIT_NUMERICAL

    rows = [(i, a, b, meas.fillings[i])
            for i, (a, b) in enumerate(meas.cuts.cuts)]
    _write_csv(out / "cuts.csv", ["i", "a_i", "b_i", "eps_i"], rows, stamp)
    _write_csv(out / "moment_poly.csv", ["k", "coeff"],
               [(k, c) for k, c in enumerate(meas.M_coeffs)], stamp)
    lo = meas.cuts.cuts[0][0] - 0.25 * meas.cuts.span
    hi = meas.cuts.cuts[-1][1] + 0.25 * meas.cuts.span
    count = max(len(cfg.grid), 201)
    xs = [lo + (hi - lo) * i / (count - 1) for i in range(count)]
    dens = [(x, float(eq.density(meas, x))) for x in xs]
    _write_csv(out / "density.csv", ["x", "rho"], dens, stamp)
    if args.plot:
        _plot_density(out / "density.svg", meas, dens)
    return EXIT_OK


def _build_table(pot, cfg, n_max=None):
    from . import exact
    N = cfg.N
    n_max = n_max if n_max is not None else max(list(cfg.n_values) + [N]) + 2
    rule = exact.build_weight_quadrature(pot, N, deg_needed=2 * n_max + 2,
                                         precision=cfg.precision)
    return exact.compute_recurrence(rule, pot, N, n_max)


def cmd_exact(args) -> int:
    from . import exact
    pot, cfg = _load(args)
    stamp = config_hash(pot, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        table = _build_table(pot, cfg)
    except exact.PrecisionError as exc:
        sys.stderr.write(f"exact: {exc}\n")
        return EXIT_NUMERICAL
    rows = []
    for n in range(table.n_max + 1):
        b = float(table.b_n[n - 1]) if n >= 1 else 0.0
        rows.append((n, float(table.a_n[n]), b, table.log_h(n)))
    _write_csv(out / "recurrence.csv", ["n", "a_n", "b_n", "log_h_n"], rows, stamp)
    wrows = []
    for n in cfg.n_values:
        for xi in cfg.grid:
            ws = exact.eval_wave(table, pot, cfg.N, n, xi)
            wrows.append((n, ws.xi, ws.psi, ws.log_abs_p, ws.sign_p))
    _write_csv(out / "waves.csv", ["n", "xi", "psi", "log_abs_p", "sign_p"],
               wrows, stamp)
    return EXIT_OK


def _predictions(pot, cfg, meas):
    from . import genus0, riemann
    N = cfg.N
    delta = _edge_delta(cfg, N, meas)
    rows = []
    if meas.cuts.s == 1:
        for n in cfg.n_values:
            for xi in cfg.grid:
                pr = genus0.predict(meas, pot, n, N, xi, delta)
                rows.append((n, pr.xi, pr.regime.kind, pr.psi_pred, pr.envelope,
                             pr.phase if pr.phase is not None else math.nan))
    else:
        mctx = riemann.build_multicut_context(pot, cfg.T, meas.cuts.s)
        for n in cfg.n_values:
            for xi in cfg.grid:
                pr = riemann.asym_multicut(mctx, n, N, xi, delta)
                rows.append((n, pr.xi, pr.regime.kind, pr.psi_pred, pr.envelope,
                             math.nan))
    return rows


def cmd_asym(args) -> int:
    from . import equilibrium as eq
    pot, cfg = _load(args)
    stamp = config_hash(pot, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        meas = _solve_measure(pot, cfg)
        rows = _predictions(pot, cfg, meas)
    except eq.NegativeDensityError as exc:
        sys.stderr.write(f"asym: {exc}\n")
        return EXIT_MISMATCH
    except (eq.EquilibriumError, ArithmeticError) as exc:
        sys.stderr.write(f"asym: {exc}\n")
        return EXIT_NUMERICAL
    _write_csv(out / "predictions.csv",
               ["n", "xi", "regime", "psi_pred", "envelope", "phase"], rows, stamp)
    return EXIT_OK


def cmd_compare(args) -> int:
    from . import equilibrium as eq, exact
    pot, cfg = _load(args)
    stamp = config_hash(pot, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        meas = _solve_measure(pot, cfg)
    except eq.NegativeDensityError as exc:
        sys.stderr.write(f"compare: {exc}\n")
        return EXIT_MISMATCH
    except eq.EquilibriumError as exc:
        sys.stderr.write(f"compare: {exc}\n")
        return EXIT_NUMERICAL
    N = cfg.N
    delta = _edge_delta(cfg, N, meas)
    non_edge = [xi for xi in cfg.grid
                if min(abs(xi - e) for e in meas.cuts.endpoints) >= delta]
    if not non_edge:
        sys.stderr.write("compare: grid entirely inside edge-exclusion bands\n")
        return EXIT_MISMATCH
    try:
        table = _build_table(pot, cfg)
        preds = _predictions(pot, cfg, meas)
    except exact.PrecisionError as exc:
        sys.stderr.write(f"compare: {exc}\n")
        return EXIT_NUMERICAL
    rows = []
    pred_ix = 0
    max_env_err = 0.0
    zero_delta_worst = 0
    for n in cfg.n_values:
        sign_flips_exact = 0
        sign_flips_pred = 0
        prev_e = prev_p = None
        for xi in cfg.grid:
            ws = exact.eval_wave(table, pot, N, n, xi)
            _, _, regime, psi_pred, envelope, _ = preds[pred_ix]
            pred_ix += 1
            abs_err = abs(psi_pred - ws.psi)
            if abs(ws.psi) > 1e-3 * max(envelope, 1e-300):
                rel = abs_err / abs(ws.psi)
            else:
                rel = abs_err / max(envelope, 1e-300)
            rows.append((xi, n, N, ws.psi, psi_pred, regime, abs_err, rel))
            if regime != "excluded_edge":
                if envelope > 0 and abs_err / max(envelope, 1e-300) > max_env_err:
                    max_env_err = abs_err / max(envelope, 1e-300)
                if regime == "on_cut":
                    if prev_e is not None:
                        if (ws.psi < 0) != (prev_e < 0):
                            sign_flips_exact += 1
                        if (psi_pred < 0) != (prev_p < 0):
                            sign_flips_pred += 1
                    prev_e, prev_p = ws.psi, psi_pred
                else:
                    prev_e = prev_p = None
        zero_delta_worst = max(zero_delta_worst,
                               abs(sign_flips_exact - sign_flips_pred))
    _write_csv(out / "compare.csv",
               ["xi", "n", "N", "psi_exact", "psi_pred", "regime", "abs_err",
                "rel_err_or_envelope_err"], rows, stamp)
    summary = [
        f"# opasym {__version__} config={stamp}",
        f"max_envelope_err_outside_edge_bands={_fmt(max_env_err)}",
        f"bulk_zero_count_delta={zero_delta_worst}",
        f"edge_exclusion_delta={_fmt(delta)}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    if args.plot:
        _plot_compare(out / "compare.svg", rows, cfg)
    return EXIT_OK


def cmd_sample(args) -> int:
    from . import equilibrium as eq, sampler
    pot, cfg = _load(args)
    stamp = config_hash(pot, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = args.particles or cfg.N
    run = sampler.sample_gas(pot, n=n, T=cfg.T, sweeps=args.sweeps,
                             seed=cfg.seed, thin=args.thin)
    try:
        meas = _solve_measure(pot, cfg)
    except eq.EquilibriumError:
        meas = None
    rows = []
    total = int(run.counts.sum())
    for k in range(len(run.counts)):
        lo, hi = run.bin_edges[k], run.bin_edges[k + 1]
        if meas is not None:
            from scipy.integrate import quad
            import numpy as np
            mid = 0.5 * (lo + hi)
            p = float(eq.density(meas, mid)) * (hi - lo) / meas.T
            expected = total * p
            sigma = math.sqrt(max(expected * (1 - p), 1e-12))
        else:
            expected, sigma = math.nan, math.nan
        rows.append((lo, hi, int(run.counts[k]), expected, sigma))
    _write_csv(out / "histogram.csv",
               ["bin_lo", "bin_hi", "count", "expected", "sigma"], rows, stamp)
    meta = [("seed", cfg.seed), ("acceptance_rate", run.chain.acceptance_rate),
            ("sweeps", run.chain.sweeps_done), ("step_scale", run.chain.step_scale),
            ("particles", n)]
    _write_csv(out / "chain_meta.csv", ["key", "value"], meta, stamp)
    return EXIT_OK


def cmd_curve_info(args) -> int:
    from . import equilibrium as eq, riemann
    pot, cfg = _load(args)
    stamp = config_hash(pot, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.cuts_hint or 2
    if s < 2:
        sys.stderr.write("curve-info: needs cuts_hint >= 2 (genus >= 1)\n")
        return EXIT_CONFIG
    try:
        mctx = riemann.build_multicut_context(pot, cfg.T, s)
    except eq.EquilibriumError as exc:
        sys.stderr.write(f"curve-info: {exc}\n")
        return EXIT_NUMERICAL
    tau = mctx.pdata.tau
    g = tau.shape[0]
    rows = [(i, j, tau[i, j].real, tau[i, j].imag)
            for i in range(g) for j in range(g)]
    _write_csv(out / "tau.csv", ["i", "j", "re_tau", "im_tau"], rows, stamp)
    arows = []
    for j in range(g):
        u = mctx.pdata.u_inf_plus[j]
        arows.append((f"u_inf_plus_{j}", u.real, u.imag))
    for j, z in enumerate(mctx.zeta):
        arows.append((f"zeta_{j}", float(z), 0.0))
    for j, e in enumerate(mctx.eps_star):
        arows.append((f"eps_star_{j}", float(e), 0.0))
    arows.append(("gamma_theta", mctx.gamma.real, mctx.gamma.imag))
    arows.append(("capacity", mctx.cap, 0.0))
    _write_csv(out / "abel.csv", ["quantity", "re", "im"], arows, stamp)
    return EXIT_OK


def _plot_density(path: Path, meas, dens) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    xs = [r[0] for r in dens]
    ys = [r[1] for r in dens]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, ys, lw=1.2)
    for a, b in meas.cuts.cuts:
        ax.axvspan(a, b, alpha=0.08, color="C0")
    ax.set_xlabel("x")
    ax.set_ylabel("rho(x)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_compare(path: Path, rows, cfg) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    n0 = cfg.n_values[-1]
    xs = [r[0] for r in rows if r[1] == n0]
    ye = [r[3] for r in rows if r[1] == n0]
    yp = [r[4] for r in rows if r[1] == n0]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(xs, ye, lw=1.0, label=f"exact psi_{n0}")
    ax.plot(xs, yp, lw=1.0, ls="--", label=f"predicted psi_{n0}")
    ax.legend()
    ax.set_xlabel("xi")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opasym",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--plot", action="store_true", help="emit SVG plots")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--precision", type=int, default=None)

    for name, fn in [("equilibrium", cmd_equilibrium), ("exact", cmd_exact),
                     ("asym", cmd_asym), ("compare", cmd_compare),
                     ("curve-info", cmd_curve_info)]:
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("sample")
    common(p)
    p.add_argument("--sweeps", type=int, default=200_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--particles", type=int, default=None,
                   help="gas size (defaults to N)")
    p.set_defaults(func=cmd_sample)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
