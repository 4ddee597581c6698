"""Command-line experiment runner.

Subcommands: sample, verify, potential-table, dlr-test, rigidity,
fluctuation, freeenergy, probe-compensator.  Every run is a pure function
of (config, seed): byte-identical CSV on repeat runs.  Exit codes: 0
success, 1 numerical test failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__, figures
from .config import ConfigError, ExperimentConfig, load_config, validate
from .energy import total_energy
from .estimators import (
    compensator_probe,
    conditional_number_histogram,
    free_energy_bounds_check,
    number_fluctuation,
    perturbed_energy_scale,
    swap_ratio_probe,
)
from .oracle import (
    SCHEME_PANEL,
    QuadratureSpec,
    dlr_residual,
    exact_partition,
    gnz_residual,
    reference_periodized,
)
from .output import (
    resolve_output_dir,
    write_csv,
    write_json_summary,
    write_reports_csv,
)
from .potential import (
    AccuracyError,
    PeriodizedPotential,
    RieszParams,
    integrate_g2,
    self_constant,
    tail_bound,
)
from .sampler import ChainState, make_schedule, run_chain
from .torus import (
    TorusBox,
    Window,
    rng_from_seed,
    sample_binomial,
    write_snapshots,
)

_SUBCOMMANDS = (
    "sample",
    "verify",
    "potential-table",
    "dlr-test",
    "rigidity",
    "fluctuation",
    "freeenergy",
    "probe-compensator",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rieszlab",
        description="circular Riesz gas laboratory: sampling, verification, probes",
    )
    parser.add_argument("--version", action="version", version=f"rieszlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--d", type=int, help="dimension")
        p.add_argument("--s", type=float, help="Riesz exponent, in (d-1, d)")
        p.add_argument("--n", type=int, help="particle count")
        p.add_argument("--beta", type=float, help="inverse temperature")
        p.add_argument("--seed", type=int, help="RNG seed (required for sampling)")
        p.add_argument("--steps", type=int, help="total MCMC steps")
        p.add_argument("--burn-in", type=int, dest="burn_in")
        p.add_argument("--thin", type=int)
        p.add_argument("--schedule", choices=("plain", "dlr", "swap"))
        p.add_argument("--step-size", type=float, dest="step_size")
        p.add_argument("--window", type=float, help="centered window volume")
        p.add_argument("--u-list", dest="u_list", help="comma-separated swap shifts")
        p.add_argument("--output", help="output directory")
        p.add_argument("--points-per-axis", type=int, dest="points_per_axis")
        if name == "verify":
            p.add_argument("--quick", action="store_true", help="skip the n=4 oracle")
        if name == "potential-table":
            p.add_argument("--grid", type=int, default=512, help="table resolution")
    return parser


def _config_from_args(args, defaults: dict | None = None) -> ExperimentConfig:
    overrides = {
        "model": {"d": args.d, "s": args.s, "n": args.n, "beta": args.beta},
        "sampler": {
            "steps": args.steps,
            "burn_in": args.burn_in,
            "thin": args.thin,
            "seed": args.seed,
            "schedule": args.schedule,
            "step_size": args.step_size,
        },
        "windows": {
            "geometry": (args.window,) if args.window is not None else None,
            "u_list": tuple(float(t) for t in args.u_list.split(","))
            if args.u_list
            else None,
        },
        "outputs": {"directory": args.output},
        "oracle": {"points_per_axis": args.points_per_axis},
    }
    if args.config:
        # precedence: flags > file > per-command fallbacks, so the
        # fallbacks go to load_config as pre-filled file values, not as
        # overrides
        return load_config(args.config, overrides, defaults=defaults)
    flat = {sec: dict(keys) for sec, keys in (defaults or {}).items()}
    for sec, keys in overrides.items():
        for key, val in keys.items():
            if val is not None:
                flat.setdefault(sec, {})[key] = val
    return validate(flat, source="<flags>")


def _emit(cfg: ExperimentConfig, name: str, *, header=None, rows=None,
          reports=None, summary=None, figure=None) -> str:
    out = resolve_output_dir(cfg.output_directory)
    base = os.path.join(out, name)
    if "csv" in cfg.formats:
        if reports is not None:
            write_reports_csv(base + ".csv", reports)
        elif rows is not None:
            write_csv(base + ".csv", header, rows)
    if "json" in cfg.formats:
        write_json_summary(base + ".meta.json", summary or {}, cfg.as_dict())
    if "png" in cfg.formats and figure is not None:
        figure(base + ".png")
    return base


def _build_chain(cfg: ExperimentConfig, pot, stream: int = 0) -> ChainState:
    box = TorusBox(n=cfg.n, d=cfg.d)
    rng = rng_from_seed(cfg.seed, stream=stream)
    gamma = sample_binomial(box, cfg.n, rng)
    return ChainState(gamma, cfg.beta, rng, pot, step_size=cfg.step_size)


def _window_for(cfg: ExperimentConfig) -> Window:
    vol = cfg.window_volumes[0] if cfg.window_volumes else min(2.0, cfg.n / 4.0)
    return Window.centered(cfg.d, vol)


def _default_u_list(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.u_list:
        return cfg.u_list
    length = TorusBox(n=cfg.n, d=cfg.d).side_length
    return (length / 4.0, 3.0 * length / 8.0, length / 2.0)


def cmd_sample(cfg: ExperimentConfig, args) -> int:
    pot = PeriodizedPotential.build(cfg.params, cfg.n).tabulate()
    state = _build_chain(cfg, pot)
    window = _window_for(cfg) if cfg.schedule != "plain" else None
    move = make_schedule(cfg.schedule, window=window, u_list=cfg.u_list)
    samples, diag = run_chain(
        state, cfg.steps, thin=cfg.thin, burn_in=cfg.burn_in, move=move
    )
    energies = [total_energy(c, pot).total for c in samples]
    rows = [(i * cfg.thin, e) for i, e in enumerate(energies)]
    out = resolve_output_dir(cfg.output_directory)
    write_snapshots(
        os.path.join(out, "samples.jsonl"), samples, seed=cfg.seed, s=cfg.s, beta=cfg.beta
    )
    base = _emit(
        cfg,
        "sample",
        header=("step", "energy"),
        rows=rows,
        summary={"diagnostics": diag, "n_snapshots": len(samples)},
        figure=lambda p: figures.plot_energy_trace(p, np.asarray(energies), cfg.thin),
    )
    print(f"wrote {len(samples)} snapshots and energy trace under {os.path.dirname(base)}")
    return 0


def _verify_rows(cfg: ExperimentConfig, quick: bool):
    params = cfg.params
    rows = []

    def add(test_id, value, tolerance, ok):
        rows.append((test_id, value, tolerance, "pass" if ok else "fail"))

    # production vs independent reference summation
    rng = rng_from_seed(cfg.seed, stream=901)
    for n_chk in (2, 8):
        pp = PeriodizedPotential.build(params, n_chk)
        pts = rng.uniform(-pp.side_length / 2, pp.side_length / 2, size=24)
        ref = reference_periodized(params, n_chk, pts, truncation=10**5)
        got = pp.eval(pts)
        err = float(np.max(np.abs(got - ref)))
        tol = pp.tail_bound + tail_bound(params, n_chk, 10**5)
        add(f"potential_reference[n={n_chk}]", err, tol, err <= tol)

    # zero mean of the periodized interaction
    for n_chk in (2, 8):
        pp = PeriodizedPotential.build(params, n_chk)
        nodes, weights = np.polynomial.legendre.leggauss(256)
        half = pp.side_length / 2.0
        x = half * nodes
        smooth_int = half * float(np.dot(weights, pp.smooth_part(x)))
        c0 = pp.cell_means[0] if params.d == 1 else pp.cell_means.flat[0]
        total = smooth_int + n_chk * c0
        tol = 1e-8 + n_chk * pp.tail_bound
        add(f"zero_mean[n={n_chk}]", total, tol, abs(total) <= tol)

    # scaling identity of the self-interaction constant
    g1, _ = self_constant(params, 1)
    g2, _ = self_constant(params, 2)
    scale_err = abs(g2 * 2.0 ** (params.s / params.d) - g1)
    add("self_constant_scaling", scale_err, 1e-8, scale_err <= 1e-8)

    # partition bracket against exact quadrature
    beta = cfg.beta
    g2_int = integrate_g2(params)
    c_hat = perturbed_energy_scale(params, (2, 3), trials=16, seed=cfg.seed)
    delta = 0.25
    n_top = 3 if quick else 4
    for n_chk in range(1, n_top + 1):
        tol = 1e-6 if n_chk <= 3 else 1e-4
        z = exact_partition(params, n_chk, beta, tol=tol)
        _, eps_n = self_constant(params, n_chk)
        upper = beta * (0.5 + g2_int + eps_n)
        lower = -beta * c_hat + (math.lgamma(n_chk + 1) + n_chk * math.log(delta / n_chk)) / n_chk
        val = math.log(float(z)) / n_chk
        ok = lower <= val <= upper
        add(f"partition_bracket[n={n_chk}]", val, z.tolerance, ok)

    # DLR and GNZ residuals at n = 2
    win = Window.centered(1, 2.0 / 3.0)
    sub = Window.centered(1, 1.0 / 3.0)

    def f_dlr(block):
        m = (block >= sub.lower[0]) & (block < sub.upper[0])
        return (m.sum(axis=1) >= 1).astype(float)

    for b in (0.0, beta):
        res = dlr_residual(
            f_dlr, params, 2, b, win,
            quad=QuadratureSpec(points_per_axis=8, scheme=SCHEME_PANEL),
            breaks=(sub.lower[0], sub.upper[0]),
        )
        add(f"dlr_residual[beta={b:g}]", float(res), 1e-4, abs(res) <= 1e-4)
        res_i = dlr_residual(
            f_dlr, params, 2, b, win,
            quad=QuadratureSpec(points_per_axis=8, scheme=SCHEME_PANEL),
            inner_quad=QuadratureSpec(points_per_axis=11, scheme=SCHEME_PANEL),
            breaks=(sub.lower[0], sub.upper[0]),
        )
        add(f"dlr_residual_independent[beta={b:g}]", float(res_i), 1e-4, abs(res_i) <= 1e-4)

    def f_gnz(x, rest):
        inside = (x >= win.lower[0]) & (x < win.upper[0])
        return inside.astype(float)

    for b in (0.0, beta):
        res = gnz_residual(
            f_gnz, params, 2, b,
            quad=QuadratureSpec(points_per_axis=12, scheme=SCHEME_PANEL),
            breaks=(win.lower[0], win.upper[0]),
        )
        add(f"gnz_residual[beta={b:g}]", float(res), 1e-4, abs(res) <= 1e-4)

    return rows


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    rows = _verify_rows(cfg, args.quick)
    print("test_id,value,tolerance,status")
    for row in rows:
        print(",".join(
            v if isinstance(v, str) else f"{v:.17g}" for v in row
        ))
    _emit(
        cfg,
        "verify",
        header=("test_id", "value", "tolerance", "status"),
        rows=rows,
        summary={"n_tests": len(rows), "failures": sum(r[3] == "fail" for r in rows)},
    )
    return 0 if all(r[3] == "pass" for r in rows) else 1


def cmd_potential_table(cfg: ExperimentConfig, args) -> int:
    pp = PeriodizedPotential.build(cfg.params, cfg.n)
    half = pp.side_length / 2.0
    r = np.linspace(half / args.grid, half, args.grid)
    vals = np.asarray(pp.eval(r))
    rows = list(zip(r.tolist(), vals.tolist()))
    _emit(
        cfg,
        "potential_table",
        header=("r", "g_n"),
        rows=rows,
        summary={
            "n": cfg.n,
            "s": cfg.s,
            "truncation_radius": pp.truncation_radius,
            "tail_bound": pp.tail_bound,
            "self_constant": pp.self_constant,
        },
        figure=lambda p: figures.plot_potential(p, r, vals, cfg.n, cfg.s),
    )
    print(f"tabulated g_n on {args.grid} radii, K={pp.truncation_radius}, "
          f"tail bound {pp.tail_bound:.3e}")
    return 0


def cmd_dlr_test(cfg: ExperimentConfig, args) -> int:
    if cfg.n > 3:
        raise ConfigError("dlr-test needs n <= 3 (oracle quadrature cost)")
    params = cfg.params
    box = TorusBox(n=cfg.n, d=cfg.d)
    win = Window.centered(cfg.d, box.volume / 3.0)
    sub = Window.centered(cfg.d, box.volume / 6.0)
    rows = []

    def f_count(block):
        m = (block >= sub.lower[0]) & (block < sub.upper[0])
        return m.sum(axis=1).astype(float)

    def f_ind(block):
        m = (block >= sub.lower[0]) & (block < sub.upper[0])
        return (m.sum(axis=1) >= 1).astype(float)

    def f_smooth(block):
        return np.cos(2.0 * np.pi * block / box.side_length).sum(axis=1)

    def f_gnz(x, rest):
        return ((x >= win.lower[0]) & (x < win.upper[0])).astype(float)

    status = 0
    for fname, f in (("count", f_count), ("indicator", f_ind), ("smooth", f_smooth)):
        for b in (0.0, cfg.beta):
            res = dlr_residual(
                f, params, cfg.n, b, win,
                quad=QuadratureSpec(points_per_axis=max(4, cfg.points_per_axis // 4),
                                    scheme=SCHEME_PANEL),
                breaks=(sub.lower[0], sub.upper[0]),
            )
            ok = abs(res) <= 1e-4
            status |= 0 if ok else 1
            rows.append((f"dlr[{fname},beta={b:g}]", float(res), res.tolerance,
                         "pass" if ok else "fail"))
    for b in (0.0, cfg.beta):
        res = gnz_residual(
            f_gnz, params, cfg.n, b,
            quad=QuadratureSpec(points_per_axis=max(6, cfg.points_per_axis // 2),
                                scheme=SCHEME_PANEL),
            breaks=(win.lower[0], win.upper[0]),
        )
        ok = abs(res) <= 1e-4
        status |= 0 if ok else 1
        rows.append((f"gnz[beta={b:g}]", float(res), res.tolerance,
                     "pass" if ok else "fail"))
    for row in rows:
        print(",".join(v if isinstance(v, str) else f"{v:.6e}" for v in row))
    _emit(cfg, "dlr_test", header=("test_id", "residual", "tolerance", "status"),
          rows=rows, summary={"n": cfg.n, "beta": cfg.beta})
    return status


def cmd_rigidity(cfg: ExperimentConfig, args) -> int:
    pot = PeriodizedPotential.build(cfg.params, cfg.n).tabulate()
    window = _window_for(cfg)
    u_list = _default_u_list(cfg)
    state = _build_chain(cfg, pot)
    move = make_schedule("swap", window=window, u_list=u_list)
    samples, diag = run_chain(
        state, cfg.steps, thin=cfg.thin, burn_in=cfg.burn_in, move=move
    )
    k_cap = int(2 * window.volume + 3)
    hist = conditional_number_histogram(samples, window, k_max=k_cap)
    ratio = swap_ratio_probe(samples, window, 1, 2, u_list)
    reports = hist + ratio

    observed = [rep for rep in hist if rep.metadata.get("k", -1) <= k_cap]
    all_seen = all(rep.metadata["hits"] > 0 for rep in observed)
    spread_rep = ratio[-1]
    spread_ok = bool(spread_rep.metadata.get("within_factor", False))

    ks = [rep.metadata["k"] for rep in hist]
    freqs = [rep.value for rep in hist]
    errs = [rep.stderr for rep in hist]
    _emit(
        cfg,
        "rigidity",
        reports=reports,
        summary={
            "diagnostics": diag,
            "all_counts_observed": all_seen,
            "count_cap": k_cap,
            "swap_spread_ok": spread_ok,
        },
        figure=lambda p: figures.plot_count_histogram(p, ks, freqs, errs, window.volume),
    )
    print(f"counts observed up to cap {k_cap}: {all_seen}; swap spread ok: {spread_ok}")
    return 0 if (all_seen and spread_ok) else 1


def cmd_fluctuation(cfg: ExperimentConfig, args) -> int:
    pot = PeriodizedPotential.build(cfg.params, cfg.n).tabulate()
    state = _build_chain(cfg, pot)
    samples, diag = run_chain(
        state, cfg.steps, thin=cfg.thin, burn_in=cfg.burn_in
    )
    ks = [k for k in (2, 4, 8, 16, 32) if k <= cfg.n / 4]
    if len(ks) < 3:
        raise ConfigError("fluctuation probe needs n >= 32 so at least 3 window sizes fit")
    reports = number_fluctuation(samples, ks)
    slope = next(r for r in reports if r.name == "var_slope")
    variances = [r.value for r in reports if r.name.startswith("var[")]
    var_errs = [r.stderr for r in reports if r.name.startswith("var[")]
    _emit(
        cfg,
        "fluctuation",
        reports=reports,
        summary={"diagnostics": diag, "slope": slope.value, "slope_stderr": slope.stderr},
        figure=lambda p: figures.plot_fluctuation(p, ks, variances, var_errs, slope.value),
    )
    print(f"fitted log-log variance slope {slope.value:.3f} +- {slope.stderr:.3f} "
          f"(diagnostic only)")
    return 0


def cmd_freeenergy(cfg: ExperimentConfig, args) -> int:
    n_list = sorted({1, 2, 3, 4} | ({cfg.n} if cfg.n > 4 else set()))
    reports = free_energy_bounds_check(
        cfg.params, n_list, cfg.beta, seed=cfg.seed,
        quad=QuadratureSpec(points_per_axis=cfg.points_per_axis),
    )
    values = [rep.value for rep in reports]
    errs = [rep.stderr for rep in reports]
    lowers = [rep.metadata["lower"] for rep in reports]
    uppers = [rep.metadata["upper"] for rep in reports]
    all_inside = all(rep.metadata["inside"] for rep in reports)
    _emit(
        cfg,
        "freeenergy",
        reports=reports,
        summary={"all_inside": all_inside, "n_list": n_list},
        figure=lambda p: figures.plot_free_energy(p, n_list, values, errs, lowers, uppers),
    )
    for rep, n in zip(reports, n_list):
        print(f"n={n}: log Z/n = {rep.value:.6f} in "
              f"[{rep.metadata['lower']:.6f}, {rep.metadata['upper']:.6f}] "
              f"-> {'ok' if rep.metadata['inside'] else 'OUTSIDE'}")
    return 0 if all_inside else 1


def cmd_probe_compensator(cfg: ExperimentConfig, args) -> int:
    pot = PeriodizedPotential.build(cfg.params, cfg.n).tabulate()
    state = _build_chain(cfg, pot)
    samples, diag = run_chain(
        state, cfg.steps, thin=cfg.thin, burn_in=cfg.burn_in
    )
    p_list = [p for p in (4, 8, 16) if p <= cfg.n / 4]
    if not p_list:
        raise ConfigError("probe-compensator needs n >= 16 so p = 4 fits")
    x = 0.25
    reports = compensator_probe(cfg.params, samples, x, p_list)
    means = [r.value for r in reports if r.name.startswith("S_mean")]
    mean_errs = [r.stderr for r in reports if r.name.startswith("S_mean")]
    variances = [r.value for r in reports if r.name.startswith("S_var")]
    _emit(
        cfg,
        "compensator",
        reports=reports,
        summary={"diagnostics": diag, "x": x, "p_list": p_list},
        figure=lambda p: figures.plot_compensator(p, p_list, means, mean_errs, variances),
    )
    print(f"compensator partial sums at p={p_list}: means {[f'{m:.4f}' for m in means]} "
          f"(evidence only)")
    return 0


_HANDLERS = {
    "sample": cmd_sample,
    "verify": cmd_verify,
    "potential-table": cmd_potential_table,
    "dlr-test": cmd_dlr_test,
    "rigidity": cmd_rigidity,
    "fluctuation": cmd_fluctuation,
    "freeenergy": cmd_freeenergy,
    "probe-compensator": cmd_probe_compensator,
}

# subcommands that are deterministic reports can fall back to a fixed seed
# and harmless model defaults; sampling commands must be told everything
_DEFAULTS = {
    "verify": {"model": {"n": 2, "beta": 1.0}, "sampler": {"seed": 0}},
    "potential-table": {"model": {"beta": 1.0}, "sampler": {"seed": 0}},
    "dlr-test": {"model": {"n": 2, "beta": 1.0}, "sampler": {"seed": 0}},
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args, _DEFAULTS.get(args.command))
        return _HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except AccuracyError as exc:
        print(f"accuracy failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
