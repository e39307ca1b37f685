"""Batch command-line front end.

Every subcommand emits machine-parseable JSON records or CSV tables; with
``--out DIR`` the artifacts land in files next to a run manifest that can be
replayed to bit-identical outputs.  Exit codes: 0 ok, 1 verification
mismatch, 2 usage, 3 domain error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib.metadata import PackageNotFoundError, version as pkg_version
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .hindsight import intrinsic_value
from .lattice import (
    LatticeSpec,
    LatticeState,
    demon_simulation,
    lattice_payoff,
    lattice_price,
)
from .market import MarketSpec, load_market_spec, validate_market
from .mc import mc_price
from .pricing import (
    greeks,
    implied_vols,
    price_levered,
    price_unlevered,
    time0_unlevered_excess_growth,
)
from .replication import (
    SimulationConfig,
    discrete_backtest,
    hedge_path,
    load_price_table,
    run_growth_simulation,
    scenario_spec,
)
from .market import simulate_paths

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4


def _tool_version() -> str:
    try:
        return pkg_version("hindsight-options")
    except PackageNotFoundError:
        return "unknown"


def _json(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def _csv(header: list[str], rows: list[list]) -> str:
    def cell(x) -> str:
        if isinstance(x, float):
            return repr(float(x))  # shortest round-trip, plain-float repr
        return str(x)

    lines = [",".join(header)]
    lines.extend(",".join(cell(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"


def _add_market_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="market spec file (overridden by flags)")
    parser.add_argument("--sigma", type=float, help="volatility (single asset)")
    parser.add_argument("--r", type=float, help="risk-free rate")
    parser.add_argument("--mu", type=float, help="drift (single asset; defaults to r)")
    parser.add_argument("--s0", type=float, help="initial price (single asset)")


def _build_spec(args) -> MarketSpec:
    if args.config:
        spec = load_market_spec(args.config)
        if any(getattr(args, f, None) is not None for f in ("sigma", "mu", "s0")) and spec.n != 1:
            raise ValidationError("single-asset flags cannot override a multi-asset config")
        if spec.n == 1:
            sigma = args.sigma if args.sigma is not None else float(spec.sigma[0])
            rate = args.r if args.r is not None else spec.rate
            mu = args.mu if args.mu is not None else float(spec.mu[0])
            s0 = args.s0 if args.s0 is not None else float(spec.s0[0])
            spec = MarketSpec.single(mu=mu, sigma=sigma, rate=rate, s0=s0)
        elif args.r is not None:
            spec = MarketSpec(n=spec.n, mu=spec.mu, sigma=spec.sigma,
                              corr=spec.corr, rate=args.r, s0=spec.s0)
        return validate_market(spec)
    if args.sigma is None:
        raise ValidationError("either --config or --sigma is required")
    rate = args.r if args.r is not None else 0.0
    mu = args.mu if args.mu is not None else rate
    s0 = args.s0 if args.s0 is not None else 1.0
    return validate_market(MarketSpec.single(mu=mu, sigma=args.sigma, rate=rate, s0=s0))


def _parse_prices(text: str, n: int) -> np.ndarray:
    values = [float(tok) for tok in text.replace(",", " ").split()]
    if len(values) != n:
        raise ValidationError(f"expected {n} prices in --s, got {len(values)}")
    return np.asarray(values)


def _emit(args, command: str, params: dict, artifacts: dict[str, str],
          stdout_artifact: str) -> None:
    """Print the primary artifact; with --out, also write files and a manifest."""
    sys.stdout.write(artifacts[stdout_artifact])
    if not artifacts[stdout_artifact].endswith("\n"):
        sys.stdout.write("\n")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, content in artifacts.items():
            (out_dir / name).write_text(content, encoding="utf-8")
        argv = [command]
        for key, value in sorted(params.items()):
            if value is None or value is False:
                continue
            flag = "--" + key.replace("_", "-")
            if value is True:
                argv.append(flag)
            else:
                argv.extend([flag, str(value)])
        manifest = {
            "command": command,
            "parameters": params,
            "seed": params.get("seed"),
            "outputs": sorted(artifacts),
            "version": _tool_version(),
            "argv": argv,
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _cmd_price(args) -> int:
    spec = _build_spec(args)
    s = _parse_prices(args.s, spec.n)
    if args.mode == "levered":
        quote = price_levered(spec, s, args.t, args.T)
    else:
        quote = price_unlevered(spec, s, args.t, args.T)
    params = dict(mode=args.mode, config=args.config, sigma=args.sigma, r=args.r,
                  mu=args.mu, s0=args.s0, s=args.s, t=args.t, T=args.T)
    _emit(args, "price", params, {"quote.json": _json(quote.as_record()) + "\n"},
          "quote.json")
    return EXIT_OK


def _cmd_greeks(args) -> int:
    spec = _build_spec(args)
    s = _parse_prices(args.s, spec.n)
    report = greeks(spec, s, args.t, args.T)
    params = dict(config=args.config, sigma=args.sigma, r=args.r, mu=args.mu,
                  s0=args.s0, s=args.s, t=args.t, T=args.T)
    _emit(args, "greeks", params, {"greeks.json": _json(report.as_record()) + "\n"},
          "greeks.json")
    return EXIT_OK


def _cmd_iv(args) -> int:
    roots = implied_vols(args.price, args.s, args.s0, args.t, args.T, args.r)
    record = {"roots": list(roots.roots), "observed_price": args.price,
              "t": args.t, "T": args.T}
    params = dict(price=args.price, s=args.s, s0=args.s0, t=args.t, T=args.T,
                  r=args.r)
    _emit(args, "iv", params, {"iv.json": _json(record) + "\n"}, "iv.json")
    return EXIT_OK


def _cmd_lattice(args) -> int:
    params = dict(what=args.what, u=args.u, d=args.d, rper=args.rper, N=args.N,
                  mode=args.mode, k=args.k, n=args.n, j=args.j, p=args.p,
                  seed=args.seed)
    if args.what == "demon":
        ledger = demon_simulation(args.N, args.p, args.seed)
        rows = [[int(s), int(k), float(st), float(w)] for s, k, st, w in ledger.rows()]
        artifacts = {"demon.csv": _csv(["step", "upticks", "stock", "wealth"], rows)}
        _emit(args, "lattice", params, artifacts, "demon.csv")
        return EXIT_OK
    spec = LatticeSpec(u=args.u, d=args.d, r_per=args.rper, n_steps=args.N)
    if args.what == "payoff":
        if args.j is None:
            raise ValidationError("--j is required for payoff")
        value = lattice_payoff(spec, args.j, args.mode)
        record = {"payoff": value, "j": args.j, "N": args.N, "mode": args.mode}
        _emit(args, "lattice", params, {"payoff.json": _json(record) + "\n"},
              "payoff.json")
        return EXIT_OK
    if args.k is None or args.n is None:
        raise ValidationError("--k and --n are required for price")
    value = lattice_price(spec, LatticeState(args.k, args.n), args.mode)
    record = {"price": value, "k": args.k, "n": args.n, "N": args.N,
              "mode": args.mode}
    _emit(args, "lattice", params, {"price.json": _json(record) + "\n"},
          "price.json")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.scenario == "custom":
        if not args.config:
            raise ValidationError("custom scenario requires --config")
        spec = load_market_spec(args.config)
    else:
        spec = scenario_spec(args.scenario)
    config = SimulationConfig(spec=spec, T=args.T, warmup=args.warmup,
                              steps_per_year=args.steps_per_year,
                              n_paths=args.paths, seed=args.seed,
                              scenario=args.scenario)
    result = run_growth_simulation(config)
    rows = [[p, float(result.terminal_wealth[p]), float(result.cagr[p])]
            for p in range(config.n_paths)]
    summary = {
        "scenario": args.scenario,
        "mean_cagr": result.mean_cagr,
        "kelly_growth_rate": result.kelly_growth_rate,
        "kelly_fractions": [float(b) for b in result.kelly_fractions],
        "paths": config.n_paths,
        "T": config.T,
        "warmup": config.warmup,
    }
    params = dict(scenario=args.scenario, config=args.config, T=args.T,
                  warmup=args.warmup, steps_per_year=args.steps_per_year,
                  paths=args.paths, seed=args.seed)
    artifacts = {
        "paths.csv": _csv(["path", "terminal_wealth", "cagr"], rows),
        "summary.json": _json(summary) + "\n",
    }
    _emit(args, "simulate", params, artifacts, "summary.json")
    return EXIT_OK


def _cmd_hedge(args) -> int:
    spec = _build_spec(args)
    steps = args.steps
    path = simulate_paths(spec, args.T, steps, 1, measure=args.measure,
                          seed=args.seed)[0]
    ledger = hedge_path(spec, path, args.t0, args.T, mode=args.mode)
    rows = []
    n = ledger.fractions.shape[1]
    header = (["time", "wealth", "cash"]
              + [f"fraction_{i + 1}" for i in range(n)]
              + [f"shares_{i + 1}" for i in range(n)])
    for k in range(len(ledger.times)):
        rows.append([float(ledger.times[k]), float(ledger.wealth[k]),
                     float(ledger.cash[k]), *map(float, ledger.fractions[k]),
                     *map(float, ledger.shares[k])])
    summary = {
        "terminal_wealth": float(ledger.wealth[-1]),
        "mode": args.mode,
        "t0": args.t0,
        "T": args.T,
        "steps": steps,
        "intrinsic_at_expiry": intrinsic_value(spec, path.prices[-1], args.T,
                                               args.mode),
    }
    params = dict(config=args.config, sigma=args.sigma, r=args.r, mu=args.mu,
                  s0=args.s0, t0=args.t0, T=args.T, steps=steps, mode=args.mode,
                  measure=args.measure, seed=args.seed)
    artifacts = {"ledger.csv": _csv(header, rows),
                 "summary.json": _json(summary) + "\n"}
    _emit(args, "hedge", params, artifacts, "summary.json")
    return EXIT_OK


def _cmd_backtest(args) -> int:
    table = load_price_table(args.prices)
    fractions = [float(tok) for tok in args.b.replace(",", " ").split()]
    result = discrete_backtest(table, fractions, rebalance_interval=args.interval,
                               rate=args.rate)
    rows = [[float(t), float(w)] for t, w in zip(result.times, result.wealth)]
    summary = {"cagr": result.cagr, "ruined": result.ruined,
               "ruin_index": result.ruin_index,
               "terminal_wealth": float(result.wealth[-1]),
               "periods": len(result.wealth) - 1}
    params = dict(prices=args.prices, b=args.b, interval=args.interval,
                  rate=args.rate)
    artifacts = {"wealth.csv": _csv(["time", "wealth"], rows),
                 "summary.json": _json(summary) + "\n"}
    _emit(args, "backtest", params, artifacts, "summary.json")
    return EXIT_OK


def _random_correlation(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n + 2))
    cov = a @ a.T
    d = 1.0 / np.sqrt(np.diag(cov))
    return d[:, None] * cov * d[None, :]


def _cmd_verify(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0xC0FFEE)))
    rows = []
    all_ok = True
    for state_idx in range(args.states):
        n = args.n
        sigma = rng.uniform(0.15, 0.8, size=n)
        corr = _random_correlation(rng, n) if n > 1 else np.eye(1)
        rate = rng.uniform(0.0, 0.05)
        horizon = rng.uniform(1.0, 4.0)
        t = rng.uniform(0.1, 0.9) * horizon
        spec = validate_market(MarketSpec(n=n, mu=np.full(n, rate), sigma=sigma,
                                          corr=corr, rate=rate, s0=np.ones(n)))
        shock = rng.standard_normal(n) @ np.linalg.cholesky(corr).T
        s = np.exp((rate - 0.5 * sigma**2) * t + sigma * np.sqrt(t) * shock)
        modes = ["levered"] if n > 1 else ["levered", "unlevered"]
        for mode in modes:
            if mode == "levered":
                closed = price_levered(spec, s, t, horizon).price
            else:
                closed = price_unlevered(spec, s, t, horizon).price
            est = mc_price(spec, s, t, horizon, mode, n_paths=args.paths,
                           seed=args.seed + 101 * state_idx)
            gap = abs(closed - est.mean)
            ok = gap < 4.0 * est.std_error
            all_ok &= ok
            rows.append([mode, n, float(t), float(horizon), closed, est.mean,
                         est.std_error, gap / est.std_error if est.std_error else 0.0,
                         "ok" if ok else "FAIL"])
    table = _csv(["mode", "n", "t", "T", "closed", "mc_mean", "mc_std_error",
                  "gap_in_std_errors", "status"], rows)
    params = dict(n=args.n, states=args.states, paths=args.paths, seed=args.seed)
    _emit(args, "verify", params, {"verify.csv": table}, "verify.csv")
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def _cmd_curve(args) -> int:
    params = dict(what=args.what, sigmas=args.sigmas, r=args.r, s0=args.s0,
                  t=args.t, T=args.T, lo=args.lo, hi=args.hi, count=args.count,
                  mode=args.mode)
    sigmas = [float(tok) for tok in args.sigmas.replace(",", " ").split()]
    header_sigmas = [f"sigma_{s:g}" for s in sigmas]
    if args.what == "payoff":
        grid = np.linspace(args.lo, args.hi, args.count)
        rows = []
        for s_val in grid:
            row = [float(s_val)]
            for sig in sigmas:
                spec = MarketSpec.single(mu=args.r, sigma=sig, rate=args.r,
                                         s0=args.s0)
                row.append(intrinsic_value(spec, s_val, args.t, args.mode))
            rows.append(row)
        artifacts = {"payoff_curve.csv": _csv(["s"] + header_sigmas, rows)}
        _emit(args, "curve", params, artifacts, "payoff_curve.csv")
        return EXIT_OK
    grid = np.linspace(args.lo, args.hi, args.count)
    rows = []
    for horizon in grid:
        rows.append([float(horizon)]
                    + [time0_unlevered_excess_growth(sig, horizon) for sig in sigmas])
    artifacts = {"regret_curve.csv": _csv(["T"] + header_sigmas, rows)}
    _emit(args, "curve", params, artifacts, "regret_curve.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hindsight-options",
        description="Price, hedge, and simulate the hindsight allocation option.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", help="directory for artifacts plus a run manifest")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("price", help="closed-form quote")
    _add_market_args(p)
    p.add_argument("--mode", choices=["levered", "unlevered"], default="levered")
    p.add_argument("--s", required=True, help="current price(s), comma-separated")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    common(p)
    p.set_defaults(handler=_cmd_price)

    p = sub.add_parser("greeks", help="levered sensitivities (one asset)")
    _add_market_args(p)
    p.add_argument("--s", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    common(p)
    p.set_defaults(handler=_cmd_greeks)

    p = sub.add_parser("iv", help="implied volatilities from an observed price")
    p.add_argument("--price", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--s0", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--r", type=float, default=0.0)
    common(p)
    p.set_defaults(handler=_cmd_iv)

    p = sub.add_parser("lattice", help="binomial-lattice price/payoff/demon run")
    p.add_argument("--what", choices=["price", "payoff", "demon"], default="price")
    p.add_argument("--u", type=float, default=2.0)
    p.add_argument("--d", type=float, default=0.5)
    p.add_argument("--rper", type=float, default=0.0)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--mode", choices=["levered", "unlevered"], default="levered")
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--j", type=int)
    p.add_argument("--p", type=float, default=0.5, help="coin bias for demon runs")
    common(p)
    p.set_defaults(handler=_cmd_lattice)

    p = sub.add_parser("simulate", help="long-horizon growth experiment")
    p.add_argument("--scenario", choices=["sim1", "sim2", "sim3", "custom"],
                   required=True)
    p.add_argument("--config", help="market spec for custom scenarios")
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--warmup", type=float, default=5.0)
    p.add_argument("--steps-per-year", type=int, default=12)
    p.add_argument("--paths", type=int, default=100)
    common(p)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("hedge", help="replicate along one simulated path")
    _add_market_args(p)
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--mode", choices=["levered", "unlevered"], default="levered")
    p.add_argument("--measure", choices=["physical", "risk_neutral"],
                   default="physical")
    common(p)
    p.set_defaults(handler=_cmd_hedge)

    p = sub.add_parser("backtest", help="fixed-fraction rebalancing on CSV prices")
    p.add_argument("--prices", required=True, help="CSV: date-or-time, prices...")
    p.add_argument("--b", required=True, help="fractions, comma-separated")
    p.add_argument("--interval", type=int, default=1)
    p.add_argument("--rate", type=float, default=0.0,
                   help="simple rate per rebalance interval")
    common(p)
    p.set_defaults(handler=_cmd_backtest)

    p = sub.add_parser("verify", help="closed forms vs. the Monte Carlo oracle")
    p.add_argument("--n", type=int, choices=[1, 2, 3], default=1)
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--paths", type=int, default=200_000)
    common(p)
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("curve", help="plot-ready payoff / regret tables")
    p.add_argument("--what", choices=["payoff", "regret"], required=True)
    p.add_argument("--sigmas", default="0.3", help="volatilities, comma-separated")
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--s0", type=float, default=100.0)
    p.add_argument("--t", type=float, default=5.0)
    p.add_argument("--T", type=float, default=5.0)
    p.add_argument("--mode", choices=["levered", "unlevered"], default="levered")
    p.add_argument("--lo", type=float, default=50.0)
    p.add_argument("--hi", type=float, default=200.0)
    p.add_argument("--count", type=int, default=151)
    common(p)
    p.set_defaults(handler=_cmd_curve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
