"""Command line driver.

Subcommands: ``simulate`` (scenario JSON to panel CSV plus ground truth),
``fit`` (panel CSV to model JSON), ``order`` (panel CSV to an order-search
report), ``factors`` (model JSON to a factor-series CSV), ``forecast``
(expanding-window evaluation CSV) and ``benchmark`` (scenario grid to an
aggregated results CSV).

All outputs go to files named by the caller, so repeated runs with the same
``--seed`` produce byte-identical artifacts.  Failures exit with 1 (usage),
2 (data) or 3 (numerical) and print a one-line JSON object on stderr with
the error class, message and exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .benchmark import read_grid, run_grid, write_rows
from .config import EstimationConfig
from .dgp import simulate_panel
from .errors import DataError, InvalidInput, MatfactorError, ParseError
from .estimate import FactorFit, build_m1, build_m2, fit
from .forecast import METHODS, rolling_evaluate
from .panel_io import (
    read_config,
    read_panel,
    read_scenario,
    write_factors_csv,
    write_panel,
    write_truth,
)
from .subspace import sym_eigen
from .wntest import diagonal_path_order

FORECAST_HEADER = "method,horizon,fe_frobenius,fe_spectral,n_windows"


class UsageError(MatfactorError):
    """Malformed command line."""


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting on bad usage."""

    def error(self, message: str) -> None:
        raise UsageError(message)


def _load_config(args: argparse.Namespace) -> EstimationConfig:
    config = read_config(args.config) if args.config else EstimationConfig()
    if getattr(args, "seed", None) is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def _write_json(payload: dict, path: str) -> None:
    Path(path).write_text(json.dumps(payload) + "\n")


def _cmd_simulate(args: argparse.Namespace) -> None:
    scenario = read_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    panel, truth = simulate_panel(scenario, replication=args.replication)
    write_panel(panel, args.panel)
    if args.truth:
        write_truth(truth, args.truth)
    print(f"simulate: wrote {args.panel} (T={scenario.T}, {scenario.p1}x{scenario.p2})")


def _cmd_fit(args: argparse.Namespace) -> None:
    loaded = read_panel(args.panel)
    result = fit(loaded.panel, _load_config(args))
    payload = result.to_dict()
    payload["n_imputed"] = loaded.n_imputed
    _write_json(payload, args.out)
    print(
        f"fit: wrote {args.out} (orders ({result.r1}, {result.r2}), "
        f"spikes ({result.k1}, {result.k2}), imputed {loaded.n_imputed})"
    )


def _cmd_order(args: argparse.Namespace) -> None:
    loaded = read_panel(args.panel)
    config = _load_config(args)
    Y = loaded.panel - loaded.panel.mean(axis=0)
    eig1 = sym_eigen(build_m1(Y, config.k0))
    eig2 = sym_eigen(build_m2(Y, config.k0))
    report = diagonal_path_order(Y, eig1.vectors, eig2.vectors, config)
    payload = report.to_dict()
    if not args.trace:
        payload["trace"] = []
    _write_json(payload, args.out)
    print(f"order: wrote {args.out} (orders ({report.r1}, {report.r2}))")


def _cmd_factors(args: argparse.Namespace) -> None:
    try:
        data = json.loads(Path(args.fit).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid fit JSON: {exc}") from exc
    try:
        result = FactorFit.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ParseError(f"fit JSON is missing fields: {exc}") from exc
    write_factors_csv(result.X, args.out)
    T, r1, r2 = result.X.shape
    print(f"factors: wrote {args.out} (T={T}, {r1}x{r2})")


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise UsageError(f"{what} must be a comma-separated integer list") from exc
    if not values:
        raise UsageError(f"{what} must be non-empty")
    return values


def _cmd_forecast(args: argparse.Namespace) -> None:
    loaded = read_panel(args.panel)
    horizons = _parse_int_list(args.horizons, "--horizons")
    methods = tuple(args.methods.split(","))
    rows = rolling_evaluate(
        loaded.panel,
        _load_config(args),
        horizons,
        tau_start=args.tau_start,
        tau_end=args.tau_end,
        methods=methods,
        freeze_orders=args.freeze_orders,
    )
    lines = [FORECAST_HEADER]
    lines.extend(
        f"{r.method},{r.horizon},{r.fe_frobenius:.17g},"
        f"{r.fe_spectral:.17g},{r.n_windows}"
        for r in rows
    )
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"forecast: wrote {args.out} ({len(rows)} rows)")


def _cmd_benchmark(args: argparse.Namespace) -> None:
    grid, grid_reps = read_grid(args.grid)
    replications = args.replications if args.replications is not None else grid_reps
    if replications is None:
        raise UsageError("replication count required (--replications or grid field)")
    if args.seed is not None:
        grid = [(name, replace(scen, seed=args.seed)) for name, scen in grid]
    config = read_config(args.config) if args.config else None
    if replications == 0:
        write_rows([], args.out)
        print(f"benchmark: wrote {args.out} (0 replications)")
        return
    rows = run_grid(grid, replications, config, args.threads)
    write_rows(rows, args.out)
    print(
        f"benchmark: wrote {args.out} "
        f"({len(grid)} scenarios x {replications} replications)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matfactor", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a panel from a scenario JSON")
    p.add_argument("scenario", help="scenario JSON path")
    p.add_argument("--panel", required=True, help="output panel CSV")
    p.add_argument("--truth", default=None, help="optional ground-truth JSON")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--replication", type=int, default=0, help="path substream index")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="estimate the factor model from a panel CSV")
    p.add_argument("panel", help="panel CSV path")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--config", default=None, help="estimation-config JSON overrides")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("order", help="run the order search on a panel CSV")
    p.add_argument("panel", help="panel CSV path")
    p.add_argument("--out", required=True, help="output report JSON")
    p.add_argument("--config", default=None, help="estimation-config JSON overrides")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--trace", action="store_true", help="include the tested blocks")
    p.set_defaults(func=_cmd_order)

    p = sub.add_parser("factors", help="export the factor series of a fit JSON")
    p.add_argument("fit", help="model JSON written by fit")
    p.add_argument("--out", required=True, help="output factor CSV")
    p.set_defaults(func=_cmd_factors)

    p = sub.add_parser("forecast", help="expanding-window forecast evaluation")
    p.add_argument("panel", help="panel CSV path")
    p.add_argument("--out", required=True, help="output evaluation CSV")
    p.add_argument("--config", default=None, help="estimation-config JSON overrides")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--horizons", default="1", help="comma-separated horizons")
    p.add_argument("--tau-start", type=int, default=None, help="first fit window end")
    p.add_argument("--tau-end", type=int, default=None, help="last forecast target")
    p.add_argument(
        "--methods",
        default="proposed",
        help=f"comma-separated subset of {','.join(METHODS)}",
    )
    p.add_argument(
        "--freeze-orders",
        action="store_true",
        help="reuse the orders selected at the first window",
    )
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("benchmark", help="run a scenario grid of replications")
    p.add_argument("grid", help="scenario grid JSON path")
    p.add_argument("--out", required=True, help="output results CSV")
    p.add_argument(
        "--replications", type=int, default=None, help="replications per scenario"
    )
    p.add_argument("--seed", type=int, default=None, help="override scenario seeds")
    p.add_argument("--config", default=None, help="estimation-config JSON overrides")
    p.add_argument("--threads", type=int, default=None, help="worker thread count")
    p.set_defaults(func=_cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except (MatfactorError, OSError) as exc:
        if isinstance(exc, (UsageError, InvalidInput)):
            code = 1
        elif isinstance(exc, (DataError, OSError)):
            code = 2
        else:
            code = 3
        payload = {
            "error": type(exc).__name__,
            "message": str(exc),
            "exit_code": code,
        }
        print(json.dumps(payload), file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
