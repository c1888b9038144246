"""Command-line front end for delta estimation runs.

Configuration comes from three layers, each overriding the previous:
a named preset, an INI-style config file, and command-line flags.
Results go to a CSV with one row per component (per strike when
sweeping), serialized at full double precision so parsing the file
recovers the report exactly.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import sys

import numpy as np

from .estimator import METHODS, EstimationError, estimate
from .lt import build_lt_matrix
from .market import MarketConfig
from .payoffs import PayoffSpec
from .presets import DEFAULT_SEED, PRESETS, ladder_market, preset, standard_stream
from .qmc import MODES

PAYOFF_NAMES = {
    "asian-fixed": "call",
    "asian-floating": "floating",
    "digital": "digital",
    "exotic": "best_of",
}

EXIT_CONFIG = 2
EXIT_ESTIMATION = 3

_MARKET_KEYS = ("assets", "spots", "vols", "rate", "maturity", "dates",
                "correlation")
_PAYOFF_KEYS = ("kind", "strike")
_QMC_KEYS = ("points", "replications", "block", "seed", "mode")
_RUN_KEYS = ("method", "lt", "loc_delta", "fd_bump", "workers", "output")


class ConfigurationError(Exception):
    """Unusable configuration; the message names the offending field."""


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _floats(text: str) -> list[float]:
    return [float(token) for token in text.replace(",", " ").split()]


def _convert(section: str, key: str, text: str, conv):
    try:
        return conv(text)
    except ValueError:
        raise ConfigurationError(
            f"invalid value for {key} in [{section}]: {text!r}") from None


def _market_from_section(sect) -> MarketConfig:
    for name in ("rate", "maturity", "dates", "correlation"):
        if name not in sect:
            raise ConfigurationError(f"missing {name} entry in [market]")
    if "spots" in sect or "vols" in sect:
        for name in ("spots", "vols"):
            if name not in sect:
                raise ConfigurationError(f"missing {name} entry in [market]")
        spots = _convert("market", "spots", sect["spots"], _floats)
        vols = _convert("market", "vols", sect["vols"], _floats)
    elif "assets" in sect:
        count = _convert("market", "assets", sect["assets"], int)
        ladder = ladder_market(count, 1)
        spots, vols = ladder.spots, ladder.vols
    else:
        raise ConfigurationError("missing assets (or spots and vols) entry in [market]")
    rate = _convert("market", "rate", sect["rate"], float)
    maturity = _convert("market", "maturity", sect["maturity"], float)
    dates = _convert("market", "dates", sect["dates"], int)
    rho = _convert("market", "correlation", sect["correlation"], float)
    n = len(spots)
    correlation = np.full((n, n), rho)
    np.fill_diagonal(correlation, 1.0)
    times = maturity * np.arange(1, dates + 1) / dates
    return MarketConfig(spots=np.asarray(spots), rate=rate,
                        vols=np.asarray(vols), correlation=correlation,
                        maturity=maturity, monitoring_times=times)


def _load_file(path: str) -> tuple[MarketConfig | None, dict]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}") from None
    except configparser.Error as exc:
        raise ConfigurationError(f"config file parse error: {exc}") from None

    known = {"market": _MARKET_KEYS, "payoff": _PAYOFF_KEYS,
             "qmc": _QMC_KEYS, "run": _RUN_KEYS}
    for section in parser.sections():
        if section not in known:
            raise ConfigurationError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")

    market = _market_from_section(parser["market"]) if parser.has_section("market") else None
    updates: dict = {}
    if parser.has_section("payoff"):
        sect = parser["payoff"]
        if "kind" in sect:
            name = sect["kind"]
            if name not in PAYOFF_NAMES:
                raise ConfigurationError(
                    f"invalid value for kind in [payoff]: {name!r}")
            updates["kind"] = PAYOFF_NAMES[name]
        if "strike" in sect:
            updates["strike"] = _convert("payoff", "strike", sect["strike"], float)
    if parser.has_section("qmc"):
        sect = parser["qmc"]
        for key, target, conv in (("points", "points", int),
                                  ("replications", "reps", int),
                                  ("block", "lss_block", int),
                                  ("seed", "seed", int)):
            if key in sect:
                updates[target] = _convert("qmc", key, sect[key], conv)
        if "mode" in sect:
            mode = sect["mode"]
            if mode not in MODES:
                raise ConfigurationError(f"invalid value for mode in [qmc]: {mode!r}")
            updates["mode"] = mode
    if parser.has_section("run"):
        sect = parser["run"]
        if "method" in sect:
            if sect["method"] not in METHODS:
                raise ConfigurationError(
                    f"invalid value for method in [run]: {sect['method']!r}")
            updates["method"] = sect["method"]
        if "lt" in sect:
            if sect["lt"] not in ("on", "off"):
                raise ConfigurationError(
                    f"invalid value for lt in [run]: {sect['lt']!r}")
            updates["lt"] = sect["lt"] == "on"
        for key, conv in (("loc_delta", float), ("fd_bump", float),
                          ("workers", int)):
            if key in sect:
                updates[key] = _convert("run", key, sect[key], conv)
        if "output" in sect:
            updates["output"] = sect["output"]
    return market, updates


def _parse_sweep(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigurationError("sweep must be lo:hi:step")
    try:
        low, high, step = (float(part) for part in parts)
    except ValueError:
        raise ConfigurationError(f"sweep must be numeric, got {text!r}") from None
    if step <= 0 or high < low:
        raise ConfigurationError("sweep needs step > 0 and hi >= lo")
    strikes = np.arange(low, high + 0.5 * step, step)
    if (strikes <= 0).any():
        raise ConfigurationError("sweep strikes must be positive")
    return strikes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmcgreeks",
        description="Estimate per-asset deltas of path-average basket options.")
    parser.add_argument("--config", help="INI config file (market/payoff/qmc/run sections)")
    parser.add_argument("--preset", choices=PRESETS, help="named benchmark run")
    parser.add_argument("--payoff", choices=sorted(PAYOFF_NAMES))
    parser.add_argument("--strike", type=float)
    parser.add_argument("--method", choices=METHODS)
    parser.add_argument("--loc-delta", type=float, dest="loc_delta",
                        help="localization width as a fraction of the strike level")
    parser.add_argument("--fd-bump", type=float, dest="fd_bump",
                        help="relative spot bump for finite differences")
    parser.add_argument("--assets", type=int, help="ladder-market asset count")
    parser.add_argument("--steps", type=int, help="number of monitoring dates")
    parser.add_argument("--points", type=int, help="points per replication")
    parser.add_argument("--reps", type=int, help="number of replications")
    parser.add_argument("--lt", choices=("on", "off"),
                        help="dimension-reducing rotation of the draws")
    parser.add_argument("--lss-block", type=int, dest="lss_block",
                        help="supercube block dimension")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--sweep", help="strike sweep lo:hi:step")
    parser.add_argument("--workers", type=int, help="replication worker threads")
    parser.add_argument("--output", help="CSV output path (default stdout)")
    parser.add_argument("--debug-replications", dest="debug_replications",
                        metavar="PATH", help="also dump per-replication means")
    return parser


def _resolve(args) -> dict:
    values = {
        "kind": "call", "strike": 100.0, "method": "adaptive",
        "loc_delta": 0.01, "fd_bump": 0.01, "points": 2048, "reps": 32,
        "lt": True, "lss_block": 50, "seed": DEFAULT_SEED,
        "mode": "scrambled_sobol", "workers": 1, "output": None,
    }
    market: MarketConfig | None = None
    assets, steps = 10, 64

    if args.preset:
        chosen = preset(args.preset)
        values.update(kind=chosen.payoff.kind, strike=chosen.payoff.strike,
                      method=chosen.method)
        market = chosen.market
    if args.config:
        file_market, updates = _load_file(args.config)
        if file_market is not None:
            market = file_market
        values.update(updates)

    if args.payoff is not None:
        values["kind"] = PAYOFF_NAMES[args.payoff]
    if args.lt is not None:
        values["lt"] = args.lt == "on"
    for key in ("strike", "method", "loc_delta", "fd_bump", "points", "reps",
                "lss_block", "seed", "workers", "output"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    if args.assets is not None or args.steps is not None:
        if args.assets is not None:
            assets = args.assets
        if args.steps is not None:
            steps = args.steps
        market = None
    if market is None:
        market = ladder_market(assets, steps)

    values["market"] = market
    values["qmc"] = standard_stream(market.n_assets, market.n_dates,
                                    values["points"], values["reps"],
                                    values["lss_block"], values["seed"],
                                    values["mode"])
    values["strikes"] = _parse_sweep(args.sweep) if args.sweep else None
    values["debug_replications"] = args.debug_replications
    # constructing one spec up front surfaces strike/kind mismatches early
    PayoffSpec(kind=values["kind"],
               strike=float(values["strikes"][0]) if values["strikes"] is not None
               else values["strike"])
    return values


def _execute(values: dict) -> tuple[list[list], list[list]]:
    market = values["market"]
    qmc = values["qmc"]
    method = values["method"]
    sweeping = values["strikes"] is not None
    strikes = values["strikes"] if sweeping else [values["strike"]]

    lt_build = None
    if values["lt"]:
        lt_build = build_lt_matrix(market,
                                   PayoffSpec(kind=values["kind"],
                                              strike=float(strikes[0])))
    rows: list[list] = []
    replication_rows: list[list] = []
    for strike in strikes:
        spec = PayoffSpec(kind=values["kind"], strike=float(strike))
        report = estimate(market, spec, qmc, method,
                          use_lt=values["lt"],
                          loc_fraction=values["loc_delta"],
                          fd_bump=values["fd_bump"],
                          workers=values["workers"],
                          lt_build=lt_build)
        prefix = [_fmt(strike)] if sweeping else []
        for k in range(market.n_assets):
            rows.append(prefix + [k + 1, _fmt(report.deltas[k]),
                                  _fmt(report.stderrs[k]), report.method,
                                  int(report.rejected_by_component[k])])
        if values["debug_replications"]:
            for r in range(qmc.replications):
                for k in range(market.n_assets):
                    replication_rows.append(
                        prefix + [r + 1, k + 1,
                                  _fmt(report.replication_means[r, k])])
    return rows, replication_rows


def _write_csv(path: str | None, header: list[str], rows: list[list]) -> None:
    if path is None:
        csv.writer(sys.stdout).writerows([header] + rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerows([header] + rows)


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = _resolve(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows, replication_rows = _execute(values)
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION

    sweeping = values["strikes"] is not None
    header = ["component", "delta", "stderr", "method", "rejected_paths"]
    if sweeping:
        header = ["strike"] + header
    _write_csv(values["output"], header, rows)
    if values["debug_replications"]:
        debug_header = ["replication", "component", "mean"]
        if sweeping:
            debug_header = ["strike"] + debug_header
        _write_csv(values["debug_replications"], debug_header, replication_rows)
    return 0


def main() -> None:
    sys.exit(run())
