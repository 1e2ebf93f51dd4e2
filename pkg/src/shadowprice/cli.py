"""Batch command-line front end.

Every subcommand reads parameters from flags and, optionally, a JSON config
file (flags win). Results go to stdout or ``--out`` as JSON with 17
significant digits, or CSV where a table makes sense.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence,
4 property failure (``verify`` only).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ShadowPriceError
from .gfunction import GFunction, expected_utility_g, separable_sqrt_g
from .harness import (
    CampaignOptions,
    dumps,
    run_continuity_campaign,
    run_dynamic_campaign,
    run_shadow_campaign,
    run_static_oracle_campaign,
    run_zone_campaign,
)
from .market import MarketState, Quote, UtilitySpec, build_lattice, make_terminal_g, validate_quote
from .shadow import ShadowOptions, shadow_quote, verify_shadow
from .static import SolveOptions, SolveStatus, solve_static
from .zones import BudgetLine, RectGrid, ZoneOptions, zone_map, zone_table_csv
from .dynamic import DynamicOptions, shadow_process, solve_dynamic, values_table_csv, verify_dynamic_equivalence

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_PROPERTY = 4

CAMPAIGNS = ("static", "zones", "continuity", "shadow", "dynamic")


class InputError(ShadowPriceError, ValueError):
    pass


@dataclass
class RunConfig:
    """Merged flag and config-file parameters."""

    command: str
    values: dict[str, Any] = field(default_factory=dict)
    config_path: Path | None = None

    def get(self, key: str, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def positive(self, key: str, default: float) -> float:
        v = float(self.get(key, default))
        if not (math.isfinite(v) and v > 0):
            raise InputError(f"{key} must be positive, got {v!r}")
        return v


# --------------------------------------------------------------------------
# parsing helpers
# --------------------------------------------------------------------------


def _floats(value, name: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        try:
            return [float(p) for p in parts]
        except ValueError:
            raise InputError(f"{name}: cannot parse {value!r} as a comma list of numbers") from None
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise InputError(f"{name}: expected a list of numbers, got {value!r}") from None


def _matrix(value, name: str) -> list[list[float]]:
    """Rows separated by ';' in flag form, or a nested list from a config file."""
    if isinstance(value, str):
        return [_floats(row, name) for row in value.split(";") if row.strip()]
    return [_floats(row, name) for row in value]


def _utility(value) -> UtilitySpec:
    if isinstance(value, UtilitySpec):
        return value
    if isinstance(value, dict):
        return UtilitySpec.from_config(value)
    return UtilitySpec.parse(str(value))


def _axis(value, name: str) -> list[float]:
    """Either an explicit list or ``lo:hi:n``."""
    if isinstance(value, str) and value.count(":") == 2:
        lo, hi, n = value.split(":")
        try:
            return np.linspace(float(lo), float(hi), int(n)).tolist()
        except ValueError:
            raise InputError(f"{name}: cannot parse range {value!r}") from None
    return _floats(value, name)


def _load_config(path: str | None) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file {p} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"{p}: top level must be an object")
    return cfg, p


def make_config(args: argparse.Namespace) -> RunConfig:
    cfg, path = _load_config(args.config)
    values = {k.replace("-", "_"): v for k, v in cfg.items()}
    for key, v in vars(args).items():
        if key in ("config", "command", "func") or v is None:
            continue
        values[key] = v
    return RunConfig(args.command, values, path)


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def _state(rc: RunConfig) -> MarketState:
    if rc.get("x") is None or rc.get("y") is None:
        raise InputError("both --x and --y are required")
    try:
        return MarketState(float(rc.get("x")), _floats(rc.get("y"), "y"))
    except ShadowPriceError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _quote(rc: RunConfig) -> Quote:
    if rc.get("bid") is None:
        raise InputError("--bid is required")
    bid = _floats(rc.get("bid"), "bid")
    ask = _floats(rc.get("ask"), "ask") if rc.get("ask") is not None else bid
    if len(bid) != len(ask):
        raise InputError(f"bid has {len(bid)} entries, ask has {len(ask)}")
    return validate_quote(Quote(bid, ask))


def _objective(rc: RunConfig, q: Quote) -> GFunction:
    """``liquidation`` (default), ``sqrt`` or an expected utility over ``--scenarios``."""
    kind = rc.get("objective")
    if kind is None:
        kind = "scenarios" if rc.get("scenarios") is not None else "liquidation"
    if kind == "sqrt":
        return separable_sqrt_g(q.dim)
    u = _utility(rc.get("utility", "log"))
    if kind == "liquidation":
        return make_terminal_g(u, q)
    if kind == "scenarios":
        if rc.get("scenarios") is None:
            raise InputError("objective 'scenarios' needs --scenarios")
        S = _matrix(rc.get("scenarios"), "scenarios")
        if any(len(row) != q.dim for row in S):
            raise InputError(f"every scenario needs {q.dim} prices")
        probs = _floats(rc.get("probs"), "probs") if rc.get("probs") is not None else None
        if probs is not None and (len(probs) != len(S) or abs(sum(probs) - 1.0) > 1e-9
                                  or min(probs) <= 0):
            raise InputError("probs must be positive, one per scenario, and sum to 1")
        return expected_utility_g(u, S, probs)
    raise InputError(f"unknown objective {kind!r}; expected liquidation, sqrt or scenarios")


def _solve_opts(rc: RunConfig) -> SolveOptions:
    base = SolveOptions()
    sweeps = int(rc.get("max_sweeps", base.max_sweeps))
    if sweeps < 1:
        raise InputError(f"max_sweeps must be at least 1, got {sweeps}")
    return SolveOptions(tol_val=rc.positive("tol_val", base.tol_val), tol_x=rc.positive("tol_x", base.tol_x),
                        max_sweeps=sweeps)


def _shadow_opts(rc: RunConfig, base: ShadowOptions | None = None) -> ShadowOptions:
    base = base or ShadowOptions()
    opts = replace(base, eps_trade=rc.positive("eps_trade", base.eps_trade), solve=_solve_opts(rc))
    if rc.get("eps_s") is not None:
        opts = replace(opts, eps_s_rel=rc.positive("eps_s", opts.eps_s_rel))
    return opts


def _threads(rc: RunConfig) -> int:
    n = int(rc.get("threads", 1))
    if n < 1:
        raise InputError(f"threads must be at least 1, got {n}")
    return n


def _lattice(rc: RunConfig):
    if rc.config_path is None:
        raise InputError("this command needs --config pointing at a lattice file")
    raw = json.loads(rc.config_path.read_text())
    lat = build_lattice(raw)
    init = lat.initial
    if rc.get("x") is not None or rc.get("y") is not None:
        init = _state(rc)
    if init is None:
        raise InputError("no initial state: give --x/--y or an 'initial' entry in the lattice file")
    if init.dim != lat.assets:
        raise InputError(f"initial state has {init.dim} assets, lattice has {lat.assets}")
    return lat, init


def _dynamic_opts(rc: RunConfig) -> DynamicOptions:
    base = DynamicOptions()
    return replace(base, solve=_solve_opts(rc), shadow=_shadow_opts(rc, base.shadow))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_solve_static(rc: RunConfig) -> tuple[int, str]:
    s, q = _state(rc), _quote(rc)
    if s.dim != q.dim:
        raise InputError(f"state has {s.dim} assets, quote has {q.dim}")
    g = _objective(rc, q)
    sol = solve_static(g, s, q, _solve_opts(rc))
    out = sol.to_dict()
    out.update(state=s.to_dict(), quote=q.to_dict(), objective=g.name)
    code = EXIT_NONCONVERGED if sol.status is SolveStatus.MAX_ITER else EXIT_OK
    return code, dumps(out)


def cmd_shadow(rc: RunConfig) -> tuple[int, str]:
    s, q = _state(rc), _quote(rc)
    if s.dim != q.dim:
        raise InputError(f"state has {s.dim} assets, quote has {q.dim}")
    g = _objective(rc, q)
    opts = _shadow_opts(rc)
    sq = shadow_quote(g, s, q, opts)
    chk = verify_shadow(g, s, q, sq, solve=opts.solve)
    out = sq.to_dict()
    out.update(chk.to_dict())
    out.update(state=s.to_dict(), quote=q.to_dict(), objective=g.name)
    return EXIT_OK, dumps(out)


def _grid(rc: RunConfig, q: Quote):
    grid = rc.get("grid") or {}
    line = grid.get("budget_line") if isinstance(grid, dict) else None
    if rc.get("budget_line") is not None:
        parts = str(rc.get("budget_line")).split(":")
        if len(parts) != 3:
            raise InputError("--budget-line expects wealth:asset:points")
        line = {"wealth": float(parts[0]), "asset": int(parts[1]), "points": int(parts[2])}
    if line is not None:
        return BudgetLine(float(line["wealth"]), int(line["asset"]), int(line["points"]), line.get("others"))
    cash = rc.get("cash_grid", grid.get("cash"))
    holdings = rc.get("holdings_grid", grid.get("holdings"))
    if cash is None or holdings is None:
        raise InputError("zone-map needs --cash-grid and --holdings-grid, or --budget-line")
    cash_axis = _axis(cash, "cash_grid")
    if isinstance(holdings, str) and ";" not in holdings:
        h_axes = [_axis(holdings, "holdings_grid")] * q.dim
    elif isinstance(holdings, str):
        h_axes = [_axis(h, "holdings_grid") for h in holdings.split(";")]
    else:
        h_axes = [_axis(h, "holdings_grid") for h in holdings]
    if len(h_axes) != q.dim:
        raise InputError(f"holdings grid has {len(h_axes)} axes, quote has {q.dim} assets")
    if min(cash_axis) < 0 or min(min(a) for a in h_axes) < 0:
        raise InputError("grid values must be nonnegative")
    return RectGrid(cash_axis, h_axes)


def cmd_zone_map(rc: RunConfig) -> tuple[int, str]:
    q = _quote(rc)
    g = _objective(rc, q)
    grid = _grid(rc, q)
    zopts = ZoneOptions(eps_trade=rc.positive("eps_trade", ZoneOptions().eps_trade), solve=_solve_opts(rc))
    rows = zone_map(g, q, grid, zopts, threads=_threads(rc))
    if rc.get("format", "csv") == "json":
        return EXIT_OK, dumps([
            {"state": r.state.to_dict(), "signature": list(r.signature.signs), "margins": r.margins.tolist()}
            for r in rows
        ])
    return EXIT_OK, zone_table_csv(rows, q.dim)


def cmd_solve_dynamic(rc: RunConfig) -> tuple[int, str]:
    lat, init = _lattice(rc)
    opts = _dynamic_opts(rc)
    sol = solve_dynamic(lat, init, opts)
    shadow_process(sol, opts.shadow)
    statuses = {pn.status for pn in sol.policy.walk()}
    code = EXIT_NONCONVERGED if SolveStatus.MAX_ITER.value in statuses else EXIT_OK
    if rc.get("format", "json") == "csv":
        return code, values_table_csv(sol)
    out = sol.to_dict()
    out["warnings"] = list(lat.warnings)
    return code, dumps(out)


def cmd_verify(rc: RunConfig) -> tuple[int, str]:
    campaign = rc.get("campaign")
    if campaign is None:
        lat, init = _lattice(rc)
        chk = verify_dynamic_equivalence(lat, init, _dynamic_opts(rc))
        out = chk.to_dict()
        out["warnings"] = list(lat.warnings)
        return (EXIT_OK if chk.passed else EXIT_PROPERTY), dumps(out)

    seed = int(rc.get("seed", 0))
    copts = CampaignOptions(eps_trade=rc.positive("eps_trade", CampaignOptions().eps_trade),
                            threads=_threads(rc))
    n = rc.get("n")
    names = CAMPAIGNS[:-1] if campaign == "all" else (campaign,)
    reports = []
    for name in names:
        kw = {} if n is None else {"n": int(n)}
        if name == "static":
            reports.append(run_static_oracle_campaign(seed=seed, opts=copts, **kw))
        elif name == "zones":
            reports.append(run_zone_campaign(seed=seed, opts=copts, **kw))
        elif name == "continuity":
            reports.append(run_continuity_campaign(seed=seed, opts=copts, **kw))
        elif name == "shadow":
            reports.append(run_shadow_campaign(seed=seed, opts=copts, **kw))
        elif name == "dynamic":
            suite = rc.get("suite")
            if not suite:
                raise InputError("the dynamic campaign needs --suite with lattice files")
            paths = [Path(p) for p in (suite if isinstance(suite, list) else [suite])]
            for p in paths:
                if not p.exists():
                    raise InputError(f"suite file {p} does not exist")
            reports.append(run_dynamic_campaign(paths, copts, seed=seed))
        else:
            raise InputError(f"unknown campaign {name!r}")
    ok = all(r.passed for r in reports)
    if rc.get("format", "json") == "text":
        body = "".join(r.to_text() for r in reports)
    else:
        body = "[" + ",".join(r.to_json().rstrip("\n") for r in reports) + "]"
    return (EXIT_OK if ok else EXIT_PROPERTY), body


COMMANDS = {
    "solve-static": cmd_solve_static,
    "shadow": cmd_shadow,
    "zone-map": cmd_zone_map,
    "solve-dynamic": cmd_solve_dynamic,
    "verify": cmd_verify,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (a lattice file for solve-dynamic/verify)")
    common.add_argument("--x", type=float, help="cash")
    common.add_argument("--y", help="holdings, comma separated")
    common.add_argument("--bid", help="bid prices, comma separated")
    common.add_argument("--ask", help="ask prices, comma separated (default: bid)")
    common.add_argument("--utility", help="log, power:G or exp:A")
    common.add_argument("--objective", choices=["liquidation", "sqrt", "scenarios"])
    common.add_argument("--scenarios", help="scenario prices, rows separated by ';'")
    common.add_argument("--probs", help="scenario probabilities, comma separated")
    common.add_argument("--tol-val", type=float, dest="tol_val")
    common.add_argument("--tol-x", type=float, dest="tol_x")
    common.add_argument("--max-sweeps", type=int, dest="max_sweeps", help="solver sweep budget")
    common.add_argument("--eps-trade", type=float, dest="eps_trade")
    common.add_argument("--eps-s", type=float, dest="eps_s", help="relative endpoint resolution")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--format", choices=["json", "csv", "text"])
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="shadowprice", description="Optimal trading under bid-ask spreads and shadow prices.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve-static", parents=[common], help="one-period optimal trade")
    sub.add_parser("shadow", parents=[common], help="shadow prices at one state")
    zm = sub.add_parser("zone-map", parents=[common], help="classify a grid of states")
    zm.add_argument("--cash-grid", dest="cash_grid", help="lo:hi:n or comma list")
    zm.add_argument("--holdings-grid", dest="holdings_grid",
                    help="lo:hi:n or comma list, one axis per asset separated by ';'")
    zm.add_argument("--budget-line", dest="budget_line", help="wealth:asset:points")
    sub.add_parser("solve-dynamic", parents=[common], help="multi-period solve on a lattice")
    vf = sub.add_parser("verify", parents=[common], help="property checks")
    vf.add_argument("--campaign", choices=CAMPAIGNS + ("all",))
    vf.add_argument("--n", type=int, help="instances per campaign")
    vf.add_argument("--suite", nargs="+", help="lattice files for the dynamic campaign")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = make_config(args)
        code, body = COMMANDS[args.command](rc)
    except (ShadowPriceError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not body.endswith("\n"):
        body += "\n"
    if rc.get("out"):
        Path(rc.get("out")).write_text(body)
    else:
        sys.stdout.write(body)
    return code


if __name__ == "__main__":
    sys.exit(main())
