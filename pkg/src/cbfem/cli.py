"""Command-line driver: price, surface, greeks, converge, mms, compare-fdm."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from . import analytics
from .config import COMMANDS, FORMATS, ConfigError, RunConfig, load_config
from .errors import CbfemError
from .fdm import fdm_grid, fdm_solve
from .fem import build_mesh
from .mms import spatial_sweep, temporal_sweep
from .stepper import full_solve

DEFAULT_FORMAT = {
    "price": "json",
    "surface": "csv",
    "greeks": "csv",
    "converge": "csv",
    "mms": "csv",
    "compare-fdm": "csv",
}


class Table:
    """Column-named rows plus a scalar summary, serialisable as CSV or JSON."""

    def __init__(self, columns: Sequence[str], rows: List[Sequence], summary: Optional[dict] = None):
        self.columns = list(columns)
        self.rows = rows
        self.summary = summary or {}

    def check_finite(self):
        for i, row in enumerate(self.rows):
            for name, value in zip(self.columns, row):
                if isinstance(value, float) and not math.isfinite(value):
                    raise ArithmeticError(f"non-finite {name} in output row {i}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self, cfg: RunConfig) -> str:
        record = {
            "command": cfg.command,
            "config": cfg.to_dict(),
            "summary": self.summary,
            "columns": self.columns,
            "rows": [list(r) for r in self.rows],
        }
        return json.dumps(record, indent=2, default=_json_default) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _mesh(cfg: RunConfig, n_elements=None, order=None):
    n = cfg["numerics"]
    return build_mesh(n["x_min"], n["x_max"], n_elements or n["n_elements"], order or n["order"])


def _solve(cfg: RunConfig, n_elements=None, n_t=None, order=None):
    n = cfg["numerics"]
    return full_solve(
        _mesh(cfg, n_elements, order), cfg.contract, cfg.market,
        theta=n["theta"], n_t=n_t or n["n_t"], cfg=cfg.newton,
    )


def _fdm(cfg: RunConfig, n_intervals, n_t):
    n = cfg["numerics"]
    grid = fdm_grid(n["x_min"], n["x_max"], n_intervals)
    return fdm_solve(grid, cfg.contract, cfg.market, theta=n["theta"], n_t=n_t, cfg=cfg.newton)


def cmd_price(cfg: RunConfig) -> Table:
    n = cfg["numerics"]
    start = time.perf_counter()
    surface = _solve(cfg)
    value = surface.price(cfg.market.s_init)
    iters = max((s.iterations for s in surface.stats), default=0)
    return Table(
        ["order", "n_elements", "n_t", "S", "U"],
        [[n["order"], n["n_elements"], n["n_t"], cfg.market.s_init, value]],
        {"U": value, "max_newton_iterations": iters, "seconds": time.perf_counter() - start},
    )


def cmd_surface(cfg: RunConfig) -> Table:
    s = _solve(cfg)
    rows = [
        [float(t), float(S), float(u), float(v)]
        for t, U_row, V_row in zip(s.times, s.U, s.V)
        for S, u, v in zip(s.s_values, U_row, V_row)
    ]
    return Table(["t", "S", "U", "V"], rows)


def cmd_greeks(cfg: RunConfig) -> Table:
    s = _solve(cfg)
    mesh = s.mesh
    chain = cfg["greeks"]["chain_rule_term"]
    rows = []
    for t, U_row in zip(s.times, s.U):
        S, delta, gamma = analytics.greeks_profile(mesh, U_row, cfg.market.s_init, chain)
        rows.extend([float(t), float(a), float(b), float(c)] for a, b, c in zip(S, delta, gamma))
    return Table(["t", "S", "delta", "gamma"], rows)


def _converge_point(args):
    cfg, n_e = args
    start = time.perf_counter()
    s = _solve(cfg, n_elements=n_e, n_t=n_e)
    iters = max((st.iterations for st in s.stats), default=0)
    return s.price(cfg.market.s_init), iters, time.perf_counter() - start


def _fdm_point(args):
    cfg, n_e, n_int = args
    return _fdm(cfg, n_int, n_e).price(cfg.market.s_init)


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cmd_converge(cfg: RunConfig) -> Table:
    sizes = cfg["sweep"]["n_elements"]
    results = _pmap(_converge_point, [(cfg, n) for n in sizes], cfg["sweep"]["jobs"])
    rows, prev = [], None
    for n, (value, iters, secs) in zip(sizes, results):
        change = 0.0 if prev is None else value - prev
        rows.append([n, n, cfg["numerics"]["order"], value, change, iters, secs])
        prev = value
    return Table(["n_elements", "n_t", "order", "U", "change", "max_newton_iterations", "seconds"], rows)


def cmd_compare_fdm(cfg: RunConfig) -> Table:
    sizes = cfg["sweep"]["n_elements"]
    order = cfg["numerics"]["order"]
    per = cfg["sweep"]["fdm_intervals_per_element"] or order
    jobs = cfg["sweep"]["jobs"]
    fem = _pmap(_converge_point, [(cfg, n) for n in sizes], jobs)
    fdm = _pmap(_fdm_point, [(cfg, n, per * n) for n in sizes], jobs)
    rows = [
        [n, n, per * n, f[0], d, f[0] - d]
        for n, f, d in zip(sizes, fem, fdm)
    ]
    return Table(["n_elements", "n_t", "fdm_intervals", f"fem_p{order}", "fdm", "difference"], rows)


def cmd_mms(cfg: RunConfig) -> Table:
    m = cfg["mms"]
    order = cfg["numerics"]["order"]
    kw = dict(theta=m["theta"], level=m["forcing_level"], load=m["forcing_load"])
    rows, summary = [], {}
    if m["study"] in ("temporal", "both"):
        runs, (o2, oi) = temporal_sweep(
            order, cfg.market, dtaus=tuple(m["temporal_dtaus"]),
            n_elements=m["temporal_n_elements"], **kw,
        )
        summary["temporal_order_l2"], summary["temporal_order_linf_l2"] = o2, oi
        rows += [["temporal", order, r.n_elements, r.h, r.dtau, r.error_l2, r.error_linf_l2, o2, oi] for r in runs]
    if m["study"] in ("spatial", "both"):
        runs, (o2, oi) = spatial_sweep(
            order, cfg.market, n_elements=tuple(m["spatial_n_elements"]), dtau=m["spatial_dtau"], **kw
        )
        summary["spatial_order_l2"], summary["spatial_order_linf_l2"] = o2, oi
        rows += [["spatial", order, r.n_elements, r.h, r.dtau, r.error_l2, r.error_linf_l2, o2, oi] for r in runs]
    return Table(
        ["study", "order", "n_elements", "h", "dtau", "error_l2", "error_linf_l2", "order_l2", "order_linf_l2"],
        rows, summary,
    )


HANDLERS = {
    "price": cmd_price,
    "surface": cmd_surface,
    "greeks": cmd_greeks,
    "converge": cmd_converge,
    "mms": cmd_mms,
    "compare-fdm": cmd_compare_fdm,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbfem", description="Convertible bond pricing with penalty finite elements.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML configuration file (defaults used when omitted)")
    p.add_argument("--no-defaults", action="store_true", help="require every contract/market/numerics key")
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--order", choices=("p1", "p2"))
    p.add_argument("--n-elements", type=int)
    p.add_argument("--n-t", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--jobs", type=int, help="worker processes for sweeps")
    return p


def _apply_overrides(cfg: RunConfig, args) -> None:
    if args.order:
        cfg.override("numerics", "order", 1 if args.order == "p1" else 2)
    for flag, key in (("n_elements", "n_elements"), ("n_t", "n_t"), ("theta", "theta"), ("rho", "rho")):
        value = getattr(args, flag)
        if value is not None:
            cfg.override("numerics", key, value)
    if args.jobs is not None:
        cfg.override("sweep", "jobs", args.jobs)


def _error(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["violations"] = exc.violations
    for attr in ("step", "iteration", "iterations", "residual"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, use_defaults=not args.no_defaults, command=args.command)
        _apply_overrides(cfg, args)
    except ConfigError as exc:
        return _error(exc, 2)
    except OSError as exc:
        return _error(exc, 3)

    out_path = args.out or cfg["output"]["path"]
    fmt = args.format or cfg["output"]["format"] or DEFAULT_FORMAT[args.command]
    try:
        table = HANDLERS[args.command](cfg)
        table.check_finite()
        text = table.to_csv() if fmt == "csv" else table.to_json(cfg)
        if out_path:
            with open(out_path, "w", encoding="utf-8") as fh:
                fh.write(text)
            if args.command == "price":
                print(format(table.summary["U"], ".17g"))
        else:
            sys.stdout.write(text)
    except OSError as exc:
        return _error(exc, 3)
    except (CbfemError, ArithmeticError, ValueError) as exc:
        return _error(exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
