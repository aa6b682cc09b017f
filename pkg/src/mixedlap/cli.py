"""Command-line front end: solve | spectrum | verify | continue-p | continue-s | extend.

Every run writes a JSON report {version, config, environment, results[]}
plus optional CSV and SVG artifacts to --out, all atomically.  Exit status:
0 when every check passes, 2 when any check fails, 1 on runtime/usage
errors.  Reruns with the same config and seed produce byte-identical JSON
except for the timestamp line.
"""

from __future__ import annotations

import argparse
import datetime
import logging
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy

from . import __version__, svgplot
from .assemble import apply_fractional
from .config import ConfigError, RunConfig, merge_config, parse_config_file
from .extension import cs_extend, moment_limit, neumann_trace
from .groundstate import ProblemParams, solve_ground_state
from .opcache import OperatorCache
from .report import render_csv, render_json, write_text_atomic
from .spectral import sigma_spectrum
from .verify import (
    _operator,
    check_nondegeneracy,
    check_theorem1,
    continue_in_p,
    continue_in_s,
    ground_state_contract,
    negative_control_shifted_potential,
    negative_control_third_eigenfunction,
)

log = logging.getLogger(__name__)

_COMMANDS = ("solve", "spectrum", "verify", "continue-p", "continue-s", "extend")
_FLAG_FIELDS = ("dim", "s", "p", "lam", "mesh", "grading", "rmax", "quad",
                "tol", "seed", "jobs", "out", "format", "negative_control")


class _Parser(argparse.ArgumentParser):
    # usage problems are runtime errors (exit 1), never "failed checks"
    def error(self, message):
        raise ConfigError(message)


def _formats(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--dim", type=int, help="space dimension N >= 2")
    sp.add_argument("--s", type=float, help="fractional order in (0, 1)")
    sp.add_argument("--p", type=float, help="nonlinearity exponent in (2, 2*)")
    sp.add_argument("--lambda", dest="lam", type=float, help="zeroth-order coefficient")
    sp.add_argument("--mesh", type=int, metavar="M", help="number of radial elements")
    sp.add_argument("--grading", type=float, metavar="G", help="boundary mesh grading")
    sp.add_argument("--rmax", type=float, help="exterior truncation radius")
    sp.add_argument("--quad", type=int, help="angular quadrature order")
    sp.add_argument("--tol", type=float, help="solver residual tolerance")
    sp.add_argument("--seed", type=int, help="seed for all randomness")
    sp.add_argument("--jobs", type=int, help="worker pool size (default: logical cores)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--format", type=_formats, help="artifact formats: json,csv,svg")
    sp.add_argument("--config", help="key = value config file (flags override)")


def build_config(argv) -> RunConfig:
    parser = _Parser(prog="mixedlap",
                     description="Mixed local/nonlocal ground states and "
                                 "theorem verification on the unit ball.")
    parser.add_argument("--version", action="version",
                        version=f"mixedlap {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = subs.add_parser(name)
        _add_common(sp)
        if name == "verify":
            sp.add_argument("--negative-control", dest="negative_control",
                            choices=("third-eigenfunction", "shifted-potential"))
    args = parser.parse_args(argv)
    file_fields = parse_config_file(args.config) if args.config else {}
    flag_fields = {k: getattr(args, k, None) for k in _FLAG_FIELDS}
    return merge_config(args.command, file_fields, flag_fields)


def _environment() -> dict:
    return {
        "build": f"mixedlap-{__version__}",
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _battery_kwargs(cfg: RunConfig, cache: OperatorCache) -> dict:
    return {"m": cfg.mesh, "grading": cfg.grading, "cache": cache,
            "tol": cfg.tol, "quad": cfg.quad, "rmax": cfg.rmax}


def _prebuild_sectors(cfg: RunConfig, cache: OperatorCache, sectors) -> None:
    """Assemble the requested sector operators, fanning out across jobs."""
    jobs = min(cfg.resolved_jobs(), len(sectors))

    def build(l):
        return _operator(cfg.dim, cfg.s, l, cfg.mesh, cfg.grading, cache,
                         cfg.quad, cfg.rmax)

    if jobs <= 1:
        for l in sectors:
            build(l)
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        list(pool.map(build, sectors))


def _cmd_solve(cfg: RunConfig, cache: OperatorCache):
    op = _operator(cfg.dim, cfg.s, 0, cfg.mesh, cfg.grading, cache,
                   cfg.quad, cfg.rmax)
    sol = solve_ground_state(op, cfg.problem(), tol=cfg.tol)
    rep = ground_state_contract(sol)
    r = op.mesh.nodes
    figures = {"profile.svg": svgplot.line_plot(
        [(r, sol.profile.values, "u")],
        title="ground state", xlabel="r", ylabel="u(r)")}
    lines = ["r,u"] + [f"{a!r},{b!r}" for a, b in zip(r, sol.profile.values)]
    tables = {"profile.csv": "\n".join(lines) + "\n"}
    return rep.results(), figures, tables


def _cmd_spectrum(cfg: RunConfig, cache: OperatorCache):
    _prebuild_sectors(cfg, cache, (0, 1, 2))
    params = cfg.problem()
    rep = check_nondegeneracy(params, **_battery_kwargs(cfg, cache))
    op = _operator(cfg.dim, cfg.s, 0, cfg.mesh, cfg.grading, cache,
                   cfg.quad, cfg.rmax)
    sol = solve_ground_state(op, params, tol=cfg.tol)
    sig = sigma_spectrum(op, sol, k=3)
    r = op.mesh.nodes
    curves = [(r, f.values, f"w{j + 1}") for j, f in enumerate(sig.functions)]
    figures = {"eigenfunctions.svg": svgplot.line_plot(
        curves, title="linearized eigenfunctions", xlabel="r", ylabel="w(r)")}
    lines = ["r," + ",".join(f"w{j + 1}" for j in range(len(sig.functions)))]
    for i, ri in enumerate(r):
        lines.append(",".join([repr(float(ri))] +
                              [repr(float(f.values[i])) for f in sig.functions]))
    tables = {"eigenfunctions.csv": "\n".join(lines) + "\n"}
    return rep.results(), figures, tables


def _cmd_verify(cfg: RunConfig, cache: OperatorCache):
    params = cfg.problem()
    kw = _battery_kwargs(cfg, cache)
    if cfg.negative_control == "third-eigenfunction":
        rep = negative_control_third_eigenfunction(params, **kw)
        return rep.results(), {}, {}
    if cfg.negative_control == "shifted-potential":
        _prebuild_sectors(cfg, cache, (0, 1, 2))
        rep = negative_control_shifted_potential(params, **kw)
        return rep.results(), {}, {}
    _prebuild_sectors(cfg, cache, (0, 1, 2))
    rep1 = check_theorem1(params, **kw)
    rep2 = check_nondegeneracy(params, **kw)
    op = _operator(cfg.dim, cfg.s, 0, cfg.mesh, cfg.grading, cache,
                   cfg.quad, cfg.rmax)
    sol = solve_ground_state(op, params, tol=cfg.tol)
    sig = sigma_spectrum(op, sol, k=2)
    w2 = sig.functions[1]
    figures = {"w2.svg": svgplot.line_plot(
        [(op.mesh.nodes, w2.values / np.max(np.abs(w2.values)), "w2")],
        title="second linearized eigenfunction", xlabel="r", ylabel="w2(r)")}
    return rep1.results() + rep2.results(), figures, {}


def _cmd_continue_p(cfg: RunConfig, cache: OperatorCache):
    n = cfg.knots if cfg.knots else 14
    up = np.linspace(cfg.p_start, cfg.p_stop, n)
    knots = np.concatenate([up, up[::-1][1:]])
    base = ProblemParams(dim=cfg.dim, s=cfg.s, p=float(up[0]), lam=cfg.lam)
    _prebuild_sectors(cfg, cache, (0, 1, 2))
    tr = continue_in_p(base, knots, m=cfg.mesh, grading=cfg.grading,
                       cache=cache, tol=cfg.tol, quad=cfg.quad, rmax=cfg.rmax)
    ret = float(np.max(np.abs(tr.profiles[0] - tr.profiles[-1])))
    floor = min(
        min(r.gap_low, r.gap_high, *r.lam_margin.values()) for r in tr.margins
    )
    rows = [
        {"name": "path-return", "verdict": "pass" if ret < 1e-6 else "fail",
         "margin": 1e-6 - ret, "tolerance": 0.0, "data": {"linf_gap": ret}},
        {"name": "margin-floor", "verdict": "pass" if floor > 1e-6 else "fail",
         "margin": floor, "tolerance": 1e-6, "data": {}},
    ]
    sup = [s.sup_norm for s in tr.payloads[:n]]
    gl = [r.gap_low for r in tr.margins[:n]]
    gh = [r.gap_high for r in tr.margins[:n]]
    figures = {"margins.svg": svgplot.line_plot(
        [(up, np.asarray(gl), "gap_low"), (up, np.asarray(gh), "gap_high")],
        title="non-degeneracy margins along p", xlabel="p", ylabel="margin")}
    lines = ["p,sup_norm,gap_low,gap_high"]
    for p, a, b, c in zip(up, sup, gl, gh):
        lines.append(f"{p!r},{a!r},{b!r},{c!r}")
    tables = {"trace.csv": "\n".join(lines) + "\n"}
    return rows, figures, tables


def _cmd_continue_s(cfg: RunConfig, cache: OperatorCache):
    n = cfg.knots if cfg.knots else 9
    knots = np.linspace(cfg.s_start, cfg.s_stop, n)
    tr = continue_in_s(cfg.dim, knots, m=cfg.mesh, grading=cfg.grading,
                       cache=cache, quad=cfg.quad, rmax=cfg.rmax)
    counts = [pay["sign_changes"] for pay in tr.payloads]
    crit = min(-a * b for a, b in tr.sign_data)
    rows = [
        {"name": "sign-count",
         "verdict": "pass" if all(c == 1 for c in counts) else "fail",
         "margin": 1.0 - max(abs(c - 1) for c in counts), "tolerance": 0.5,
         "data": {"counts": counts}},
        {"name": "sign-criterion", "verdict": "pass" if crit > 0 else "fail",
         "margin": crit, "tolerance": 0.0,
         "data": {"products": [a * b for a, b in tr.sign_data]}},
    ]
    lam2 = np.asarray([pay["lam2"] for pay in tr.payloads])
    figures = {"lambda2.svg": svgplot.line_plot(
        [(tr.knots, lam2, "lambda_2")],
        title="second radial eigenvalue vs s", xlabel="s", ylabel="lambda_2")}
    lines = ["s,lam1,lam2,sign_changes,criterion"]
    for pay, (a, b) in zip(tr.payloads, tr.sign_data):
        lines.append(f"{pay['s']!r},{pay['lam1']!r},{pay['lam2']!r},"
                     f"{pay['sign_changes']},{a * b!r}")
    tables = {"trace.csv": "\n".join(lines) + "\n"}
    return rows, figures, tables


def _cmd_extend(cfg: RunConfig, cache: OperatorCache):
    op = _operator(cfg.dim, cfg.s, 0, cfg.mesh, cfg.grading, cache,
                   cfg.quad, cfg.rmax)
    sol = solve_ground_state(op, cfg.problem(), tol=cfg.tol)
    w = sol.profile
    spec = op.spec
    heights = tuple(sorted(cfg.heights, reverse=True))
    tr = neumann_trace(w, spec, heights)
    af = apply_fractional(w, op)
    nodes = op.mesh.nodes
    win = nodes <= 0.8
    scale = float(np.max(np.abs(af.values[win])))
    dev = float(np.max(np.abs(tr.values[win] - af.values[win]))) / scale
    ratio = moment_limit(w, spec, cfg.t_large)
    rows = [
        {"name": "trace-consistency", "verdict": "pass" if dev < 0.05 else "fail",
         "margin": 0.05 - dev, "tolerance": 0.0, "data": {"max_rel_dev": dev}},
        {"name": "moment-ratio",
         "verdict": "pass" if abs(ratio - 1.0) < 0.02 else "fail",
         "margin": 0.02 - abs(ratio - 1.0), "tolerance": 0.0,
         "data": {"ratio": ratio, "t_large": cfg.t_large}},
    ]
    radii = np.linspace(0.0, 0.95, 20)
    samp = cs_extend(w, radii, heights, spec)
    curves = [(radii, samp.values[:, j], f"t={t:g}")
              for j, t in enumerate(heights)]
    curves.append((radii, w(radii), "t=0 (data)"))
    figures = {"extension.svg": svgplot.line_plot(
        curves, title="s-harmonic extension", xlabel="r", ylabel="W(r,t)")}
    lines = ["r,t,W"]
    for i, r in enumerate(radii):
        for j, t in enumerate(heights):
            lines.append(f"{r!r},{float(t)!r},{samp.values[i, j]!r}")
    tables = {"extension.csv": "\n".join(lines) + "\n"}
    return rows, figures, tables


_DISPATCH = {
    "solve": _cmd_solve,
    "spectrum": _cmd_spectrum,
    "verify": _cmd_verify,
    "continue-p": _cmd_continue_p,
    "continue-s": _cmd_continue_s,
    "extend": _cmd_extend,
}


def _write_artifacts(cfg: RunConfig, rows, figures, tables,
                     error: str | None = None) -> None:
    out = cfg.out
    if "json" in cfg.format or error is not None:
        json_rows = rows
        if error is not None:
            # keep the schema; errors ride in as a final result row
            json_rows = rows + [{"name": "runtime-error", "verdict": "error",
                                 "margin": None, "tolerance": 0.0,
                                 "data": {"message": error}}]
        doc = render_json(json_rows, cfg.as_dict(), _environment(), __version__)
        write_text_atomic(os.path.join(out, "report.json"), doc)
    if "csv" in cfg.format:
        write_text_atomic(os.path.join(out, "report.csv"), render_csv(rows))
        for name, text in tables.items():
            write_text_atomic(os.path.join(out, name), text)
    if "svg" in cfg.format:
        for name, text in figures.items():
            write_text_atomic(os.path.join(out, name), text)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        cfg = build_config(argv)
    except ConfigError as err:
        print(f"mixedlap: error: {err}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    cache = OperatorCache(os.path.join(cfg.out, "cache"))
    try:
        rows, figures, tables = _DISPATCH[cfg.command](cfg, cache)
    except Exception as err:  # noqa: BLE001 - record in the report, exit 1
        log.exception("run failed")
        print(f"mixedlap: error: {err}", file=sys.stderr)
        try:
            _write_artifacts(cfg, [], {}, {}, error=str(err))
        except OSError:
            pass
        return 1

    _write_artifacts(cfg, rows, figures, tables)
    n_fail = sum(1 for row in rows if row["verdict"] != "pass")
    for row in rows:
        print(f"{row['name']:28s} {row['verdict']:4s} "
              f"margin={row['margin']:+.6e} tol={row['tolerance']:g}")
    if n_fail:
        print(f"{n_fail} of {len(rows)} checks failed")
        return 2
    print(f"all {len(rows)} checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
