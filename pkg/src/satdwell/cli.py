"""Command-line front end: ``satdwell analyze | mindwell | baseline | simulate | verify | export``.

Exit codes: 0 success, 1 bad input (parse errors, bad flags, empty grids),
2 infeasible or nothing found, 3 solved but the certificate failed
validation (or the solver broke down), 4 Monte-Carlo verification failed.
Mode indices on the command line and in every written file are 1-based.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .doa import (
    DEFAULT_LAMBDA_GRID,
    DEFAULT_RESOLUTION,
    baseline_analyze,
    doa_estimate,
    ellipse_csv,
    min_dwell_search,
    polygon_csv,
    solve_dwell_doa,
)
from .errors import DomainError, InvalidArgumentError, NumericalFailure, UnsupportedDimensionError
from .lmi import build_corollary3, count_constraints
from .model import Mode, Schedule, SwitchedSystem, random_admissible_schedule, simulate
from .sdp import PSD_TOL, SOLVERS, STRICT_TOL, export_sdpa, load_certificate, save_certificate, validate_certificate

log = logging.getLogger("satdwell")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2, 3, 4


class InputError(Exception):
    """Unreadable or malformed input; maps to exit code 1."""


# ---------------------------------------------------------------------------
# system files
# ---------------------------------------------------------------------------


def example_system_path() -> Path:
    return Path(str(resources.files("satdwell") / "data" / "two_mode.yaml"))


def _matrix(value, rows: int, cols: int, where: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)):
        raise InputError(f"{where}: expected a list of {rows} rows")
    if len(value) != rows:
        raise InputError(f"{where}: has {len(value)} rows, expected {rows}")
    for r, row in enumerate(value, start=1):
        if not isinstance(row, (list, tuple)):
            raise InputError(f"{where}: row {r} is not a list")
        if len(row) != cols:
            raise InputError(f"{where}: row {r} has {len(row)} columns, expected {cols}")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: non-numeric entry ({exc})") from None
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{where}: non-finite entry")
    return arr


def parse_system(doc) -> SwitchedSystem:
    """Build a system from a parsed document with keys ``n``, ``m``, ``modes`` and optional ``labels``."""
    if not isinstance(doc, dict):
        raise InputError("system file must be a mapping with keys n, m, modes")
    for key in ("n", "m", "modes"):
        if key not in doc:
            raise InputError(f"system file is missing '{key}'")
    n, m = doc["n"], doc["m"]
    if not isinstance(n, int) or not isinstance(m, int) or n < 1 or m < 1:
        raise InputError("n and m must be positive integers")
    modes = doc["modes"]
    if not isinstance(modes, list) or not modes:
        raise InputError("'modes' must be a non-empty list")
    built, names = [], []
    for k, md in enumerate(modes, start=1):
        if not isinstance(md, dict):
            raise InputError(f"mode {k}: expected a mapping with A, B, K")
        name = str(md.get("name", f"mode{k}"))
        tag = f"mode {k} ({name})"
        for key in ("A", "B", "K"):
            if key not in md:
                raise InputError(f"{tag}: missing matrix {key}")
        built.append(
            Mode(
                _matrix(md["A"], n, n, f"{tag}: A"),
                _matrix(md["B"], n, m, f"{tag}: B"),
                _matrix(md["K"], m, n, f"{tag}: K"),
            )
        )
        names.append(name)
    labels = doc.get("labels", names)
    if not isinstance(labels, list) or len(labels) != len(built):
        raise InputError(f"'labels' must list {len(built)} names")
    return SwitchedSystem(tuple(built), tuple(str(s) for s in labels))


def load_system(path) -> SwitchedSystem:
    """Read a YAML (or JSON, which is valid YAML) system description."""
    import yaml

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: not valid YAML/JSON: {exc}") from None
    return parse_system(doc)


def _load_cert(path):
    try:
        return load_certificate(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: not a certificate ({exc})") from None


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------


def parse_lambda_grid(text: str) -> list:
    items = [s for s in text.replace(",", " ").split() if s]
    try:
        return [float(s) for s in items]
    except ValueError as exc:
        raise InputError(f"bad lambda grid: {exc}") from None


def parse_schedule(spec: str, N: int, horizon: int, taudefault: int = 1) -> Schedule:
    """``periodic:P[:FIRST]``, ``explicit:T0=M0,T1=M1,...`` or ``random:TAU[:SEED]`` (1-based modes)."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "periodic":
            parts = rest.split(":") if rest else []
            period = int(parts[0]) if parts else taudefault
            first = int(parts[1]) - 1 if len(parts) > 1 else 0
            if not 0 <= first < N:
                raise InputError(f"first mode must lie in 1..{N}")
            cycle = [(first + k) % N for k in range(N)]
            if N == 1:
                return Schedule((0,), (first,))
            return Schedule.periodic(cycle, period, horizon)
        if kind == "explicit":
            times, modes = [], []
            for item in rest.split(","):
                t, _, md = item.partition("=")
                times.append(int(t))
                modes.append(int(md) - 1)
            s = Schedule(tuple(times), tuple(modes))
            s.check_modes(N)
            return s
        if kind == "random":
            parts = rest.split(":") if rest else []
            tau = int(parts[0]) if parts else taudefault
            seed = int(parts[1]) if len(parts) > 1 else 0
            return random_admissible_schedule(N, tau, horizon, seed)
    except ValueError as exc:
        raise InputError(f"bad schedule {spec!r}: {exc}") from None
    raise InputError(f"unknown schedule kind {kind!r}; use periodic, explicit or random")


def _write(out_dir: Path, name: str, text: str) -> Path:
    return atomic_write_text(out_dir / name, text)


def _fnum(v) -> str:
    return "nan" if v is None or not np.isfinite(v) else f"{v:.6g}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    sys_ = load_system(args.system)
    if args.tau < 1:
        raise InputError("--tau must be at least 1")
    p, sol, cert = solve_dwell_doa(sys_, args.tau, args.eps, args.solver)
    counts = count_constraints(sys_.N, sys_.m, sys_.n, args.tau)
    print(f"tau={args.tau}  LMI blocks={counts.total}  solver={args.solver}  status={sol.status}")
    if sol.status == "infeasible":
        print(f"infeasible: no certificate with dwell time {args.tau}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if cert is None:
        print(f"solver did not return a usable solution ({sol.status})", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = validate_certificate(sys_, cert, args.strict_tol, args.psd_tol)
    save_certificate(cert, out / "certificate.json")
    _write(out, "validation.txt", rep.summary())
    summary = {
        "tau": args.tau,
        "status": sol.status,
        "objective": sol.objective,
        "lmi_counts": {**counts._asdict(), "total": counts.total},
        "validated": rep.passed,
        "margins": {
            "pd": rep.pd_margin,
            "within": rep.within_margin,
            "switching": rep.switching_margin,
            "band": rep.band_margin,
        },
        "eps": args.eps,
        "solver": sol.meta,
        "version": __version__,
    }
    if sys_.n == 2:
        est = doa_estimate(cert, args.resolution)
        for i, P in enumerate(cert.P, start=1):
            _write(out, f"ellipse_{i}.csv", ellipse_csv(P))
        _write(out, "psi_polygon.csv", polygon_csv(est.polygon))
        summary.update(area=est.area, ellipse_areas=est.ellipse_areas, resolution=args.resolution)
        print(f"area(Psi) = {est.area:.6f}")
    else:
        est = doa_estimate(cert)
        summary.update(volume_mc=est.area, ellipsoid_volumes=est.ellipse_areas)
        print(f"volume(Psi) ~ {est.area:.6g} (Monte Carlo)")
    _write(out, "summary.json", json.dumps(summary, indent=2, default=float) + "\n")
    print(rep.summary(), end="")
    print(f"artifacts in {out}")
    return EXIT_OK if rep.passed else EXIT_INVALID


def cmd_mindwell(args) -> int:
    sys_ = load_system(args.system)
    if args.tau_max < 1:
        raise InputError("--tau-max must be at least 1")
    res = min_dwell_search(sys_, args.tau_max, args.eps, args.solver, stop_at_first=not args.all)
    print(f"{'tau':>4} {'status':>18} {'within':>7} {'switch':>7} {'band':>6} {'total':>6} {'area':>10}")
    for r in res.rows:
        c = r.counts
        print(f"{r.tau:>4} {r.status:>18} {c.within:>7} {c.switching:>7} {c.band:>6} {c.total:>6} {_fnum(r.area):>10}")
    if not res.found:
        print(f"no feasible dwell time up to {args.tau_max}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"minimal dwell time: {res.min_tau}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    sys_ = load_system(args.system)
    grid = parse_lambda_grid(args.lambda_grid) if args.lambda_grid is not None else list(DEFAULT_LAMBDA_GRID)
    if not grid:
        raise InputError("lambda grid is empty")
    res = baseline_analyze(sys_, grid, args.eps, args.solver)
    rows = {r.lam: r for r in res.rows}
    print(f"{'lambda':>7} {'status':>18} {'mu':>10} {'bound':>6} {'r':>9} {'area':>9}")
    for lam in grid:
        r = rows.get(lam)
        if r is None:
            print(f"{lam:>7.4g} {res.statuses[lam]:>18}")
        else:
            print(f"{lam:>7.4g} {'optimal':>18} {r.mu:>10.5g} {r.dwell_bound:>6} {r.r:>9.5g} {r.area:>9.5g}")
    best = res.best
    if best is None:
        print("no lambda in the grid is feasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"minimal dwell bound: {best.dwell_bound} (lambda={best.lam:g}, area={best.area:.6g})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sys_ = load_system(args.system)
    cert = _load_cert(args.certificate) if args.certificate else None
    if cert is not None and cert.N != sys_.N:
        raise InputError("certificate and system disagree on the number of modes")
    if len(args.x0) != sys_.n:
        raise InputError(f"--x0 needs {sys_.n} values, got {len(args.x0)}")
    if args.horizon < 0:
        raise InputError("--horizon must be non-negative")
    sched = parse_schedule(args.schedule, sys_.N, args.horizon + 1, cert.tau if cert else 1)
    traj = simulate(sys_, sched, np.array(args.x0, dtype=float), args.horizon, cert)
    text = traj.to_csv()
    if args.output:
        atomic_write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import monte_carlo_doa

    sys_ = load_system(args.system)
    cert = _load_cert(args.certificate)
    if cert.N != sys_.N:
        raise InputError("certificate and system disagree on the number of modes")
    if args.trials < 1:
        raise InputError("--trials must be at least 1")
    rep = monte_carlo_doa(
        sys_, cert, args.trials, args.horizon, args.seed, conv_tol=args.conv_tol, band=args.band
    )
    print(rep.to_text(), end="")
    if args.failures:
        atomic_write_text(args.failures, rep.failures_csv())
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_export(args) -> int:
    sys_ = load_system(args.system)
    if args.tau < 1:
        raise InputError("--tau must be at least 1")
    p = build_corollary3(sys_, args.tau, args.eps)
    path, idx = export_sdpa(p, args.output)
    print(f"wrote {path} ({len(p.blocks)} blocks, {p.nz} variables)")
    print(f"index {idx}")
    return EXIT_OK


def cmd_example(args) -> int:
    sys.stdout.write(example_system_path().read_text())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="satdwell", description="DOA estimates for saturated switched systems under dwell-time switching.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solver=True):
        p.add_argument("system", help="system description (YAML or JSON)")
        p.add_argument("--eps", type=float, default=1e-6, help="margin for strict LMIs (default 1e-6)")
        if solver:
            p.add_argument("--solver", default="CLARABEL", type=str.upper, choices=SOLVERS)

    p = sub.add_parser("analyze", help="solve the DOA problem for one dwell time and write artifacts")
    common(p)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--out-dir", default="satdwell-out")
    p.add_argument("--resolution", type=int, default=DEFAULT_RESOLUTION, help="boundary samples per ellipse")
    p.add_argument("--strict-tol", type=float, default=STRICT_TOL)
    p.add_argument("--psd-tol", type=float, default=PSD_TOL)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mindwell", help="smallest dwell time with a certificate")
    common(p)
    p.add_argument("--tau-max", type=int, required=True)
    p.add_argument("--all", action="store_true", help="keep scanning after the first feasible dwell time")
    p.set_defaults(func=cmd_mindwell)

    p = sub.add_parser("baseline", help="single-gain contraction baseline over a lambda grid")
    common(p)
    p.add_argument("--lambda-grid", default=None, help="comma or space separated values in (0,1)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("simulate", help="simulate the saturated plant and print a CSV trajectory")
    p.add_argument("system")
    p.add_argument("certificate", nargs="?", help="certificate file; adds the V column")
    p.add_argument("--x0", type=float, nargs="+", required=True)
    p.add_argument("--schedule", default="periodic", help="periodic:P[:FIRST] | explicit:T=M,... | random:TAU[:SEED]")
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="Monte-Carlo check of a certificate from the boundary of Psi")
    p.add_argument("system")
    p.add_argument("certificate")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--horizon", type=int, default=None, help="default 200*tau")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--conv-tol", type=float, default=1e-6)
    p.add_argument("--band", choices=("all", "active"), default="all")
    p.add_argument("--failures", help="write failing trials as CSV")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export", help="write the LMI problem in SDPA sparse format")
    common(p, solver=False)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--format", choices=("sdpa",), default="sdpa")
    p.add_argument("-o", "--output", default="problem.dat-s")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("example", help="print the bundled two-mode system file")
    p.set_defaults(func=cmd_example)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, InvalidArgumentError, UnsupportedDimensionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
