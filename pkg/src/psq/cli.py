"""``psq`` command-line front end.

Every command prints one report, as JSON (default) or CSV.  Exit codes:
0 success / PASS, 1 engine failure or validation FAIL, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field

from . import __version__
from .errors import AtomOffGrid, PSQError
from .grid import ALIGN_TOL
from .kernel import DEFAULT_EPS, KernelWorkspace, sojourn_lst
from .mg1 import BusyPeriodSolver, qlen_pmf
from .model import ModelParams
from .moments import conditional_variance, sojourn_moments
from .service import ProbeMixture, ServiceDistribution, parse_dist
from .sim import SimConfig, run

COMMANDS = ("moments", "variance", "lst", "qlen", "busy", "wdist", "simulate", "validate")
GRID_COMMANDS = {"moments", "variance", "lst", "wdist", "simulate", "validate"}
CSV_COLUMNS = ("name", "u", "n", "r", "value", "ci_halfwidth", "analytic", "z")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunSpec:
    command: str
    params: ModelParams
    dist_text: str
    step: float | None = None
    horizon: float | None = None
    eps: float = DEFAULT_EPS
    order: int = 2
    u: list[float] = field(default_factory=list)
    r: list[float] = field(default_factory=list)
    x: list[float] = field(default_factory=list)
    max_n: int = 10
    departures: int = 100_000
    warmup: int = 10_000
    batches: int = 20
    seed: int = 0
    replications: int = 1
    fmt: str = "json"
    output: str | None = None


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psq", description="M/G/1 processor-sharing queue with permanent jobs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--lambda", dest="lam", type=float, required=True)
        p.add_argument("--dist", required=True,
                       help="exp:RATE | det:SIZE | erlang:SHAPE:RATE | hyperexp:w1:r1:... | "
                            "mix:BASE:probe_size:probe_prob | table:PATH")
        p.add_argument("--K", type=int, default=0)
        p.add_argument("--format", dest="fmt", choices=("json", "csv"), default="json")
        p.add_argument("--output")
        if name in GRID_COMMANDS:
            p.add_argument("--grid-step", dest="step", type=float)
            p.add_argument("--horizon", type=float)
            p.add_argument("--eps", type=float, default=DEFAULT_EPS)
        if name in ("moments", "variance", "lst", "simulate", "validate"):
            p.add_argument("--u", type=float, nargs="+", default=[])
        if name in ("moments", "simulate", "validate"):
            p.add_argument("--order", type=int, default=2)
        if name in ("lst", "busy", "simulate", "validate"):
            p.add_argument("--r", type=float, nargs="+", default=[])
        if name in ("qlen", "simulate", "validate"):
            p.add_argument("--max-n", dest="max_n", type=int, default=10)
        if name == "wdist":
            p.add_argument("--x", type=float, nargs="+", default=[])
        if name in ("simulate", "validate"):
            p.add_argument("--departures", type=int, default=100_000)
            p.add_argument("--warmup", type=int, default=10_000)
            p.add_argument("--batches", type=int, default=20)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--replications", type=int, default=1)
    return parser


def _default_step(d: ServiceDistribution, anchors: list[float]) -> float:
    """1e-3 of the mean job size, shrunk so the smallest anchor lands on a node."""
    step = 1e-3 * d.mean
    positive = [a for a in anchors if a > 0]
    if positive:
        a = min(positive)
        step = a / math.ceil(a / step - 1e-9)
    return step


def parse(argv: list[str]) -> RunSpec:
    args = _build_parser().parse_args(argv)
    try:
        dist = parse_dist(args.dist)
        params = ModelParams(args.lam, dist, args.K)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rho = params.rho
    if not rho < 1:
        raise UsageError(f"unstable: rho={rho:g} ≥ 1")

    spec = RunSpec(args.command, params, args.dist, fmt=args.fmt, output=args.output)
    for name in ("eps", "order", "u", "r", "x", "max_n", "departures", "warmup",
                 "batches", "seed", "replications", "horizon", "step"):
        if hasattr(args, name):
            setattr(spec, name, getattr(args, name))

    cmd = spec.command
    if cmd in ("moments", "variance", "lst") and not spec.u:
        raise UsageError(f"{cmd} requires --u")
    if cmd in ("lst", "busy") and not spec.r:
        raise UsageError(f"{cmd} requires --r")
    if not 1 <= spec.order <= 30:
        raise UsageError("--order must lie in 1..30")
    if spec.max_n < 0:
        raise UsageError("--max-n must be >= 0")
    if any(u < 0 for u in spec.u) or any(r < 0 for r in spec.r) or any(x < 0 for x in spec.x):
        raise UsageError("--u, --r and --x values must be >= 0")

    if cmd in ("simulate", "validate"):
        probe = dist.probe_size if isinstance(dist, ProbeMixture) else None
        if cmd == "validate" and probe is None:
            raise UsageError("validate needs a probe distribution (--dist mix:BASE:SIZE:PROB)")
        if spec.u and (probe is None or any(abs(u - probe) > 1e-12 for u in spec.u)):
            raise UsageError("--u must equal the probe size of the mix: distribution")
        spec.u = [probe] if probe is not None else []
        if spec.batches < 2 or spec.departures < spec.batches:
            raise UsageError("--departures must be >= --batches >= 2")

    if cmd in GRID_COMMANDS:
        if spec.step is not None and not spec.step > 0:
            raise UsageError("--grid-step must be positive")
        explicit = spec.step is not None
        if not explicit:
            spec.step = _default_step(dist, [a for a, _ in dist.atoms()] + spec.u + spec.x)
        for loc, _ in dist.atoms():
            m = round(loc / spec.step)
            if abs(loc - m * spec.step) > ALIGN_TOL * spec.step:
                raise UsageError(
                    f"{AtomOffGrid.__name__}: point mass at {loc:g} is not a multiple of "
                    f"--grid-step {spec.step:g}; pass a step that divides {loc:g}")
        if spec.horizon is None:
            reach = spec.u + spec.x
            spec.horizon = max(reach) if reach else 50 * dist.mean
            spec.horizon = max(spec.horizon, spec.step)
        elif spec.horizon < max(spec.u + spec.x + [0.0]):
            raise UsageError("--horizon must cover every --u / --x value")
    return spec


# --- execution -------------------------------------------------------------

def _row(name, value, **extra) -> dict:
    row = {"name": name}
    for key in ("u", "n", "r"):
        if extra.get(key) is not None:
            row[key] = extra[key]
    row["value"] = float(value)
    for key in ("ci_halfwidth", "analytic", "z"):
        if extra.get(key) is not None:
            row[key] = float(extra[key])
    return row


def _workspace(spec: RunSpec) -> KernelWorkspace:
    return KernelWorkspace(spec.params.with_K(0), spec.step, spec.horizon, spec.eps)


def _lst_at(ws: KernelWorkspace, r: float, u: float) -> float:
    """Base LST at u; off-grid points interpolate linearly between nodes."""
    lo = min(int(math.floor(u / ws.step + 1e-9)), ws.n)
    if abs(u - lo * ws.step) <= ALIGN_TOL * max(ws.step, u) or lo == ws.n:
        return sojourn_lst(ws, r, lo * ws.step)
    a = sojourn_lst(ws, r, lo * ws.step)
    b = sojourn_lst(ws, r, (lo + 1) * ws.step)
    w = u / ws.step - lo
    return (1 - w) * a + w * b


def _analytic_rows(spec: RunSpec, ws: KernelWorkspace) -> dict:
    """Analytic values keyed like the simulator output."""
    params = spec.params
    K = params.K
    out: dict = {}
    if spec.u:
        table = sojourn_moments(params, spec.order, ws)
        for u in spec.u:
            for n in range(1, spec.order + 1):
                out[("v", u, n, None)] = table.at(n, u)
            out[("variance", u, None, None)] = conditional_variance(params, u, ws)
            for r in spec.r:
                out[("lst", u, None, r)] = _lst_at(ws, r, u) ** (K + 1)
    for n in range(spec.max_n + 1):
        out[("pmf", None, n, None)] = qlen_pmf(params, n)
    return out


def _simulate_rows(spec: RunSpec, with_z: bool) -> tuple[list[dict], dict, bool]:
    params = spec.params
    cfg = SimConfig(params, warmup_departures=spec.warmup, measured_departures=spec.departures,
                    batches=spec.batches, seed=spec.seed, replications=spec.replications,
                    r_values=tuple(spec.r), moment_orders=tuple(range(1, spec.order + 1)))
    res = run(cfg)
    ws = _workspace(spec)
    analytic = _analytic_rows(spec, ws)

    estimates: dict = {}
    u = res.probe_size
    if u is not None and res.probe_count:
        for n, est, hw in res.probe_moment_estimates:
            estimates[("v", u, n, None)] = (est, hw)
        estimates[("variance", u, None, None)] = (res.probe_variance.value,
                                                  res.probe_variance.ci_halfwidth)
        for r, est, hw in res.lst_estimates:
            estimates[("lst", u, None, r)] = (est, hw)
    for n in range(spec.max_n + 1):
        p = float(res.qlen_histogram[n]) if n < res.qlen_histogram.size else 0.0
        hw = float(res.qlen_ci[n]) if n < res.qlen_ci.size else 0.0
        estimates[("pmf", None, n, None)] = (p, hw)

    rows = []
    passed = True
    for key, (est, hw) in estimates.items():
        name, uu, n, r = key
        ref = analytic.get(key)
        z = None
        if with_z and ref is not None:
            diff = abs(ref - est)
            z = diff / hw if hw > 0 else (0.0 if diff == 0 else math.inf)
            passed &= z <= 3
        rows.append(_row(name, est, u=uu, n=n, r=r, ci_halfwidth=hw, analytic=ref, z=z))
    rows.append(_row("mean_number", res.mean_number.value,
                     ci_halfwidth=res.mean_number.ci_halfwidth,
                     analytic=(params.K + 1) * params.rho / (1 - params.rho)))
    diag = {"truncation_terms": ws.truncation_terms, "grid_step": ws.step,
            "total_events": res.total_events, "probe_count": res.probe_count,
            "replications": res.replication_count,
            "work_balance_error": res.work_balance_error}
    return rows, diag, passed


def execute(spec: RunSpec) -> tuple[int, dict]:
    params = spec.params
    cmd = spec.command
    rows: list[dict] = []
    diag: dict = {"truncation_terms": None, "grid_step": spec.step, "iterations": None}
    status = None

    if cmd == "moments":
        ws = _workspace(spec)
        table = sojourn_moments(params, spec.order, ws)
        for u in spec.u:
            for n in range(1, spec.order + 1):
                rows.append(_row("v", table.at(n, u), u=u, n=n))
        diag["truncation_terms"] = ws.truncation_terms
    elif cmd == "variance":
        ws = _workspace(spec)
        for u in spec.u:
            rows.append(_row("variance", conditional_variance(params, u, ws), u=u))
        diag["truncation_terms"] = ws.truncation_terms
    elif cmd == "lst":
        ws = _workspace(spec)
        for u in spec.u:
            for r in spec.r:
                rows.append(_row("lst", _lst_at(ws, r, u) ** (params.K + 1), u=u, r=r))
        diag["truncation_terms"] = ws.truncation_terms
    elif cmd == "qlen":
        for n in range(spec.max_n + 1):
            rows.append(_row("pmf", qlen_pmf(params, n), n=n))
    elif cmd == "busy":
        solver = BusyPeriodSolver(params)
        iters = []
        for r in spec.r:
            res = solver.solve(r)
            iters.append(res.iterations)
            rows.append(_row("busy_lst", res.value, r=r))
        rows.append(_row("busy_mean", solver.busy_mean()))
        diag["iterations"] = iters
    elif cmd == "wdist":
        ws = _workspace(spec)
        W = ws.W
        xs = spec.x or [k * ws.step for k in range(ws.n + 1)]
        for x in xs:
            rows.append(_row("W", W.at(x), u=x))
        diag["truncation_terms"] = ws.truncation_terms
    elif cmd in ("simulate", "validate"):
        rows, extra, passed = _simulate_rows(spec, with_z=cmd == "validate")
        diag.update(extra)
        if cmd == "validate":
            status = "PASS" if passed else "FAIL"

    report = {
        "command": cmd,
        "model": {"lambda": params.lam, "dist": spec.dist_text, "K": params.K, "rho": params.rho},
        "controls": _controls(spec),
        "results": rows,
        "diagnostics": diag,
    }
    if status is not None:
        report["status"] = status
    return (1 if status == "FAIL" else 0), report


def _controls(spec: RunSpec) -> dict:
    ctl = {}
    if spec.command in GRID_COMMANDS:
        ctl.update(step=spec.step, horizon=spec.horizon, eps=spec.eps)
    if spec.command in ("moments", "simulate", "validate"):
        ctl["order"] = spec.order
    if spec.u:
        ctl["u"] = spec.u
    if spec.r:
        ctl["r"] = spec.r
    if spec.command in ("qlen", "simulate", "validate"):
        ctl["max_n"] = spec.max_n
    if spec.command in ("simulate", "validate"):
        ctl.update(departures=spec.departures, warmup=spec.warmup, batches=spec.batches,
                   seed=spec.seed, replications=spec.replications)
    return ctl


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, ensure_ascii=False) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in report["results"]:
        writer.writerow(["" if row.get(c) is None else
                         (repr(row[c]) if isinstance(row[c], float) else row[c])
                         for c in CSV_COLUMNS])
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        spec = parse(argv)
    except UsageError as exc:
        print(f"psq: error: {exc}", file=sys.stderr)
        return 2
    try:
        code, report = execute(spec)
    except (PSQError, ValueError) as exc:
        kind = getattr(exc, "code", type(exc).__name__)
        if spec.fmt == "json":
            _emit(json.dumps({"error": {"type": kind, "message": str(exc)}}) + "\n", spec.output)
        else:
            print(f"psq: {kind}: {exc}", file=sys.stderr)
        return 1
    _emit(render(report, spec.fmt), spec.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
