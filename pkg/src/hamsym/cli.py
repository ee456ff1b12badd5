"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 numerical
failure.  Reports are JSON; trajectories are CSV with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Sequence

import numpy as np

from . import checks, config, systems
from .continuous import FirstIntegral, IntegrationError, State, integrate_reference, monitor
from .discrete import (
    LatticePoint,
    LatticeStepError,
    discrete_energy,
    interval,
    run_lattice,
)
from .errors import ConfigError, HamsymError, NumericalError

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("hamsym")


class InputError(Exception):
    pass


def _num(x) -> str:
    return "" if x is None else f"{float(x):.17g}"


def _load(target: str) -> config.Config:
    if os.path.exists(target):
        return config.load(target)
    try:
        return config.Config(systems.get(target))
    except KeyError as exc:
        raise InputError(f"{target!r} is neither a config file nor a catalog id "
                         f"({', '.join(systems.list_ids())})") from exc


def _setting(args, cfg: config.Config, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.run.get(key, default)


def _initial(args, cfg: config.Config) -> tuple[float, np.ndarray, np.ndarray]:
    t0, q0, p0 = cfg.entry.initial
    n = cfg.entry.n
    t0 = args.t0 if args.t0 is not None else t0
    q0 = np.array(args.q if args.q is not None else q0, dtype=float)
    p0 = np.array(args.p if args.p is not None else p0, dtype=float)
    if q0.shape != (n,) or p0.shape != (n,):
        raise InputError(f"initial q and p need {n} components")
    return t0, q0, p0


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(obj, out_used: bool) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False)
    print(text, file=sys.stderr if not out_used else sys.stdout)


# -- commands -------------------------------------------------------------------


def cmd_verify(args) -> int:
    cfg = _load(args.target)
    entry = cfg.entry
    rng = np.random.default_rng(_setting(args, cfg, "seed", 0))
    tol = _setting(args, cfg, "tol", checks.DEFAULT_TOL)
    samples = _setting(args, cfg, "samples", 200)
    reports = checks.verify_entry(entry, samples, rng, tol)
    failed = [r.symmetry for r in reports if r.ok is False]
    report = {
        "target": args.target,
        "kind": entry.kind,
        "samples": samples,
        "tol": tol,
        "symmetries": [r.as_dict() for r in reports],
        "all_expectations_hold": not failed,
    }
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_identity(args) -> int:
    cfg = _load(args.target)
    rng = np.random.default_rng(_setting(args, cfg, "seed", 0))
    tol = args.tol if args.tol is not None else 1e-10
    samples = _setting(args, cfg, "samples", 1000)
    if not cfg.entry.symmetries:
        raise InputError("identity check needs at least one symmetry")
    worst = float(checks.identity_max(cfg.entry, samples, rng))
    report = {"target": args.target, "samples": samples, "tol": tol,
              "max_residual": worst, "ok": worst <= tol}
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK if worst <= tol else EXIT_FAIL


def _continuous_integrals(entry: systems.CatalogEntry) -> list[FirstIntegral]:
    sys_ = entry.system
    if entry.integrals:
        return [FirstIntegral.from_expr(sys_, k, e) for k, e in entry.integrals.items()]
    keep = ("invariant", "divergence_invariant", None)
    return [FirstIntegral.from_symmetry(sys_, s, f"I[{s.name}]")
            for s in entry.symmetries if entry.expect.get(s.name) in keep]


def cmd_integrate(args) -> int:
    cfg = _load(args.target)
    entry = cfg.entry
    if entry.kind != "continuous":
        raise InputError("integrate needs a continuous system; use 'lattice' for discrete ones")
    t0, q0, p0 = _initial(args, cfg)
    t_end = _setting(args, cfg, "t_end", None)
    dt = _setting(args, cfg, "dt", None)
    if t_end is None or dt is None:
        raise InputError("integrate needs --t-end and --dt")
    integrals = _continuous_integrals(entry)
    status = EXIT_OK
    error = None
    try:
        traj = integrate_reference(entry.system, State(t0, q0, p0), t_end, dt)
    except IntegrationError as exc:
        traj, status, error = exc.trajectory, EXIT_NUMERIC, str(exc)
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    n = entry.n
    header = ["t", *[f"q{i}" for i in range(1, n + 1)], *[f"p{i}" for i in range(1, n + 1)]]
    header += [I.name for I in integrals]
    header += [f"rel:{r.name}" for r in entry.relations]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for s in traj:
        row = [s.t, *s.q, *s.p, *(I(s) for I in integrals)]
        row += [v - target for v, target in entry.relation_values(s).values()]
        w.writerow([_num(x) for x in row])
    _emit(buf.getvalue(), args.out)
    report = {"target": args.target, "points": len(traj), "drift": monitor(traj, integrals)}
    if entry.relations:
        report["relation_max"] = {
            name: max(abs(v - tg) for v, tg in (entry.relation_values(s)[name] for s in traj))
            for name in (r.name for r in entry.relations)
        }
    if error:
        report["error"] = error
    _report(report, bool(args.out))
    return status


def cmd_lattice(args) -> int:
    cfg = _load(args.target)
    entry = cfg.entry
    if entry.kind != "discrete":
        raise InputError("lattice needs a discrete system; use 'integrate' for continuous ones")
    t0, q0, p0 = _initial(args, cfg)
    h0 = _setting(args, cfg, "h0", entry.h0)
    steps = _setting(args, cfg, "steps", None)
    tol = _setting(args, cfg, "tol", None)
    if h0 is None or steps is None:
        raise InputError("lattice needs --h0 and --steps")
    if h0 <= 0 or steps < 1:
        raise InputError("need h0 > 0 and steps >= 1")
    status, error = EXIT_OK, None
    kwargs = {} if tol is None else {"tol": tol}
    try:
        traj = run_lattice(entry.system, LatticePoint(t0, q0, p0), h0, steps, **kwargs)
    except LatticeStepError as exc:
        traj, status = exc.trajectory, EXIT_NUMERIC
        error = {"failed_index": exc.index, "message": str(exc)}
    sys_ = traj.system
    energy = sys_.time_invariant

    n = entry.n
    names = list(entry.integrals)
    header = ["index", "t", "h_minus", *[f"q{i}" for i in range(1, n + 1)],
              *[f"p{i}" for i in range(1, n + 1)], "newton_iters", "residual_norm", *names]
    header += [f"rel:{r.name}" for r in entry.relations]
    if energy:
        header.append("energy")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    first: dict[str, float] = {}
    drift = {name: 0.0 for name in names + (["energy"] if energy else [])}
    pts = traj.points
    for k, pt in enumerate(pts):
        row = [k, pt.t, None if k == 0 else interval(pts[k - 1], pt), *pt.q, *pt.p,
               traj.iterations[k], traj.residual_norms[k]]
        extra: dict[str, float] = {}
        rel = []
        if k > 0:
            extra = entry.integral_values(pts[k - 1], pt, system=sys_)
            rel = [v - tg for v, tg in entry.relation_values(pts[k - 1], pt, system=sys_).values()]
            if energy:
                extra["energy"] = discrete_energy(sys_, pts[k - 1], pt)
            for key, v in extra.items():
                first.setdefault(key, v)
                drift[key] = max(drift[key], abs(v - first[key]))
        row += [extra.get(name) for name in names]
        row += rel or [None] * len(entry.relations)
        if energy:
            row.append(extra.get("energy"))
        w.writerow([str(x) if isinstance(x, int) else _num(x) for x in row])
    _emit(buf.getvalue(), args.out)
    report = {
        "target": args.target,
        "points": len(pts),
        "h0": h0,
        "max_newton_iterations": max(traj.iterations),
        "max_residual_norm": max(traj.residual_norms),
        "degenerate_steps": int(sum(traj.degenerate)),
        "drift": drift,
    }
    if error:
        report["error"] = error
    _report(report, bool(args.out))
    return status


def cmd_catalog(args) -> int:
    if args.action == "list":
        for cid in systems.list_ids():
            e = systems.get(cid)
            print(f"{cid}\t{e.kind}\tn={e.n}\t{len(e.symmetries)} symmetries\t"
                  f"{len(e.integrals)} integrals")
        return EXIT_OK
    if not args.id:
        raise InputError("catalog export needs an id")
    try:
        entry = systems.get(args.id)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from exc
    _emit(config.dumps(entry), args.out)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hamsym",
        description="Symmetries, first integrals and discrete Hamiltonian integrators.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, sampling=False, state=False):
        p.add_argument("target", help="catalog id or path to a config file")
        p.add_argument("--out", help="write the main output here instead of stdout")
        p.add_argument("--tol", type=float)
        if sampling:
            p.add_argument("--seed", type=int)
            p.add_argument("--samples", type=int)
        if state:
            p.add_argument("--t0", type=float, help="initial time")
            p.add_argument("--q", type=_floats, help="initial q, comma separated")
            p.add_argument("--p", type=_floats, help="initial p, comma separated")

    p = sub.add_parser("verify", help="classify every symmetry on random samples")
    common(p, sampling=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("identity", help="check the Hamiltonian identity off solutions")
    common(p, sampling=True)
    p.set_defaults(func=cmd_identity)

    p = sub.add_parser("integrate", help="RK4 reference run with integral monitoring")
    common(p, state=True)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--dt", type=float)
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("lattice", help="run the discrete Hamiltonian integrator")
    common(p, state=True)
    p.add_argument("--h0", type=float)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("catalog", help="list or export built-in systems")
    p.add_argument("action", choices=["list", "export"])
    p.add_argument("id", nargs="?")
    p.add_argument("--out")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HamsymError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
