"""Command line front end.

Every run is a one-liner: flags only, no config file.  Reports go to
``--out`` (or stdout) as JSON (sorted keys, UTF-8, LF) or CSV.

Exit codes: 0 success, 2 usage, 3 domain or precondition, 4 solver.
"""
import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__, nearness
from .errors import DomainError, PreconditionError, SolverError

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_SOLVER = 0, 2, 3, 4


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ parsing

def parse_matrix(text):
    """Inline row-major list (``"4,0,0,0.0625"``), ``I2``/``I3``..., or a JSON file path with a ``matrix`` field."""
    t = text.strip()
    if len(t) >= 2 and t[0] in "Ii" and t[1:].isdigit():
        return np.eye(int(t[1:]))
    if t.endswith(".json"):
        try:
            with open(t, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read matrix file {t!r}: {exc}") from None
        vals = np.asarray(data["matrix"] if isinstance(data, dict) else data, dtype=np.float64).ravel()
    else:
        parts = t.replace(";", ",").split(",")
        vals = []
        pos = 0
        for k, p in enumerate(parts):
            try:
                vals.append(float(p))
            except ValueError:
                raise UsageError(f"matrix entry {k} at character {pos} is not a number: {p.strip()!r}") from None
            pos += len(p) + 1
        vals = np.array(vals)
    n = int(round(math.sqrt(vals.size)))
    if n * n != vals.size or n == 0:
        raise UsageError(f"matrix needs n*n entries, got {vals.size}")
    return vals.reshape(n, n)


def parse_floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma separated list of numbers, got {text!r}") from None


def parse_map(text):
    from .fieldgrid import MapSpec
    try:
        return MapSpec.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ------------------------------------------------------------------ output

def to_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ------------------------------------------------------------------ commands

def cmd_project(args):
    A = parse_matrix(args.matrix)
    res = nearness.project(A, args.target)
    d = res.to_dict()
    if args.format == "json":
        return to_json(d)
    keys = ["target", "n", "distance", "multiplier", "kkt_residual"]
    return rows_csv(keys, [[d[k] for k in keys]])


def cmd_verify(args):
    if args.bound not in nearness.BOUND_NAMES:
        raise UsageError(f"unknown bound {args.bound!r}; expected one of {', '.join(nearness.BOUND_NAMES)}")
    params = {}
    if args.bound == "sl-sandwich":
        params["theta"] = args.theta
    elif args.bound == "sp-det":
        params["Lambda"] = args.Lam if args.Lam is not None else 1.5
        params["symplectic"] = args.symplectic
    else:
        params["lambda"] = args.lam
        params["Lambda"] = args.Lam if args.Lam is not None else 2.0
    if args.det_range:
        lo, hi = parse_floats(args.det_range, "--det-range")
        params["det_range"] = (lo, hi)
    reports = nearness.monte_carlo(args.bound, args.n, args.samples, seed=args.seed,
                                   threads=args.threads, **params)
    summary = nearness.summarize(reports)
    if args.format == "json":
        out = {"bound": args.bound, "n": args.n, "seed": args.seed, "summary": summary}
        if not args.summary_only:
            out["reports"] = [r.to_dict() for r in reports]
        return to_json(out)
    rows = [[i, r.lhs, r.rhs, nearness._finite_or_none(r.ratio), str(bool(r.satisfied)).lower()]
            for i, r in enumerate(reports)]
    print(f"violations={summary['violations']} max_ratio={summary['max_ratio']!r}", file=sys.stderr)
    return rows_csv(["sample", "lhs", "rhs", "ratio", "satisfied"], rows)


def cmd_decompose(args):
    from .decompose import divfree_approx, energy_split, hamiltonian_approx
    from .fieldgrid import sample
    spec = parse_map(args.map)
    g = spec.default_geometry(args.n, boundary=args.boundary)
    u = sample(spec, g)
    if args.mode == "divfree":
        res = divfree_approx(u, args.p)
    else:
        res = hamiltonian_approx(u, args.p)
    d = res.to_dict()
    d["map"] = args.map
    d["n"] = args.n
    if args.mode == "divfree":
        from .decompose import divergence
        d["divergence_l2"] = float(np.sqrt(np.sum(divergence(res.corrected_field) ** 2) * g.cell_volume))
        d["energy_split"] = list(energy_split(u, res))
    if args.format == "json":
        return to_json(d)
    keys = ["mode", "p", "residual", "rhs", "ratio", "residual_kind"]
    return rows_csv(keys, [[d[k] for k in keys]])


def cmd_rearrange(args):
    from .fieldgrid import sample
    from .rearrange import measure_preserving_approx
    spec = parse_map(args.map)
    n = int(round(math.sqrt(args.N)))
    if n * n != args.N:
        raise UsageError(f"--N must be a perfect square for a 2-D grid, got {args.N}")
    g = spec.default_geometry(n)
    u = sample(spec, g)
    res = measure_preserving_approx(u, p=args.p, spec=spec, seed=args.seed)
    if args.format == "json":
        d = res.to_dict()
        d["map"] = args.map
        return to_json(d)
    return res.triples_csv(u)


def cmd_sweep(args):
    from .energy import EnergySpec
    from .limits import kappa_sweep
    spec = parse_map(args.boundary)
    kappas = parse_floats(args.kappas, "--kappas")
    window = (0.0, math.inf)
    if args.window:
        window = tuple(parse_floats(args.window, "--window"))
    try:
        espec = EnergySpec(args.energy, kappas[0] if kappas else 1.0, args.penalty, window=window)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rep = kappa_sweep(spec, espec, kappas, n=args.n, seed=args.seed, maxiter=args.maxiter)
    if args.format == "json":
        d = rep.to_dict()
        d["boundary"] = args.boundary
        d["n"] = args.n
        return to_json(d)
    return rep.to_csv()


def cmd_gallery(args):
    from .fieldgrid import gallery
    flags = gallery(args.n)
    if args.format == "json":
        return to_json(flags)
    rows = []
    for fam in sorted(flags):
        for k in sorted(flags[fam]):
            v = flags[fam][k]
            rows.append([fam, k, str(v).lower() if isinstance(v, bool) else v])
    return rows_csv(["family", "key", "value"], rows)


COMMANDS = {
    "project": cmd_project,
    "verify": cmd_verify,
    "decompose": cmd_decompose,
    "rearrange": cmd_rearrange,
    "sweep": cmd_sweep,
    "gallery": cmd_gallery,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=1)

    ap = argparse.ArgumentParser(prog="volpres", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", parents=[common], help="Frobenius projection of a matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--target", default="SL", choices=nearness.TARGETS)

    p = sub.add_parser("verify", parents=[common], help="Monte-Carlo check of a matrix inequality")
    p.add_argument("--bound", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--Lambda", dest="Lam", type=float, default=None)
    p.add_argument("--det-range", default=None, help="lo,hi for the sampled determinant")
    p.add_argument("--symplectic", action="store_true", help="sp-det: sample exact symplectic matrices")
    p.add_argument("--summary-only", action="store_true")

    p = sub.add_parser("decompose", parents=[common], help="divergence-free or Hamiltonian approximation")
    p.add_argument("--mode", choices=("divfree", "hamiltonian"), default="divfree")
    p.add_argument("--map", default="hamiltonian:sinsin")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--boundary", choices=("periodic", "clamped"), default="periodic")

    p = sub.add_parser("rearrange", parents=[common], help="measure-preserving approximant by optimal transport")
    p.add_argument("--map", default="compress:0.3")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--N", type=int, default=1024)

    p = sub.add_parser("sweep", parents=[common], help="penalised energy minimisation over kappa")
    p.add_argument("--boundary", default="twist")
    p.add_argument("--kappas", default="10,100,1000,10000")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--energy", default="neo_hookean")
    p.add_argument("--penalty", default="quadratic")
    p.add_argument("--window", default=None, help="lo,hi admissible determinant window")
    p.add_argument("--maxiter", type=int, default=5000)

    p = sub.add_parser("gallery", parents=[common], help="flags for the classic counterexample maps")
    p.add_argument("--n", type=int, default=64)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads < 1:
        ap.error("--threads must be at least 1")
    try:
        text = COMMANDS[args.command](args)
        emit(text, args.out)
    except UsageError as exc:
        print(f"volpres {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, PreconditionError) as exc:
        print(f"volpres {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except SolverError as exc:
        extra = f" (residual {exc.residual:.3g})" if getattr(exc, "residual", None) is not None else ""
        print(f"volpres {args.command}: solver failure: {exc}{extra}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"volpres {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
