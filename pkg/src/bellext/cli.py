"""Command-line front end.

Every command that writes files also writes a JSON manifest next to its main
output (``<out>.manifest.json`` unless ``--manifest`` is given). ``bellext
replay MANIFEST`` reruns the recorded command into a scratch directory and
checks that every output is byte-identical.

Exit codes: 0 success, 1 verification failure, 2 usage or data error, 3 I/O
error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
import tempfile
import time
from importlib import metadata
from pathlib import Path
from typing import Sequence

from .analysis import SweepSpec, critical_w_sweep, fmt_real, verify_table1, write_sweep_csv
from .behavior import enumerate_vertices, write_vertices_csv
from .polytope import DATA_ENV, TableError, get_inequality, load_table
from .quantum import QuantumError
from .scenario import InvalidScenarioError, build_cycle_scenario
from .seesaw import SeesawConfig, check_soundness, run_seesaw

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
# flags whose values are output paths; replay redirects them
OUTPUT_FLAGS = ("--out", "--manifest")


class UsageError(Exception):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults, except for options whose default is None."""

    def _get_help_string(self, action):
        if action.default is None or action.default is False:
            return action.help
        return super()._get_help_string(action)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path: str | Path, command: str, argv: Sequence[str], config: dict,
                   master_seed: int | None, outputs: dict[str, str], started: float) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "master_seed": master_seed,
        "version": _version(),
        "started_utc": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": {role: {"path": str(p), "sha256": sha256_file(p)} for role, p in outputs.items()},
    }
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def _manifest_path(args: argparse.Namespace, out: str) -> str:
    return args.manifest or f"{out}.manifest.json"


def _threads(n: int | None) -> int:
    return max(1, n if n is not None else (os.cpu_count() or 1))


def _seesaw_config(args: argparse.Namespace) -> SeesawConfig:
    try:
        return SeesawConfig(seeds=args.seeds, master_seed=args.master_seed,
                            optimize_frame=getattr(args, "optimize_frame", False))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# commands


def cmd_verify_table(args: argparse.Namespace) -> int:
    table = load_table(args.table)
    cfg = _seesaw_config(args)
    t0 = time.time()
    report = verify_table1(cfg, table, quantum=args.quantum, facets=True, workers=_threads(args.threads))
    for r in report.rows:
        parts = [f"beta_L {r.beta_l_computed} (table {r.beta_l_table})"]
        if r.facet is not None:
            parts.append(f"tight dim {r.facet.tight_dimension}/{r.facet.full_dimension - 1}")
        if r.seesaw_value is not None:
            parts.append(f"seesaw {r.seesaw_value:.6f} vs beta_Q {r.beta_q_table} "
                         f"(delta {r.quantum_delta:+.2e}, tol {r.tolerance:.1e})")
        print(f"#{r.id:<3} {'PASS' if r.ok else 'FAIL'}  " + "; ".join(parts))
    n_ok = sum(r.ok for r in report.rows)
    print(f"{n_ok}/{len(report.rows)} rows pass ({time.time() - t0:.2f} s)")
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_max_violation(args: argparse.Namespace, argv: Sequence[str]) -> int:
    started = time.time()
    try:
        ineq = get_inequality(args.ineq, args.table)
    except KeyError as exc:
        raise UsageError(f"no inequality #{args.ineq} in the table") from exc
    cfg = _seesaw_config(args)
    res = run_seesaw(ineq, cfg=cfg)
    model = res.model()
    print(f"{ineq.name}: best value {res.best_value:.10f} (beta_L {ineq.local_bound}, "
          f"beta_Q {ineq.quantum_bound_ref}), soundness gap {check_soundness(res, ineq):.1e}")
    out = args.out or f"max_violation_{ineq.id}.json"
    if args.out is None:
        argv = [*argv, "--out", out]
    dump = {"inequality": ineq.id, "best_value": res.best_value, "result": res.to_dict(),
            "model": json.loads(model.to_json())}
    Path(out).write_text(json.dumps(dump, indent=1) + "\n")
    write_manifest(_manifest_path(args, out), "max-violation", argv, cfg.to_dict(), cfg.master_seed,
                   {"model": out}, started)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, argv: Sequence[str]) -> int:
    started = time.time()
    cfg = _seesaw_config(args)
    if args.alpha is not None and any(not 0.0 <= a <= 1.0 for a in args.alpha):
        raise UsageError("--alpha values must lie in [0, 1]")
    try:
        spec = SweepSpec(
            family=args.family,
            inequality=args.ineq,
            alpha_grid=args.alpha_grid,
            alphas=tuple(args.alpha) if args.alpha else None,
            w_start=args.w_start,
            bisection_steps=args.bisection_steps,
            seesaw=cfg,
        )
        if spec.key.isdigit():
            get_inequality(int(spec.key))
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc
    result = critical_w_sweep(spec, workers=_threads(args.threads))
    write_sweep_csv(args.out, result)
    w = result.w_values()
    print(f"{len(result.rows)} rows ({result.rows[0].method}); critical w in "
          f"[{fmt_real(w.min())}, {fmt_real(w.max())}]")
    config = {
        "family": spec.family, "inequality": spec.key, "alphas": spec.alpha_values(),
        "w_start": spec.w_start, "bisection_steps": spec.bisection_steps, "seesaw": cfg.to_dict(),
    }
    write_manifest(_manifest_path(args, args.out), "sweep", argv, config, cfg.master_seed,
                   {"csv": args.out}, started)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_vertices(args: argparse.Namespace, argv: Sequence[str]) -> int:
    started = time.time()
    try:
        s = build_cycle_scenario(args.n)
    except InvalidScenarioError as exc:
        raise UsageError(str(exc)) from exc
    vs = enumerate_vertices(s)
    c = vs.counts()
    print(f"{c['product']} product vertices ({c['bob_noncontextual']} NC + {c['bob_contextual']} "
          f"contextual Bob, {c['alice_deterministic']} Alice)")
    write_vertices_csv(args.out, vs)
    write_manifest(_manifest_path(args, args.out), "vertices", argv, {"n": args.n}, None,
                   {"csv": args.out}, started)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_facets(args: argparse.Namespace, argv: Sequence[str]) -> int:
    from .facets import FacetBudgetExceeded, enumerate_facet_classes, write_classes_csv
    from .polytope import canonicalize, cycle_symmetry_group, orbit

    started = time.time()
    if args.budget <= 0:
        raise UsageError("--budget must be positive")
    try:
        s = build_cycle_scenario(args.n)
    except InvalidScenarioError as exc:
        raise UsageError(str(exc)) from exc
    vs = enumerate_vertices(s)
    group = cycle_symmetry_group(s)
    config = {"n": args.n, "budget": args.budget, "dd_max_vertices": args.dd_max_vertices}
    try:
        res = enumerate_facet_classes(vs.product, group, args.budget, args.dd_max_vertices)
        classes, sizes, done = res.classes, res.orbit_sizes, True
    except FacetBudgetExceeded as exc:
        classes = tuple(sorted(exc.partial, key=lambda q: (q.local_bound, q.coeffs)))
        sizes, done = tuple(len(orbit(q, group)) for q in classes), False
        print(f"budget exhausted: {exc}")
    write_classes_csv(args.out, classes, sizes, s.labels())
    print(f"{len(classes)} classes, {sum(sizes)} facets{'' if done else ' (partial)'}")
    code = EXIT_OK if done else EXIT_FAIL
    if done and args.n == 4:
        table = load_table(args.table)
        expected = {(q.local_bound, canonicalize(q, group).coeffs) for q in table}
        same = expected == {(q.local_bound, q.coeffs) for q in classes}
        print(f"classes {'match' if same else 'DIFFER from'} the inequality table")
        code = EXIT_OK if same else EXIT_FAIL
    write_manifest(_manifest_path(args, args.out), "facets", argv, config, None, {"csv": args.out}, started)
    print(f"wrote {args.out}")
    return code


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        manifest = json.loads(Path(args.manifest_file).read_text())
        argv = list(manifest["argv"])
        outputs = manifest["outputs"]
    except (KeyError, ValueError) as exc:
        raise UsageError(f"not a manifest: {exc}") from exc
    with tempfile.TemporaryDirectory() as tmp:
        redirected = {}
        for i, tok in enumerate(argv[:-1]):
            if tok in OUTPUT_FLAGS:
                new = str(Path(tmp) / f"{len(redirected)}_{Path(argv[i + 1]).name}")
                redirected[argv[i + 1]] = new
                argv[i + 1] = new
        if "--manifest" not in argv:
            argv += ["--manifest", str(Path(tmp) / "replay.manifest.json")]
        code = main(argv)
        if code != EXIT_OK:
            print(f"replayed command exited with {code}")
            return code
        ok = True
        for role, rec in outputs.items():
            path = redirected.get(rec["path"], rec["path"])
            digest = sha256_file(path)
            same = digest == rec["sha256"]
            ok &= same
            print(f"{role}: {'identical' if same else 'DIFFERS'} ({digest[:16]})")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(
        prog="bellext",
        description="Bell scenarios with locally compatible measurements: polytope checks, "
        "seesaw lower bounds and critical-noise sweeps.",
        epilog=f"The inequality table can be overridden with ${DATA_ENV}.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def seesaw_opts(sp):
        sp.add_argument("--seeds", type=int, default=500, help="random restarts per seesaw run")
        sp.add_argument("--master-seed", type=int, default=0, help="master seed for all random streams")

    def table_opt(sp):
        sp.add_argument("--table", default=None,
                        help=f"inequality table CSV (default: ${DATA_ENV} or the bundled table)")

    v = sub.add_parser("verify-table", help="check local bounds, facets and (optionally) quantum values",
                       formatter_class=fmt)
    table_opt(v)
    v.add_argument("--quantum", action="store_true", help="also run the seesaw on every row")
    seesaw_opts(v)
    v.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")

    m = sub.add_parser("max-violation", help="seesaw lower bound on one inequality's quantum maximum",
                       formatter_class=fmt)
    m.add_argument("--ineq", type=int, required=True, help="table row id (1-26)")
    table_opt(m)
    seesaw_opts(m)
    m.add_argument("--out", default=None, help="model dump path (default: max_violation_<id>.json)")
    m.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")

    s = sub.add_parser("sweep", help="critical w as a function of alpha", formatter_class=fmt)
    s.add_argument("--family", choices=("rho", "sigma"), required=True)
    s.add_argument("--ineq", required=True, help="'chsh' (exact), 'i3322', or a table row id such as 15")
    s.add_argument("--alpha-grid", type=int, default=100, help="number of equally spaced alphas in [1/2, 1]")
    s.add_argument("--alpha", type=float, action="append", default=None,
                   help="explicit alpha value (repeatable); overrides --alpha-grid")
    s.add_argument("--w-start", type=float, default=0.75, help="first w tested by the bisection")
    s.add_argument("--bisection-steps", type=int, default=8, help="number of bisection iterations per alpha")
    seesaw_opts(s)
    s.add_argument("--optimize-frame", action="store_true",
                   help="also ascend over Bob's local unitary between measurement sweeps")
    s.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    s.add_argument("--out", required=True, help="output CSV")
    s.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")

    x = sub.add_parser("vertices", help="export the vertices of the local polytope", formatter_class=fmt)
    x.add_argument("--n", type=int, default=4, help="number of Bob measurements on the cycle")
    x.add_argument("--out", required=True, help="output CSV")
    x.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")

    f = sub.add_parser("facets", help="enumerate all facet classes (slow; about nine minutes for n=4)",
                       formatter_class=fmt)
    f.add_argument("--n", type=int, default=4, help="number of Bob measurements on the cycle")
    f.add_argument("--budget", type=float, default=3600.0, help="time budget in seconds")
    f.add_argument("--dd-max-vertices", type=int, default=70,
                   help="faces up to this many vertices go to double description (needs pycddlib)")
    table_opt(f)
    f.add_argument("--out", required=True, help="output CSV of class representatives")
    f.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")

    r = sub.add_parser("replay", help="rerun a manifest and compare output digests", formatter_class=fmt)
    r.add_argument("manifest_file")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "verify-table":
            return cmd_verify_table(args)
        if args.command == "max-violation":
            return cmd_max_violation(args, argv)
        if args.command == "sweep":
            return cmd_sweep(args, argv)
        if args.command == "vertices":
            return cmd_vertices(args, argv)
        if args.command == "facets":
            return cmd_facets(args, argv)
        return cmd_replay(args)
    except (UsageError, TableError, QuantumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
