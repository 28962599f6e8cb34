"""Command-line entry point.

Exit codes: 0 success / universal, 2 usage or input error, 3 certified
non-universal, 4 optimization did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness
from .certificate import certify
from .costs import canonical_target, frobenius_cost, geodesic_cost, infidelity
from .factorization import PhaseConfiguration, evaluate
from .mixers import (
    Mixer, MixerStack, clements_stack, dft, frdft, haar_unitary, is_unitary, permutation,
    read_matrix, su_stack, waveguide, write_matrix,
)
from .optimizer import COST_KINDS, SolveOptions, solve

EXIT_OK, EXIT_USAGE, EXIT_NONUNIVERSAL, EXIT_NOCONVERGE = 0, 2, 3, 4

log = logging.getLogger("mplc")


class UsageError(Exception):
    pass


# --- mixer specs ------------------------------------------------------------------

FAMILY_KEYS = {
    "dft": set(),
    "identity": set(),
    "clements": set(),
    "frdft": {"alpha"},
    "waveguide": {"coupling", "z"},
    "haar": {"seed"},
    "perm": {"cycle"},
    "file": set(),
}


def parse_mixer_spec(text: str) -> tuple[str, dict[str, str]]:
    """Split ``family:key=val,key=val`` into a family name and raw values.

    A comma-separated token without ``=`` extends the previous key's value,
    so ``perm:cycle=2,3,1`` keeps the whole list.
    """
    family, _, rest = text.strip().partition(":")
    family = family.strip().lower()
    if family not in FAMILY_KEYS:
        raise UsageError(f"mixer spec {text!r}: unknown family {family!r} at position 0 "
                         f"(expected one of {', '.join(sorted(FAMILY_KEYS))})")
    if family == "file":
        if not rest:
            raise UsageError(f"mixer spec {text!r}: file family needs a path, e.g. file:PATH")
        return family, {"path": rest}
    params: dict[str, str] = {}
    last = None
    pos = len(family) + 1
    for token in rest.split(",") if rest else []:
        if "=" in token:
            key, _, val = token.partition("=")
            key = key.strip()
            if key not in FAMILY_KEYS[family]:
                raise UsageError(f"mixer spec {text!r}: unknown key {key!r} at position {pos} "
                                 f"for family {family!r}")
            if key in params:
                raise UsageError(f"mixer spec {text!r}: duplicate key {key!r} at position {pos}")
            params[key] = val.strip()
            last = key
        elif last is not None:
            params[last] += "," + token.strip()
        else:
            raise UsageError(f"mixer spec {text!r}: expected key=value at position {pos}, got {token!r}")
        pos += len(token) + 1
    return family, params


def _float(spec: str, key: str, raw: str | None, default: float | None = None) -> float:
    if raw is None:
        if default is None:
            raise UsageError(f"mixer spec {spec!r}: missing required key {key!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"mixer spec {spec!r}: {key}={raw!r} is not a number") from None


def _floats(spec: str, key: str, raw: str) -> list[float]:
    try:
        return [float(x) for x in raw.split(",")]
    except ValueError:
        raise UsageError(f"mixer spec {spec!r}: {key}={raw!r} is not a number list") from None


def build_mixers(spec: str, n: int, count: int) -> list[Mixer]:
    """Mixers for one spec, broadcast to ``count`` copies (haar draws ``count`` distinct ones)."""
    family, p = parse_mixer_spec(spec)
    if family == "dft":
        return [dft(n)] * count
    if family == "identity":
        return [Mixer(np.eye(n), "identity")] * count
    if family == "frdft":
        return [frdft(n, _float(spec, "alpha", p.get("alpha")))] * count
    if family == "waveguide":
        z = _float(spec, "z", p.get("z"))
        coupling = _floats(spec, "coupling", p["coupling"]) if "coupling" in p else [0.25]
        if len(coupling) == 1:
            coupling = coupling * (n - 1)
        if len(coupling) != n - 1:
            raise UsageError(f"mixer spec {spec!r}: need 1 or {n - 1} couplings, got {len(coupling)}")
        return [waveguide(n, coupling, z)] * count
    if family == "haar":
        seed = int(_float(spec, "seed", p.get("seed"), 0))
        rng = np.random.default_rng(seed)
        return [Mixer(haar_unitary(n, rng), f"haar(seed={seed},#{j})") for j in range(count)]
    if family == "perm":
        if "cycle" not in p:
            raise UsageError(f"mixer spec {spec!r}: missing required key 'cycle'")
        try:
            return [permutation(n, [int(x) for x in p["cycle"].split(",")])] * count
        except ValueError as exc:
            raise UsageError(f"mixer spec {spec!r}: {exc}") from None
    if family == "file":
        try:
            mat = read_matrix(p["path"])
        except (OSError, ValueError) as exc:
            raise UsageError(f"mixer spec {spec!r}: {exc}") from None
        if mat.shape != (n, n):
            raise UsageError(f"mixer spec {spec!r}: file holds a {mat.shape[0]}x{mat.shape[0]} matrix, N={n}")
        if not is_unitary(mat, 1e-10):
            raise UsageError(f"mixer spec {spec!r}: matrix in {p['path']} is not unitary")
        return [Mixer(mat, f"file:{p['path']}")] * count
    raise UsageError(f"mixer spec {spec!r}: family {family!r} cannot be used here")


def build_stack(specs: Sequence[str], n: int, m: int | None) -> MixerStack:
    """Resolve ``--mixers`` values (';'-separated or repeated) into a stack of M-1 mixers."""
    items = [s for group in specs for s in group.split(";") if s.strip()]
    if not items:
        raise UsageError("no mixers given")
    if n < 2:
        raise UsageError(f"N must be >= 2, got {n}")
    if any(parse_mixer_spec(s)[0] == "clements" for s in items):
        if len(items) != 1:
            raise UsageError("clements describes a whole stack and cannot be combined with other mixers")
        stack = clements_stack(n)
        if m is not None and m != stack.layers:
            raise UsageError(f"clements stack at N={n} has M={stack.layers} layers, got -M {m}")
        return stack
    m = n + 1 if m is None else m
    if m < 1:
        raise UsageError(f"M must be >= 1, got {m}")
    if m == 1:
        return MixerStack.empty(n)
    if len(items) == 1:
        mixers = build_mixers(items[0], n, m - 1)
    elif len(items) == m - 1:
        mixers = [build_mixers(s, n, 1)[0] for s in items]
    else:
        raise UsageError(f"got {len(items)} mixer specs for M={m}; give 1 (broadcast) or {m - 1}")
    return MixerStack(tuple(mixers), n)


def _load_target(path: str) -> np.ndarray:
    try:
        mat = read_matrix(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"target {path}: {exc}") from None
    if not is_unitary(mat, 1e-8):
        raise UsageError(f"target {path} is not unitary")
    return mat


def _parse_grid(text: str) -> np.ndarray:
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            return harness.make_grid(start, stop, step)
        vals = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"invalid grid {text!r}: {exc}") from None
    if len(vals) > 1 and np.any(np.diff(vals) <= 0):
        raise UsageError(f"grid {text!r} must be strictly increasing")
    return vals


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _emit(obj, out: str | None = None) -> None:
    text = json.dumps(obj, indent=2, default=harness._json_default)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _options(args) -> SolveOptions:
    return SolveOptions(
        restarts=args.restarts, seed=args.seed, cost=args.cost,
        tol=getattr(args, "tol", None), phase_agnostic=getattr(args, "phase_agnostic", False),
        early_stop=None if getattr(args, "all_restarts", False) else 1e-12,
    )


# --- commands ------------------------------------------------------------------------

def cmd_certify(args) -> int:
    stack = build_stack(args.mixers, args.N, args.M)
    cert = certify(stack, args.threshold, with_rank_probe=args.rank_probe)
    report = cert.to_dict()
    report["mixers"] = [v.label for v in stack]
    _emit(report, args.out)
    return EXIT_OK if cert.universal else EXIT_NONUNIVERSAL


def cmd_factorize(args) -> int:
    target = _load_target(args.target)
    n = target.shape[0]
    stack = build_stack(args.mixers, n, args.M)
    try:
        result = solve(stack, target, _options(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        result.phases.save(args.out)
    report = result.to_dict()
    report["N"], report["M"] = n, stack.layers
    report["phases"] = result.phases.phases
    _emit(report, args.diagnostics)
    return EXIT_OK if result.converged else EXIT_NOCONVERGE


def cmd_verify(args) -> int:
    target = _load_target(args.target)
    n = target.shape[0]
    try:
        phases = PhaseConfiguration.load(args.phases)
    except (OSError, ValueError) as exc:
        raise UsageError(f"phases {args.phases}: {exc}") from None
    if phases.dimension != n:
        raise UsageError(f"phases are for N={phases.dimension} but the target is {n}x{n}")
    stack = su_stack(build_stack(args.mixers, n, phases.layers))
    t = canonical_target(target)
    u = evaluate(stack, phases)
    cost = geodesic_cost(stack, phases, t)
    report = {
        "N": n,
        "M": stack.layers,
        "geodesic_cost": cost,
        "infidelity": infidelity(stack, phases, t),
        "frobenius_cost": frobenius_cost(stack, phases, t).value,
        "unitarity_residual": float(np.max(np.abs(u.conj().T @ u - np.eye(n)))),
        "tol": args.tol,
        "ok": cost < args.tol,
    }
    _emit(report)
    return EXIT_OK if cost < args.tol else EXIT_NOCONVERGE


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    options = SolveOptions(restarts=args.restarts, seed=args.seed)
    if args.family == "frdft":
        if args.param != "alpha":
            raise UsageError("frdft sweeps take --param alpha")
        records = harness.alpha_sweep(args.N, args.M or args.N + 1, grid, targets=args.targets,
                                      options=options, target_seed=args.seed, jobs=args.jobs)
    else:
        if args.param != "z":
            raise UsageError("waveguide sweeps take --param z")
        records = harness.z_sweep(args.N, args.M or args.N + 1, args.coupling, grid, targets=args.targets,
                                  options=options, target_seed=args.seed, jobs=args.jobs)
    if args.out:
        harness.write_csv(records, args.out, harness.SWEEP_SCHEMA)
    _emit({"points": len(records), "agreement_best": harness.agreement(records, "best"),
           "agreement_all": harness.agreement(records, "all"), "universal": sum(r.universal for r in records),
           "converged_best": sum(r.converged_best for r in records),
           "converged_all": sum(r.converged for r in records)})
    return EXIT_OK


def cmd_robustness(args) -> int:
    scales = [float(x) for x in args.scales.split(",")]
    try:
        study = harness.robustness_study(args.N, args.M or args.N + 1, args.coupling, args.z, scales,
                                         args.trials, args.seed, SolveOptions(restarts=args.restarts, seed=args.seed))
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONVERGE
    if args.out:
        harness.write_csv(study.records, args.out, harness.ROBUSTNESS_SCHEMA)
    summary = {
        "N": study.n, "M": study.m, "coupling": study.coupling, "z": study.z,
        "nominal_cost": study.nominal_cost, "nominal_fidelity": study.nominal_fidelity,
        "scales": [asdict(s) | {"stderr": s.stderr} for s in study.summary()],
    }
    _emit(summary, args.summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    dims = _parse_ints(args.N)
    family, params = parse_mixer_spec(args.mixers)
    if family in ("clements", "file", "haar"):
        raise UsageError(f"bench needs a per-N mixer family, got {family!r}")
    rows = harness.benchmark_suite(
        dims,
        family=lambda n: build_mixers(args.mixers, n, 1)[0],
        targets=args.targets,
        options=SolveOptions(restarts=args.restarts, seed=args.seed),
        ablation=not args.no_ablation,
        ablation_targets=args.ablation_targets,
        seed=args.seed,
    )
    _emit({"schema": harness.BENCH_SCHEMA, "rows": [asdict(r) for r in rows]}, args.out)
    return EXIT_OK


def cmd_sample_haar(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    targets = harness.haar_targets(args.N, args.count, args.seed)
    width = max(3, len(str(max(args.count - 1, 0))))
    for i, t in enumerate(targets):
        write_matrix(t, out / f"haar_{i:0{width}d}.txt")
    _emit({"N": args.N, "count": args.count, "seed": args.seed, "dir": str(out)})
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost", choices=COST_KINDS, default="geodesic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mplc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="det(C) universality certificate for a mixer stack")
    p.add_argument("-N", type=int, required=True)
    p.add_argument("-M", type=int)
    p.add_argument("--mixers", action="append", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--rank-probe", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("factorize", help="recover phases for a target unitary")
    p.add_argument("--target", required=True)
    p.add_argument("--mixers", action="append", required=True)
    p.add_argument("-M", type=int)
    _add_solver_flags(p)
    p.add_argument("--tol", type=float)
    p.add_argument("--phase-agnostic", action="store_true")
    p.add_argument("--all-restarts", action="store_true", help="run every restart even after a hit")
    p.add_argument("--out", help="phase file to write")
    p.add_argument("--diagnostics", help="JSON diagnostics file")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("verify", help="evaluate a phase file against a target")
    p.add_argument("--target", required=True)
    p.add_argument("--mixers", action="append", required=True)
    p.add_argument("--phases", required=True)
    p.add_argument("--tol", type=float, default=1e-18)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="certificate and convergence along a mixer parameter")
    p.add_argument("--family", choices=("frdft", "waveguide"), required=True)
    p.add_argument("--param", choices=("alpha", "z"), required=True)
    p.add_argument("--grid", required=True, help="start:stop:step or comma list")
    p.add_argument("-N", type=int, default=4)
    p.add_argument("-M", type=int)
    p.add_argument("--coupling", type=float, default=0.25)
    p.add_argument("--targets", type=int, default=3)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("robustness", help="fixed-phase fidelity under coupling noise")
    p.add_argument("-N", type=int, default=6)
    p.add_argument("-M", type=int)
    p.add_argument("--coupling", type=float, default=0.25)
    p.add_argument("-z", type=float, default=15.0)
    p.add_argument("--scales", default="0,0.001,0.002,0.005,0.01,0.02,0.05")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("bench", help="Haar benchmark with finite-difference ablation")
    p.add_argument("-N", default="3,4,5")
    p.add_argument("--mixers", default="dft")
    p.add_argument("--targets", type=int, default=50)
    p.add_argument("--ablation-targets", type=int)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-ablation", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sample-haar", help="write Haar-random SU(N) matrices")
    p.add_argument("-N", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample_haar)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
