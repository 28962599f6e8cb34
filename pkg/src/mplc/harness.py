"""Batch experiments: parameter sweeps, robustness under mixer noise, Haar benchmarks."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .certificate import certify, total_transition
from .costs import canonical_target
from .factorization import PhaseConfiguration, evaluate, probe_rank
from .mixers import Mixer, MixerStack, dft, frdft, haar_unitary, su_stack, waveguide
from .optimizer import SolveOptions, solve

log = logging.getLogger(__name__)

SWEEP_SCHEMA = "mplc-sweep/1"
ROBUSTNESS_SCHEMA = "mplc-robustness/1"
BENCH_SCHEMA = "mplc-bench/1"
CONVERGED_COST = 1e-10


def default_jobs() -> int:
    return int(os.environ.get("MPLC_JOBS", "1"))


def _pool_map(fn, items: Sequence, jobs: int | None) -> list:
    """Map preserving input order; ``jobs`` > 1 uses a process pool."""
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def haar_targets(n: int, count: int, seed: int) -> list[np.ndarray]:
    """Haar-random unitaries moved into SU(N) by the principal determinant root."""
    rng = np.random.default_rng(seed)
    return [canonical_target(haar_unitary(n, rng)) for _ in range(count)]


def make_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid, rounded to kill accumulation error."""
    if step <= 0 or stop < start:
        raise ValueError(f"invalid grid {start}:{stop}:{step}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


# --- sweeps ---------------------------------------------------------------------

@dataclass
class SweepRecord:
    param: float
    det_c: float
    ratio: float
    q_min: float
    universal: bool
    cost_best: float
    cost_mean: float
    cost_worst: float
    infidelity_worst: float
    converged: bool
    converged_best: bool
    targets: int
    wall_time: float
    seed: int

    def agrees(self, rule: str = "best") -> bool:
        """Certificate verdict vs convergence; rule "best" uses the best target, "all" needs every target."""
        return self.universal == (self.converged_best if rule == "best" else self.converged)


def _sweep_point(args) -> SweepRecord:
    family, n, m, value, targets, options, threshold = args
    t0 = time.perf_counter()
    stack = MixerStack.repeat(family(n, value), m - 1)
    cert = certify(stack, threshold)
    results = [solve(stack, t, options) for t in targets]
    costs = np.array([r.cost for r in results])
    infid = max(r.infidelity for r in results) if results else float("nan")
    return SweepRecord(
        param=float(value), det_c=cert.det_c, ratio=cert.ratio, q_min=cert.q_min,
        universal=cert.universal,
        cost_best=float(costs.min()) if len(costs) else float("nan"),
        cost_mean=float(costs.mean()) if len(costs) else float("nan"),
        cost_worst=float(costs.max()) if len(costs) else float("nan"),
        infidelity_worst=float(infid),
        converged=bool(len(costs) and costs.max() < CONVERGED_COST),
        converged_best=bool(len(costs) and costs.min() < CONVERGED_COST),
        targets=len(costs), wall_time=time.perf_counter() - t0, seed=options.seed,
    )


def sweep(
    family: Callable[[int, float], Mixer],
    n: int,
    m: int,
    grid: Iterable[float],
    targets: int = 3,
    options: SolveOptions | None = None,
    target_seed: int = 0,
    threshold: float | None = None,
    jobs: int | None = None,
) -> list[SweepRecord]:
    """Certify and solve a fixed Haar target batch at every grid value of a mixer family.

    Each record carries two convergence flags at 1e-10: ``converged`` (every
    target) and ``converged_best`` (the best target).
    """
    grid = np.asarray(list(grid), dtype=float)
    if len(grid) > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("sweep grid must be strictly increasing")
    options = options or SolveOptions(restarts=8)
    batch = haar_targets(n, targets, target_seed)
    jobs_args = [(family, n, m, float(v), batch, options, threshold) for v in grid]
    return _pool_map(_sweep_point, jobs_args, jobs)


def alpha_sweep(n: int = 4, m: int = 5, grid: Iterable[float] | None = None,
                family: Callable[[int, float], Mixer] = frdft, **kwargs) -> list[SweepRecord]:
    grid = make_grid(0.0, 1.0, 0.02) if grid is None else grid
    return sweep(family, n, m, grid, **kwargs)


def waveguide_family(coupling: float) -> Callable[[int, float], Mixer]:
    return partial(_waveguide_at, coupling)


def _waveguide_at(coupling: float, n: int, z: float) -> Mixer:
    return waveguide(n, coupling, z)


def z_sweep(n: int = 4, m: int = 5, coupling: float = 0.25, grid: Iterable[float] | None = None,
            **kwargs) -> list[SweepRecord]:
    grid = make_grid(0.0, 25.0, 0.25) if grid is None else grid
    return sweep(waveguide_family(coupling), n, m, grid, **kwargs)


def agreement(records: Sequence[SweepRecord], rule: str = "best") -> float:
    if rule not in ("best", "all"):
        raise ValueError(f"unknown agreement rule {rule!r}")
    return float(np.mean([r.agrees(rule) for r in records])) if records else float("nan")


# --- robustness -------------------------------------------------------------------

@dataclass
class RobustnessRecord:
    scale: float
    trial: int
    fidelity: float


@dataclass
class RobustnessSummary:
    scale: float
    trials: int
    mean: float
    std: float

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.trials) if self.trials > 1 else 0.0


@dataclass
class RobustnessStudy:
    n: int
    m: int
    coupling: float
    z: float
    nominal_cost: float
    nominal_fidelity: float
    records: list[RobustnessRecord]
    target_index: int = 0

    def summary(self) -> list[RobustnessSummary]:
        out = []
        for s in sorted({r.scale for r in self.records}):
            f = np.array([r.fidelity for r in self.records if r.scale == s])
            out.append(RobustnessSummary(s, len(f), float(f.mean()), float(f.std(ddof=1)) if len(f) > 1 else 0.0))
        return out


def fidelity(u: np.ndarray, target: np.ndarray) -> float:
    return float(np.vdot(target, u).real / u.shape[0])


def robustness_study(
    n: int = 6,
    m: int = 7,
    coupling: float = 0.25,
    z: float = 15.0,
    scales: Sequence[float] = (0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05),
    trials: int = 100,
    seed: int = 0,
    options: SolveOptions | None = None,
    target: np.ndarray | None = None,
    target_attempts: int = 20,
) -> RobustnessStudy:
    """Fixed nominal phases evaluated on mixers whose couplings are redrawn ~ N(coupling, scale^2).

    Each of the M-1 mixers gets its own independent coupling draw. Without an
    explicit target, Haar targets are drawn in turn until one yields a
    converged nominal solve (at most ``target_attempts``).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    options = options or SolveOptions(restarts=50, seed=seed)
    stack = MixerStack.repeat(waveguide(n, coupling, z), m - 1)
    if target is not None:
        candidates = [canonical_target(target)]
    else:
        candidates = haar_targets(n, target_attempts, seed)
    for target_index, target in enumerate(candidates):
        nominal = solve(stack, target, options)
        if nominal.converged:
            break
        log.info("robustness: target %d did not converge (cost %.3g)", target_index, nominal.cost)
    else:
        raise RuntimeError(f"nominal solve did not converge on {len(candidates)} target(s) "
                           f"(last cost {nominal.cost:.3g})")
    phases = nominal.phases
    nominal_fid = fidelity(evaluate(su_stack(stack), phases), target)
    rng = np.random.default_rng([seed, 1])
    records = []
    for scale in scales:
        for trial in range(trials):
            mixers = [waveguide(n, rng.normal(coupling, scale, size=n - 1) if scale > 0 else coupling, z)
                      for _ in range(m - 1)]
            u = evaluate(su_stack(MixerStack(tuple(mixers))), phases)
            records.append(RobustnessRecord(float(scale), trial, fidelity(u, target)))
    return RobustnessStudy(n, m, coupling, z, nominal.cost, nominal_fid, records, target_index)


# --- benchmarks -------------------------------------------------------------------

@dataclass
class BenchRow:
    n: int
    m: int
    config: str
    targets: int
    success_rate: float
    median_cost: float
    min_cost: float
    max_cost: float
    median_wall: float


def ablation_options(options: SolveOptions) -> SolveOptions:
    """Same pipeline with forward-difference gradients instead of the analytic ones."""
    return replace(options, analytic_gradient=False, fd_step=1e-5, max_iter_cg=200)


def _bench_one(args) -> tuple[float, float]:
    stack, target, options = args
    t0 = time.perf_counter()
    res = solve(stack, target, options)
    return res.cost, time.perf_counter() - t0


def benchmark_suite(
    dims: Sequence[int] = (3, 4, 5),
    m_rule: Callable[[int], int] = lambda n: n + 1,
    family: Callable[[int], Mixer] = dft,
    targets: int = 50,
    options: SolveOptions | None = None,
    ablation: bool = True,
    ablation_targets: int | None = None,
    seed: int = 0,
    success_cost: float = 1e-18,
    jobs: int | None = None,
) -> list[BenchRow]:
    """Solve Haar batches per N; optionally rerun with finite-difference gradients."""
    options = options or SolveOptions(restarts=50)
    configs = [("analytic", options, targets)]
    if ablation:
        configs.append(("fd", ablation_options(options), ablation_targets or targets))
    rows = []
    for n in dims:
        m = m_rule(n)
        stack = MixerStack.repeat(family(n), m - 1)
        batch = haar_targets(n, targets, seed + n)
        for name, opts, count in configs:
            out = _pool_map(_bench_one, [(stack, t, replace(opts, seed=opts.seed + i))
                                         for i, t in enumerate(batch[:count])], jobs)
            costs = np.array([c for c, _ in out])
            walls = np.array([w for _, w in out])
            rows.append(BenchRow(n, m, name, len(costs), float(np.mean(costs < success_cost)),
                                 float(np.median(costs)), float(costs.min()), float(costs.max()),
                                 float(np.median(walls))))
            log.info("bench N=%d %s: success %.2f median %.3g", n, name, rows[-1].success_rate, rows[-1].median_cost)
    return rows


# --- certificate surveys -----------------------------------------------------------

@dataclass
class SurveyCase:
    family: str
    n: int
    m: int
    params: str
    q_positive: bool
    q_min: float
    universal: bool
    ratio: float
    rank: int

    @property
    def full_rank(self) -> bool:
        return self.rank == self.n * self.n - 1


def random_stack(rng: np.random.Generator, n: int, m: int, family: str) -> tuple[MixerStack, str]:
    """Random stacks for cross-validation surveys; every mixer is drawn independently."""
    if family == "haar":
        return MixerStack(tuple(Mixer(haar_unitary(n, rng)) for _ in range(m - 1))), "haar"
    if family == "waveguide":
        zs = rng.uniform(0.5, 25.0, size=m - 1)
        c = rng.uniform(0.1, 1.0, size=(m - 1, n - 1))
        return MixerStack(tuple(waveguide(n, c[j], zs[j]) for j in range(m - 1))), f"z={np.round(zs, 4).tolist()}"
    if family == "frdft":
        alpha = rng.uniform(0.0, 1.0)
        return MixerStack.repeat(frdft(n, alpha), m - 1), f"alpha={alpha:.6f}"
    raise ValueError(f"unknown family {family!r}")


def criterion_survey(count: int = 1000, dims: Sequence[int] = (2, 3, 4, 5),
                     families: Sequence[str] = ("haar", "waveguide", "frdft"), seed: int = 0,
                     extra_layers: int = 2) -> list[SurveyCase]:
    """det(C) verdict vs Q positivity vs 5-probe Jacobian rank on random stacks with M >= N+1."""
    rng = np.random.default_rng(seed)
    cases = []
    for i in range(count):
        n = int(dims[i % len(dims)])
        fam = families[(i // len(dims)) % len(families)]
        m = n + 1 + int(rng.integers(0, extra_layers + 1))
        stack, params = random_stack(rng, n, m, fam)
        cert = certify(stack)
        rank = probe_rank(stack, probes=5, seed=i)
        cases.append(SurveyCase(fam, n, m, params, cert.q_min > 1e-14, cert.q_min, cert.universal, cert.ratio, rank))
    return cases


def _haar_stacks(count: int, n: int, m: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield MixerStack(tuple(Mixer(haar_unitary(n, rng)) for _ in range(m - 1)))


def dft_optimality_survey(count: int = 500, n: int = 3, m: int = 4, seed: int = 0) -> np.ndarray:
    """det(C) / det(C_DFT) for stacks of independent Haar mixers."""
    return np.array([certify(s).ratio for s in _haar_stacks(count, n, m, seed)])


def dft_counterexamples(count: int = 500, n: int = 3, m: int = 4, seed: int = 0,
                        slack: float = 1e-9) -> list[dict]:
    """Full instance data for every Haar stack with det(C) > det(C_DFT) (1 + slack)."""
    out = []
    for i, stack in enumerate(_haar_stacks(count, n, m, seed)):
        cert = certify(stack)
        if cert.ratio > 1 + slack:
            out.append({
                "index": i, "seed": seed, "N": n, "M": m, "ratio": cert.ratio, "detC": cert.det_c,
                "trace_Q": float(np.trace(cert.q)), "Q": cert.q.tolist(),
                "mixers_re": [v.matrix.real.tolist() for v in stack],
                "mixers_im": [v.matrix.imag.tolist() for v in stack],
            })
    return out


def unitary_with_zero_corner(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar unitary with its first two columns rotated so that W[0, 0] = 0."""
    v = haar_unitary(n, rng)
    a, b = v[0, 0], v[0, 1]
    r = np.hypot(abs(a), abs(b))
    g = np.array([[b, np.conj(a)], [-a, np.conj(b)]]) / r
    w = v.copy()
    w[:, :2] = v[:, :2] @ g
    return w


def diagonal_zero_search(n: int = 3, m: int | None = None, trials: int = 200, seed: int = 0) -> list[dict]:
    """Stacks whose Q has a single vanishing entry, on the diagonal.

    V_1 has a zero at (1, 1); the remaining mixers fix mode 1 and mix the
    other N-1 modes with Haar blocks, so Q[1, 1] = 0 while every other entry
    is generically positive. Reports det(C) and the probed Jacobian rank.
    """
    m = n + 1 if m is None else m
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        mixers = [Mixer(unitary_with_zero_corner(n, rng))]
        for _ in range(m - 2):
            b = np.eye(n, dtype=np.complex128)
            b[1:, 1:] = haar_unitary(n - 1, rng)
            mixers.append(Mixer(b))
        stack = MixerStack(tuple(mixers))
        q = total_transition(stack)
        cert = certify(stack)
        out.append({
            "q_diag_min": float(np.min(np.diagonal(q))),
            "q_offdiag_min": float(np.min(q[~np.eye(n, dtype=bool)])),
            "det_c": cert.det_c,
            "ratio": cert.ratio,
            "universal": cert.universal,
            "rank": probe_rank(stack, probes=5),
            "full_rank": n * n - 1,
        })
    return out


# --- output --------------------------------------------------------------------------

def write_csv(records: Sequence, path: str | Path, schema: str) -> None:
    if not records:
        raise ValueError("nothing to write")
    names = [f.name for f in fields(records[0])]
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in records:
            writer.writerow([_fmt(getattr(r, k)) for k in names])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
