"""Two-stage phase recovery: multi-start truncated Newton, then damped Newton polish."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .costs import KERNELS, CostReport, canonical_target, geodesic_cost, infidelity, root_variants
from .factorization import PhaseConfiguration, evaluate, wrap_phases
from .mixers import MixerStack, su_stack

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
COST_KINDS = tuple(KERNELS)

GradFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SolveOptions:
    restarts: int = 20
    seed: int = 0
    cost: str = "geodesic"
    grad_tol: float = 1e-8
    cost_tol: float = 1e-20
    max_iter_cg: int = 500
    max_iter_polish: int = 50
    fd_step: float | None = None
    phase_agnostic: bool = False
    # geodesic cost below which a result counts as converged; None picks per cost kind
    tol: float | None = None
    # stop drawing restarts once a stage-1 candidate is this good; None runs them all
    early_stop: float | None = 1e-12
    polish_entry: float = 1e-4
    analytic_gradient: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.cost not in KERNELS:
            raise ValueError(f"unknown cost kind {self.cost!r}; expected one of {COST_KINDS}")
        for name in ("grad_tol", "cost_tol", "polish_entry"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.fd_step is not None and self.fd_step <= 0:
            raise ValueError("fd_step must be positive")

    @property
    def success_tol(self) -> float:
        if self.tol is not None:
            return self.tol
        # 1 - Re Tr / N cancels below ~1e-16, which caps trace-based costs
        return 1e-18 if self.cost == "geodesic" else 1e-12


@dataclass
class OptimizationResult:
    phases: PhaseConfiguration
    cost: float
    gradient_norm: float
    infidelity: float
    restarts_used: int
    stage1_iterations: int
    stage2_iterations: int
    converged: bool
    degeneracy_events: int = 0
    objective: str = "geodesic"
    objective_value: float = float("nan")
    restart_index: int = 0
    history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "gradient_norm": self.gradient_norm,
            "infidelity": self.infidelity,
            "objective": self.objective,
            "objective_value": self.objective_value,
            "restarts_used": self.restarts_used,
            "restart_index": self.restart_index,
            "stage1_iterations": self.stage1_iterations,
            "stage2_iterations": self.stage2_iterations,
            "converged": self.converged,
            "degeneracy_events": self.degeneracy_events,
        }


class Problem:
    """Cost and gradient of one (stack, target, cost kind) instance on flat phase vectors."""

    def __init__(self, stack: MixerStack, target: np.ndarray, kind: str = "geodesic",
                 analytic_gradient: bool = True):
        self.stack = stack
        self.mixers = stack.matrices
        self.target = np.asarray(target, dtype=np.complex128)
        self.kind = kind
        self.analytic = analytic_gradient
        self._value, self._grad = KERNELS[kind]
        self.n = stack.dimension
        self.size = stack.layers * (self.n - 1)
        self.degeneracy_events = 0
        self.evaluations = 0

    def value(self, x: np.ndarray) -> float:
        self.evaluations += 1
        return self._value(self.mixers, x, self.target)

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        if not self.analytic:
            return self.value(x), forward_difference_gradient(self.value, x)
        rep: CostReport = self._grad(self.mixers, x, self.target)
        self.evaluations += 1
        if rep.degenerate_flag and rep.value > 1e-12:
            self.degeneracy_events += 1
        return rep.value, rep.gradient

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.value_and_grad(x)[1]


def forward_difference_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """One-sided differences with step sqrt(eps) * max(1, |x_i|); the ablation gradient."""
    f0 = fn(x)
    g = np.empty_like(x)
    for i in range(len(x)):
        h = np.sqrt(EPS) * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        g[i] = (fn(xp) - f0) / h
    return g


def _fd_step(x: np.ndarray, step: float | None) -> float:
    if step is not None:
        return step
    return np.sqrt(EPS) * (1.0 + np.linalg.norm(x, np.inf))


def hessian_vector_fd(grad: GradFn, x: np.ndarray, p: np.ndarray, step: float | None = None) -> np.ndarray:
    """(grad(x + e p) - grad(x - e p)) / (2 e), with e scaled to the length of p."""
    pn = np.linalg.norm(p)
    if pn == 0:
        return np.zeros_like(x)
    e = _fd_step(x, step) / pn
    return (grad(x + e * p) - grad(x - e * p)) / (2 * e)


def hessian_fd(grad: GradFn, x: np.ndarray, step: float | None = None) -> np.ndarray:
    """Central differences of the gradient, symmetrized."""
    k = len(x)
    h = _fd_step(x, step)
    hess = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        hess[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
    return 0.5 * (hess + hess.T)


@dataclass
class StageResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    history: list[float]


def _truncated_cg(hv: Callable[[np.ndarray], np.ndarray], g: np.ndarray, max_iter: int) -> np.ndarray:
    gnorm = np.linalg.norm(g)
    tol = min(0.5, np.sqrt(gnorm)) * gnorm
    d = np.zeros_like(g)
    r = -g
    p = r.copy()
    rr = r @ r
    for i in range(max_iter):
        hp = hv(p)
        curv = p @ hp
        if curv <= 1e-14 * (p @ p):
            return -g if i == 0 else d
        a = rr / curv
        d = d + a * p
        r = r - a * hp
        rr_new = r @ r
        if np.sqrt(rr_new) < tol:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return d


def newton_cg_stage(problem: Problem, x0: np.ndarray, options: SolveOptions) -> StageResult:
    """Truncated Newton with a CG inner solve on finite-difference Hessian-vector products."""
    x = wrap_phases(np.array(x0, dtype=float))
    f, g = problem.value_and_grad(x)
    history = [f]
    stalls = 0
    it = 0
    for it in range(1, options.max_iter_cg + 1):
        gnorm = np.linalg.norm(g)
        if gnorm < options.grad_tol or f == 0.0:
            it -= 1
            break
        d = _truncated_cg(lambda p: hessian_vector_fd(problem.grad, x, p, options.fd_step), g, 2 * len(x))
        slope = g @ d
        if slope >= 0:
            d, slope = -g, -(g @ g)
        t = 1.0
        accepted = False
        while t > 1e-12:
            xn = x + t * d
            fn = problem.value(xn)
            pred = t * slope
            decrease = f - fn
            # a drop far beyond the linear model signals an eigenphase crossing the branch cut
            if fn <= f + 1e-4 * pred and decrease <= 10 * abs(pred) + 1e-300:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        x = wrap_phases(xn)
        f_old = f
        f, g = problem.value_and_grad(x)
        history.append(f)
        stalls = stalls + 1 if f_old - f < 1e-18 else 0
        if stalls >= 5:
            break
    return StageResult(x, f, float(np.linalg.norm(g)), it, history)


def newton_raphson_polish(problem: Problem, candidate: StageResult, options: SolveOptions) -> StageResult:
    """Levenberg-damped Newton on the full finite-difference Hessian."""
    x = candidate.x.copy()
    f, g = problem.value_and_grad(x)
    history = [f]
    lam = 1e-6
    it = 0
    eye = np.eye(len(x))
    for it in range(1, options.max_iter_polish + 1):
        if f < options.cost_tol:
            it -= 1
            break
        hess = hessian_fd(problem.grad, x, options.fd_step)
        try:
            d = np.linalg.solve(hess + lam * eye, -g)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        xn = wrap_phases(x + d)
        fn, gn = problem.value_and_grad(xn)
        if fn < f:
            x, f, g = xn, fn, gn
            history.append(f)
            lam = max(lam * 0.3, 1e-16)
        else:
            lam *= 10
            if lam > 1e12:
                break
    return StageResult(x, f, float(np.linalg.norm(g)), it, history)


def _restart_starts(k: int, restarts: int, seed: int) -> list[np.ndarray]:
    # one independent stream per restart index so serial and parallel runs agree
    return [np.random.default_rng([seed, i]).uniform(0.0, 2 * np.pi, size=k) for i in range(restarts)]


def _solve_one(stack: MixerStack, target: np.ndarray, options: SolveOptions) -> OptimizationResult:
    problem = Problem(stack, target, options.cost, options.analytic_gradient)
    starts = _restart_starts(problem.size, options.restarts, options.seed)
    best: tuple[float, int, StageResult] | None = None
    stage1_iters = 0
    used = 0
    for i, x0 in enumerate(starts):
        res = newton_cg_stage(problem, x0, options)
        stage1_iters += res.iterations
        used += 1
        if best is None or (res.value, i) < (best[0], best[1]):
            best = (res.value, i, res)
        if options.early_stop is not None and res.value < options.early_stop:
            break
    _, idx, cand = best
    polished = newton_raphson_polish(problem, cand, options) if cand.grad_norm < options.polish_entry else cand
    if polished is not cand and polished.value > cand.value:
        polished = cand
    phases = PhaseConfiguration.from_flat(polished.x, stack.dimension)
    cost = geodesic_cost(stack, phases, target)
    return OptimizationResult(
        phases=phases,
        cost=cost,
        gradient_norm=polished.grad_norm,
        infidelity=infidelity(stack, phases, target),
        restarts_used=used,
        stage1_iterations=stage1_iters,
        stage2_iterations=polished.iterations if polished is not cand else 0,
        converged=cost < options.success_tol,
        degeneracy_events=problem.degeneracy_events,
        objective=options.cost,
        objective_value=polished.value,
        restart_index=idx,
        history=cand.history + polished.history[1:] if polished is not cand else cand.history,
    )


def solve(stack: MixerStack, target: np.ndarray, options: SolveOptions | None = None) -> OptimizationResult:
    """Find phases with U(phi) ~ target.

    Mixers and target are both moved into SU(N) first (principal determinant
    root), so the returned phases refer to ``su_stack(stack)``.
    """
    options = options or SolveOptions()
    stack = su_stack(stack)
    target = np.asarray(target, dtype=np.complex128)
    n = stack.dimension
    if target.shape != (n, n):
        raise ValueError(f"target shape {target.shape} does not match N={n}")
    if np.max(np.abs(target.conj().T @ target - np.eye(n))) > 1e-8:
        raise ValueError("target is not unitary")
    if options.phase_agnostic:
        results = [_solve_one(stack, t, options) for t in root_variants(target)]
        return min(results, key=lambda r: r.cost)
    return _solve_one(stack, canonical_target(target), options)


def verify_result(stack: MixerStack, target: np.ndarray, result: OptimizationResult) -> dict:
    stack = su_stack(stack)
    u = evaluate(stack, result.phases)
    return {
        "unitarity_residual": float(np.max(np.abs(u.conj().T @ u - np.eye(stack.dimension)))),
        "cost_recomputed": geodesic_cost(stack, result.phases, canonical_target(target)),
    }


__all__ = [
    "SolveOptions", "OptimizationResult", "Problem", "hessian_fd", "hessian_vector_fd",
    "newton_cg_stage", "newton_raphson_polish", "solve", "forward_difference_gradient", "replace",
]
