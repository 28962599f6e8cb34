"""Geodesic, infidelity and Frobenius costs on SU(N) with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .factorization import evaluate_raw, jacobian_from_cache, prefix_suffix_raw, _as_array
from .mixers import MixerStack, su_root

DEGENERACY_GAP = 1e-8
UNITARY_TOL = 1e-8


@dataclass(frozen=True)
class ErrorSpectrum:
    """Eigen-decomposition of Omega = U^dagger U_target by a unitary similarity."""

    omega: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    phases: np.ndarray

    @property
    def min_gap(self) -> float:
        lam = self.eigenvalues
        if len(lam) < 2:
            return np.inf
        diff = np.abs(lam[:, None] - lam[None, :])
        diff[np.diag_indices_from(diff)] = np.inf
        return float(diff.min())

    @property
    def degenerate(self) -> bool:
        return self.min_gap < DEGENERACY_GAP


@dataclass(frozen=True)
class CostReport:
    value: float
    gradient: np.ndarray
    degenerate_flag: bool = False


def _check_unitary(u: np.ndarray, name: str) -> None:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {u.shape}")
    res = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
    if res > UNITARY_TOL:
        raise ValueError(f"{name} is not unitary (residual {res:.3g})")


def spectrum_of(omega: np.ndarray) -> ErrorSpectrum:
    # Omega is normal, so its complex Schur form is diagonal up to rounding
    t, z = scipy.linalg.schur(omega, output="complex", check_finite=False)
    lam = np.diagonal(t).copy()
    return ErrorSpectrum(omega, lam, z, np.angle(lam))


def error_spectrum(u: np.ndarray, target: np.ndarray) -> ErrorSpectrum:
    _check_unitary(u, "U")
    _check_unitary(target, "U_target")
    return spectrum_of(u.conj().T @ target)


def canonical_target(target: np.ndarray) -> np.ndarray:
    """Project a U(N) target into SU(N) by the principal N-th root of its determinant."""
    target = np.asarray(target, dtype=np.complex128)
    return target / su_root(target)


def root_variants(target: np.ndarray) -> list[np.ndarray]:
    """The N SU(N) representatives e^{2 pi i k / N} U_target of one U(N) target."""
    base = canonical_target(target)
    n = base.shape[0]
    return [np.exp(2j * np.pi * k / n) * base for k in range(n)]


# --- raw kernels: (M-1, N, N) mixers, flat phases ----------------------------

def geodesic_value_raw(mixers: np.ndarray, phases: np.ndarray, target: np.ndarray) -> float:
    u = evaluate_raw(mixers, phases.reshape(len(mixers) + 1, -1))
    theta = np.angle(np.linalg.eigvals(u.conj().T @ target))
    return float(theta @ theta)


def geodesic_grad_raw(mixers: np.ndarray, phases: np.ndarray, target: np.ndarray) -> CostReport:
    """sum_k theta_k^2 and its gradient sum_k 2 theta_k Im[v_k^dag dOmega v_k / lambda_k]."""
    cache = prefix_suffix_raw(mixers, phases.reshape(len(mixers) + 1, -1))
    u = cache.unitary
    spec = spectrum_of(u.conj().T @ target)
    theta, lam, vecs = spec.phases, spec.eigenvalues, spec.eigenvectors
    jac = jacobian_from_cache(cache)
    # v_k^dag (J^dag U_t) v_k = sum_b conj((J V)_{bk}) (U_t V)_{bk}
    jv = jac @ vecs
    quad = np.einsum("nbk,bk->nk", jv.conj(), target @ vecs)
    grad = (quad / lam).imag @ (2.0 * theta)
    return CostReport(float(theta @ theta), grad, spec.degenerate)


def infidelity_value_raw(mixers: np.ndarray, phases: np.ndarray, target: np.ndarray) -> float:
    u = evaluate_raw(mixers, phases.reshape(len(mixers) + 1, -1))
    n = u.shape[0]
    return float(1.0 - np.vdot(target, u).real / n)


def infidelity_grad_raw(mixers: np.ndarray, phases: np.ndarray, target: np.ndarray) -> CostReport:
    """-(1/N) Re Tr(X_{r,s} R_r U_t^dag L_r D_r) for every layer r and slot s."""
    cache = prefix_suffix_raw(mixers, phases.reshape(len(mixers) + 1, -1))
    u = cache.unitary
    n = u.shape[0]
    b = cache.right @ target.conj().T @ (cache.left * cache.diag[:, None, :])
    d = np.diagonal(b, axis1=1, axis2=2)
    # Tr(X_s B) = i (B_ss - B_NN)
    tr = 1j * (d[:, :-1] - d[:, -1:])
    grad = -(tr.real / n).reshape(-1)
    value = 1.0 - np.vdot(target, u).real / n
    return CostReport(float(value), grad, False)


def frobenius_value_raw(mixers, phases, target) -> float:
    return 2 * target.shape[0] * infidelity_value_raw(mixers, phases, target)


def frobenius_grad_raw(mixers, phases, target) -> CostReport:
    rep = infidelity_grad_raw(mixers, phases, target)
    n2 = 2 * target.shape[0]
    return CostReport(n2 * rep.value, n2 * rep.gradient, False)


KERNELS = {
    "geodesic": (geodesic_value_raw, geodesic_grad_raw),
    "infidelity": (infidelity_value_raw, infidelity_grad_raw),
    "frobenius": (frobenius_value_raw, frobenius_grad_raw),
}


# --- public API on stacks and phase configurations ----------------------------

def _prepare(stack: MixerStack, phases, target):
    mixers, p = _as_array(stack, phases)
    target = np.asarray(target, dtype=np.complex128)
    if target.shape != (stack.dimension, stack.dimension):
        raise ValueError(f"target shape {target.shape} does not match N={stack.dimension}")
    return mixers, p.reshape(-1), target


def geodesic_cost(stack: MixerStack, phases, target: np.ndarray) -> float:
    """||log(U^dagger U_target)||_F^2 with principal eigenphases in (-pi, pi]."""
    mixers, p, target = _prepare(stack, phases, target)
    _check_unitary(target, "U_target")
    u = evaluate_raw(mixers, p.reshape(stack.layers, -1))
    theta = error_spectrum(u, target).phases
    return float(theta @ theta)


def geodesic_gradient(stack: MixerStack, phases, target: np.ndarray) -> CostReport:
    mixers, p, target = _prepare(stack, phases, target)
    _check_unitary(target, "U_target")
    return geodesic_grad_raw(mixers, p, target)


def infidelity(stack: MixerStack, phases, target: np.ndarray) -> float:
    """1 - (1/N) Re Tr(U_target^dagger U(phi))."""
    mixers, p, target = _prepare(stack, phases, target)
    return infidelity_value_raw(mixers, p, target)


def infidelity_gradient(stack: MixerStack, phases, target: np.ndarray) -> CostReport:
    mixers, p, target = _prepare(stack, phases, target)
    return infidelity_grad_raw(mixers, p, target)


def frobenius_cost(stack: MixerStack, phases, target: np.ndarray) -> CostReport:
    """||U - U_target||_F^2 = 2N - 2 Re Tr(U_target^dagger U), with gradient."""
    mixers, p, target = _prepare(stack, phases, target)
    return frobenius_grad_raw(mixers, p, target)


def jacobian_chain_infidelity(stack: MixerStack, phases, target: np.ndarray) -> np.ndarray:
    """-(1/N) Re Tr(U_target^dagger dU/dphi) straight from the Jacobian; a cross-check route."""
    mixers, p, target = _prepare(stack, phases, target)
    jac = jacobian_from_cache(prefix_suffix_raw(mixers, p.reshape(stack.layers, -1)))
    return -np.einsum("ba,nba->n", target.conj(), jac).real / stack.dimension
