"""The layered map phi -> D_1 V_1 D_2 ... V_{M-1} D_M and its Jacobian.

Flattened phase vectors are layer-major: index j * (N - 1) + alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .mixers import MixerStack
from .su_algebra import gellmann_basis, layer_diagonal

TWO_PI = 2.0 * np.pi


def wrap_phases(phases: np.ndarray) -> np.ndarray:
    out = np.mod(phases, TWO_PI)
    # mod can round up to exactly 2*pi for tiny negative inputs
    out[out >= TWO_PI] = 0.0
    return out


@dataclass(frozen=True)
class PhaseConfiguration:
    """M x (N-1) programmable phases, reduced to [0, 2*pi)."""

    phases: np.ndarray

    def __post_init__(self):
        p = np.array(self.phases, dtype=float)
        if p.ndim != 2 or p.shape[1] < 1:
            raise ValueError(f"phases must be an M x (N-1) array, got shape {p.shape}")
        p = wrap_phases(p)
        p.setflags(write=False)
        object.__setattr__(self, "phases", p)

    @classmethod
    def from_flat(cls, flat: np.ndarray, n: int) -> "PhaseConfiguration":
        return cls(np.asarray(flat, dtype=float).reshape(-1, n - 1))

    @classmethod
    def zeros(cls, n: int, m: int) -> "PhaseConfiguration":
        return cls(np.zeros((m, n - 1)))

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator) -> "PhaseConfiguration":
        return cls(rng.uniform(0.0, TWO_PI, size=(m, n - 1)))

    @property
    def dimension(self) -> int:
        return self.phases.shape[1] + 1

    @property
    def layers(self) -> int:
        return self.phases.shape[0]

    @property
    def size(self) -> int:
        return self.phases.size

    @property
    def flat(self) -> np.ndarray:
        return self.phases.reshape(-1)

    def to_text(self) -> str:
        lines = [str(self.dimension), str(self.layers)]
        lines += [" ".join(f"{x:.17g}" for x in row) for row in self.phases]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PhaseConfiguration":
        tokens = " ".join(line.split("#", 1)[0] for line in text.splitlines()).split()
        if len(tokens) < 2:
            raise ValueError("phase file must start with N and M")
        try:
            n, m = int(tokens[0]), int(tokens[1])
            vals = [float(t) for t in tokens[2:]]
        except ValueError as exc:
            raise ValueError(f"malformed phase file: {exc}") from None
        if n < 2 or m < 1 or len(vals) != m * (n - 1):
            raise ValueError(f"expected {m * (n - 1)} phases for N={n}, M={m}, got {len(vals)}")
        return cls(np.array(vals).reshape(m, n - 1))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "PhaseConfiguration":
        return cls.from_text(Path(path).read_text())


class PrefixSuffixCache(NamedTuple):
    """left[j] = D_1 V_1 ... V_{j-1}, right[j] = V_j D_{j+1} ... D_M, diag[j] = diagonal of D_j."""

    left: np.ndarray
    right: np.ndarray
    diag: np.ndarray

    @property
    def unitary(self) -> np.ndarray:
        return self.diag[0][:, None] * self.right[0]


def _as_array(stack: MixerStack, phases) -> tuple[np.ndarray, np.ndarray]:
    n = stack.dimension
    if isinstance(phases, PhaseConfiguration):
        p = phases.phases
    else:
        p = np.asarray(phases, dtype=float).reshape(-1, n - 1)
    if p.shape != (stack.layers, n - 1):
        raise ValueError(
            f"stack with {len(stack)} mixers at N={n} needs {stack.layers} x {n - 1} phases, got {p.shape}"
        )
    return stack.matrices, p


def evaluate_raw(mixers: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """U(phi) for an (M-1, N, N) mixer array and an (M, N-1) phase array; no checks."""
    d = layer_diagonal(phases)
    u = d[0][:, None] * mixers[0] if len(mixers) else np.diag(d[0])
    for j in range(1, len(mixers)):
        u = (u * d[j]) @ mixers[j]
    if len(mixers):
        u = u * d[-1]
    return u


def evaluate(stack: MixerStack, phases) -> np.ndarray:
    mixers, p = _as_array(stack, phases)
    return evaluate_raw(mixers, p)


def prefix_suffix_raw(mixers: np.ndarray, phases: np.ndarray) -> PrefixSuffixCache:
    d = layer_diagonal(phases)
    m, n = d.shape
    left = np.empty((m, n, n), dtype=np.complex128)
    right = np.empty((m, n, n), dtype=np.complex128)
    left[0] = np.eye(n)
    for j in range(1, m):
        left[j] = (left[j - 1] * d[j - 1]) @ mixers[j - 1]
    right[m - 1] = np.eye(n)
    for j in range(m - 2, -1, -1):
        right[j] = mixers[j] @ (d[j + 1][:, None] * right[j + 1])
    return PrefixSuffixCache(left, right, d)


def prefix_suffix(stack: MixerStack, phases) -> PrefixSuffixCache:
    mixers, p = _as_array(stack, phases)
    return prefix_suffix_raw(mixers, p)


def jacobian_from_cache(cache: PrefixSuffixCache) -> np.ndarray:
    """dU/dphi_{j,alpha} = L_j D_j X_alpha R_j, shape (M * (N-1), N, N).

    X_alpha only touches rows alpha and N of R_j, so each entry is a
    difference of two outer products.
    """
    left_d = cache.left * cache.diag[:, None, :]
    # outer[j, r, mu, c] = (L_j D_j)[r, mu] * R_j[mu, c]
    outer = left_d[:, :, :, None] * cache.right[:, None, :, :]
    jac = 1j * (outer[:, :, :-1, :] - outer[:, :, -1:, :])
    m, n = cache.diag.shape
    return jac.transpose(0, 2, 1, 3).reshape(m * (n - 1), n, n)


def jacobian(stack: MixerStack, phases) -> np.ndarray:
    return jacobian_from_cache(prefix_suffix(stack, phases))


def tangent_coefficients(stack: MixerStack, phases, basis=None) -> np.ndarray:
    """Real (N^2 - 1) x k matrix of (dU/dphi) U^dagger expanded in {i T^a}."""
    n = stack.dimension
    basis = basis if basis is not None else gellmann_basis(n)
    cache = prefix_suffix(stack, phases)
    jac = jacobian_from_cache(cache)
    tangents = jac @ cache.unitary.conj().T
    # c^a = 2 Im Tr(T^a A)
    return 2.0 * np.einsum("aij,kji->ak", basis.generators, tangents).imag


def jacobian_rank(stack: MixerStack, phases, tol: float = 1e-10) -> int:
    s = np.linalg.svd(tangent_coefficients(stack, phases), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def probe_rank(stack: MixerStack, probes: int = 5, seed: int = 0, tol: float = 1e-10) -> int:
    """Max Jacobian rank over ``probes`` uniformly drawn phase points."""
    rng = np.random.default_rng(seed)
    n, m = stack.dimension, stack.layers
    return max(jacobian_rank(stack, PhaseConfiguration.random(n, m, rng), tol) for _ in range(probes))
