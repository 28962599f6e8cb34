"""Generators of su(N) and the diagonal phase layers built from them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GeneratorBasis:
    """Orthonormal Hermitian traceless basis of su(N), Tr(T^a T^b) = delta_ab / 2.

    ``generators`` has shape (N^2 - 1, N, N). Ordering: symmetric off-diagonal
    pairs, antisymmetric off-diagonal pairs, then diagonal generators, each in
    row-major (j < k) index order.
    """

    dimension: int
    generators: np.ndarray

    def __len__(self) -> int:
        return self.generators.shape[0]

    def __iter__(self):
        return iter(self.generators)

    def __getitem__(self, a: int) -> np.ndarray:
        return self.generators[a]


@dataclass(frozen=True)
class PhaseGenerator:
    """X_alpha = i (E_{alpha,alpha} - E_{N,N}); ``slot`` is 1-based."""

    dimension: int
    slot: int
    matrix: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def gellmann_basis(n: int) -> GeneratorBasis:
    """Generalized Gell-Mann matrices normalized to Tr(T^a T^b) = delta_ab / 2."""
    if n < 2:
        raise ValueError(f"su(N) basis needs N >= 2, got {n}")
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    gens = np.zeros((n * n - 1, n, n), dtype=np.complex128)
    a = 0
    for j, k in pairs:
        gens[a, j, k] = gens[a, k, j] = 0.5
        a += 1
    for j, k in pairs:
        gens[a, j, k] = -0.5j
        gens[a, k, j] = 0.5j
        a += 1
    for l in range(1, n):
        diag = np.zeros(n)
        diag[:l] = 1.0
        diag[l] = -l
        gens[a] = np.diag(diag / np.sqrt(2.0 * l * (l + 1)))
        a += 1
    return GeneratorBasis(n, _frozen(gens))


def check_basis(basis: GeneratorBasis, atol: float = 1e-13) -> None:
    """Raise AssertionError unless ``basis`` is Hermitian, traceless and orthonormal."""
    g = basis.generators
    n = basis.dimension
    if g.shape != (n * n - 1, n, n):
        raise AssertionError(f"expected {n * n - 1} generators of size {n}, got {g.shape}")
    herm = np.max(np.abs(g - g.conj().transpose(0, 2, 1)))
    if herm > 1e-14:
        raise AssertionError(f"generator not Hermitian (residual {herm:.3g})")
    tr = np.max(np.abs(np.trace(g, axis1=1, axis2=2)))
    if tr > 1e-14:
        raise AssertionError(f"generator not traceless (|Tr| = {tr:.3g})")
    gram = np.einsum("aij,bji->ab", g, g)
    err = np.max(np.abs(gram - 0.5 * np.eye(len(g))))
    if err > atol:
        raise AssertionError(f"basis not orthonormal (residual {err:.3g})")


def phase_generator(n: int, slot: int) -> PhaseGenerator:
    if not 1 <= slot <= n - 1:
        raise ValueError(f"slot must lie in 1..{n - 1}, got {slot}")
    x = np.zeros((n, n), dtype=np.complex128)
    x[slot - 1, slot - 1] = 1j
    x[n - 1, n - 1] = -1j
    return PhaseGenerator(n, slot, _frozen(x))


def layer_diagonal(phases: np.ndarray) -> np.ndarray:
    """Diagonal entries (e^{i phi_1}, ..., e^{i phi_{N-1}}, e^{-i sum phi}).

    Accepts a trailing axis of N-1 phases; leading axes are broadcast.
    """
    phases = np.asarray(phases, dtype=float)
    full = np.concatenate([phases, -phases.sum(axis=-1, keepdims=True)], axis=-1)
    return np.exp(1j * full)


def diagonal_layer(n: int, phases: Sequence[float]) -> np.ndarray:
    """D = exp(sum_alpha phi_alpha X_alpha), built from its closed diagonal form."""
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (n - 1,):
        raise ValueError(f"expected {n - 1} phases for N={n}, got shape {phases.shape}")
    return np.diag(layer_diagonal(phases))
