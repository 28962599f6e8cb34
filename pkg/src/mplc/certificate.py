"""Universality certificate from the correlation matrix of the transition probabilities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .factorization import probe_rank
from .mixers import Mixer, MixerStack
from .su_algebra import GeneratorBasis, gellmann_basis

DEFAULT_RELATIVE_THRESHOLD = 1e-12
EIG_CLAMP = 1e-10
Q_STRICTNESS = 1e-14


def transition_matrix(v: Mixer | np.ndarray) -> np.ndarray:
    """[P]_ab = |V_ab|^2 (doubly stochastic for unitary V)."""
    if isinstance(v, Mixer):
        if v.probabilities is not None:
            return np.array(v.probabilities)
        v = v.matrix
    v = np.asarray(v)
    return v.real**2 + v.imag**2


def total_transition(stack: MixerStack) -> np.ndarray:
    """Q = P_1 P_2 ... P_{M-1}; the identity for a stack without mixers."""
    q = np.eye(stack.dimension)
    for v in stack:
        q = q @ transition_matrix(v)
    return q


def correlation_matrix(q: np.ndarray, basis: GeneratorBasis | None = None) -> np.ndarray:
    """C_ab = sum_{mu,nu} Q_{mu nu} conj(T^a)_{mu nu} (T^b)_{mu nu}."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    basis = basis if basis is not None else gellmann_basis(n)
    if basis.dimension != n:
        raise ValueError(f"basis is for N={basis.dimension}, Q is {n}x{n}")
    g = basis.generators.reshape(len(basis), -1)
    return (g.conj() * q.reshape(-1)) @ g.T


def clamped_determinant(c: np.ndarray) -> tuple[float, np.ndarray]:
    """det of a Hermitian PSD matrix as the product of its eigenvalues.

    Eigenvalues in (-EIG_CLAMP, 0) are rounding noise and clamped to zero.
    """
    w = np.linalg.eigvalsh(c)
    w = np.where((w < 0) & (w > -EIG_CLAMP), 0.0, w)
    return float(np.prod(w)), w


def dft_reference(n: int) -> float:
    """det(C) for flat Q = J/N: (1/(2N))^(N^2-1)."""
    return (1.0 / (2 * n)) ** (n * n - 1)


def q_positivity(stack: MixerStack, tol: float = Q_STRICTNESS) -> tuple[bool, float]:
    q_min = float(np.min(total_transition(stack)))
    return q_min > tol, q_min


def mixer_entropy(v: Mixer | np.ndarray) -> float:
    """Shannon entropy of P / N as a distribution over the N^2 transitions."""
    p = transition_matrix(v)
    w = p.reshape(-1) / p.shape[0]
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


@dataclass
class Certificate:
    n: int
    layers: int
    q: np.ndarray
    c: np.ndarray | None
    eigenvalues: np.ndarray
    det_c: float
    det_c_dft: float
    ratio: float
    q_min: float
    threshold: float
    universal: bool
    rank_probe: int | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def null_vector(self) -> np.ndarray | None:
        """Eigenvector of C for its smallest eigenvalue (a zero mode when det C = 0)."""
        if self.c is None:
            return None
        _, vecs = np.linalg.eigh(self.c)
        return vecs[:, 0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.n,
            "M": self.layers,
            "detC": self.det_c,
            "detC_dft": self.det_c_dft,
            "ratio": self.ratio,
            "q_min": self.q_min,
            "threshold": self.threshold,
            "universal": self.universal,
            "rank_probe": self.rank_probe,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "Q": self.q.tolist(),
            "notes": list(self.notes),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def certify(
    stack: MixerStack,
    threshold: float | None = None,
    with_rank_probe: bool = False,
    basis: GeneratorBasis | None = None,
    probes: int = 5,
    seed: int = 0,
) -> Certificate:
    """Assemble Q, C and det(C); universal iff det(C) > threshold.

    ``threshold`` defaults to DEFAULT_RELATIVE_THRESHOLD * det(C_DFT) at the
    same N, so the cutoff means the same thing at every dimension.
    """
    n = stack.dimension
    ref = dft_reference(n)
    if threshold is None:
        threshold = DEFAULT_RELATIVE_THRESHOLD * ref
    q = total_transition(stack)
    q_min = float(np.min(q))
    rank = probe_rank(stack, probes=probes, seed=seed) if with_rank_probe else None
    if len(stack) == 0:
        return Certificate(
            n, 1, q, None, np.zeros(0), 0.0, ref, 0.0, q_min, threshold, False, rank,
            ["pure diagonal device (M=1): no mixing, not universal by convention"],
        )
    c = correlation_matrix(q, basis)
    det_c, w = clamped_determinant(c)
    notes = []
    if stack.layers < n + 1:
        notes.append(f"M={stack.layers} < N+1: too few phases to cover SU({n}) regardless of det(C)")
    return Certificate(n, stack.layers, q, c, w, det_c, ref, det_c / ref, q_min, threshold,
                       bool(det_c > threshold), rank, notes)
