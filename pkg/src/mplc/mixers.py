"""Fixed mixer families and the stacks they form."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNITARITY_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mixer:
    """A fixed unitary interleaved between phase layers.

    ``probabilities`` optionally holds the closed-form |V_ab|^2 for families
    where it is an exactly representable table (2x2 beam-splitter blocks,
    permutations); it takes precedence over squaring ``matrix`` entries.
    """

    matrix: np.ndarray
    label: str = ""
    probabilities: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"mixer must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", _frozen(m))
        if self.probabilities is not None:
            object.__setattr__(self, "probabilities", _frozen(np.asarray(self.probabilities, dtype=float)))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def unitarity_residual(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(self.dimension))))

    def check_unitary(self, tol: float = UNITARITY_TOL) -> None:
        res = self.unitarity_residual()
        if res > tol:
            raise ValueError(f"mixer {self.label or '?'} is not unitary (residual {res:.3g})")


@dataclass(frozen=True)
class MixerStack:
    """Ordered mixers V_1 ... V_{M-1}; the device has M = len(stack) + 1 phase layers.

    An empty stack (a single diagonal layer, M = 1) must name its dimension.
    """

    mixers: tuple[Mixer, ...]
    n: int | None = None

    def __post_init__(self):
        mixers = tuple(self.mixers)
        if not mixers and self.n is None:
            raise ValueError("an empty mixer stack needs an explicit dimension")
        n = mixers[0].dimension if mixers else int(self.n)
        if self.n is not None and int(self.n) != n:
            raise ValueError(f"declared dimension {self.n} but mixers have dimension {n}")
        for j, v in enumerate(mixers):
            if v.dimension != n:
                raise ValueError(f"mixer {j} has dimension {v.dimension}, expected {n}")
        object.__setattr__(self, "mixers", mixers)
        object.__setattr__(self, "n", n)

    @classmethod
    def repeat(cls, mixer: Mixer, count: int) -> "MixerStack":
        return cls((mixer,) * count, mixer.dimension)

    @classmethod
    def empty(cls, n: int) -> "MixerStack":
        return cls((), n)

    def __len__(self) -> int:
        return len(self.mixers)

    def __iter__(self):
        return iter(self.mixers)

    def __getitem__(self, j):
        return self.mixers[j]

    @property
    def dimension(self) -> int:
        return self.n

    @property
    def layers(self) -> int:
        return len(self.mixers) + 1

    @cached_property
    def matrices(self) -> np.ndarray:
        if not self.mixers:
            return _frozen(np.zeros((0, self.n, self.n), dtype=np.complex128))
        return _frozen(np.stack([v.matrix for v in self.mixers]))


def _check_dim(n: int) -> None:
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")


def dft(n: int) -> Mixer:
    _check_dim(n)
    idx = np.arange(n)
    v = np.exp(2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    return Mixer(v, f"dft(N={n})")


def _dft_projectors(n: int) -> list[tuple[complex, np.ndarray]]:
    """Spectral projectors of the unitary DFT onto its eigenvalues {1, i, -1, -i}.

    Uses F^4 = I, so P_lam = (1/4) sum_m lam^{-m} F^m exactly.
    """
    f = dft(n).matrix
    powers = [np.eye(n, dtype=np.complex128), f]
    for _ in range(2):
        powers.append(powers[-1] @ f)
    out = []
    for lam in (1, 1j, -1, -1j):
        p = sum(lam ** (-m) * powers[m] for m in range(4)) / 4
        if np.linalg.norm(p) > 1e-9:
            out.append((complex(lam), p))
    return out


def frdft(n: int, alpha: float) -> Mixer:
    """Fractional DFT F^alpha via the spectral decomposition, principal branch per eigenvalue."""
    _check_dim(n)
    v = np.zeros((n, n), dtype=np.complex128)
    for lam, proj in _dft_projectors(n):
        v += np.exp(alpha * 1j * np.angle(lam)) * proj
    return Mixer(v, f"frdft(N={n},alpha={alpha!r})")


def permutation(n: int, perm: Sequence[int]) -> Mixer:
    """Permutation mixer with V[sigma(a), a] = 1; ``perm`` is sigma in 1-based one-line form."""
    perm = [int(p) for p in perm]
    if len(perm) != n or sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"{perm} is not a permutation of 1..{n}")
    v = np.zeros((n, n))
    for a, s in enumerate(perm):
        v[s - 1, a] = 1.0
    return Mixer(v.astype(np.complex128), f"perm({','.join(map(str, perm))})", probabilities=v)


def cyclic_permutation(n: int) -> Mixer:
    """The cycle 1 -> N, k -> k-1; rows read (0,1,0..),(0,0,1,..),...,(1,0,..)."""
    return permutation(n, [n] + list(range(1, n)))


def _block_mixer(n: int, start: int) -> Mixer:
    s = np.sqrt(0.5)
    v = np.eye(n, dtype=np.complex128)
    p = np.eye(n)
    for a in range(start, n - 1, 2):
        v[a : a + 2, a : a + 2] = [[s, 1j * s], [1j * s, s]]
        p[a : a + 2, a : a + 2] = 0.5
    return Mixer(v, f"clements_block(N={n},start={start + 1})", probabilities=p)


def clements_stack(n: int) -> MixerStack:
    """2N beam-splitter layers ordered V1 V1 V2 V2 V1 V1 ... (odd blocks, even blocks)."""
    _check_dim(n)
    odd, even = _block_mixer(n, 0), _block_mixer(n, 1)
    if n == 2:
        return MixerStack.repeat(odd, 4)
    seq = [odd if (j // 2) % 2 == 0 else even for j in range(2 * n)]
    return MixerStack(tuple(seq))


def waveguide_hamiltonian(couplings: Sequence[float]) -> np.ndarray:
    c = np.asarray(couplings, dtype=float)
    n = len(c) + 1
    h = np.zeros((n, n))
    h[np.arange(n - 1), np.arange(1, n)] = c
    h[np.arange(1, n), np.arange(n - 1)] = c
    return h


def waveguide(n: int, couplings: Sequence[float] | float, z: float) -> Mixer:
    """exp(-i H z) for the nearest-neighbour coupled-waveguide Hamiltonian."""
    _check_dim(n)
    if np.isscalar(couplings):
        couplings = [float(couplings)] * (n - 1)
    if len(couplings) != n - 1:
        raise ValueError(f"expected {n - 1} couplings for N={n}, got {len(couplings)}")
    w, vecs = np.linalg.eigh(waveguide_hamiltonian(couplings))
    v = (vecs * np.exp(-1j * w * z)) @ vecs.T
    return Mixer(v, f"waveguide(N={n},z={z!r})")


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def haar_random(n: int, seed: int | np.random.Generator | None = None) -> Mixer:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Mixer(haar_unitary(n, rng), f"haar(N={n},seed={seed if not isinstance(seed, np.random.Generator) else 'rng'})")


def su_root(matrix: np.ndarray) -> complex:
    """Principal N-th root of det(matrix)."""
    n = matrix.shape[0]
    return np.exp(1j * np.angle(np.linalg.det(matrix)) / n)


def su_normalize(v: Mixer) -> Mixer:
    """Divide by the principal N-th root of det so the mixer lies in SU(N)."""
    root = su_root(v.matrix)
    if root == 1:
        return v
    return Mixer(v.matrix / root, v.label, probabilities=v.probabilities)


def su_stack(stack: MixerStack) -> MixerStack:
    """Stack with every mixer moved into SU(N); returns ``stack`` itself when already there."""
    if all(abs(np.linalg.det(v.matrix) - 1) < 1e-13 for v in stack):
        return stack
    return MixerStack(tuple(su_normalize(v) for v in stack), stack.dimension)


# --- matrix text format -------------------------------------------------------

def format_complex(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def write_matrix(matrix: np.ndarray, dest: str | Path | io.TextIOBase) -> None:
    """Write N, then N rows of N ``re+imj`` entries at 17 significant digits."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    lines = [str(matrix.shape[0])]
    lines += [" ".join(format_complex(z) for z in row) for row in matrix]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)


def parse_matrix(text: str) -> np.ndarray:
    tokens = " ".join(line.split("#", 1)[0] for line in text.splitlines()).split()
    if not tokens:
        raise ValueError("empty matrix file")
    try:
        n = int(tokens[0])
    except ValueError:
        raise ValueError(f"first token must be the dimension, got {tokens[0]!r}") from None
    entries = tokens[1:]
    if n < 1 or len(entries) != n * n:
        raise ValueError(f"expected {n * n} entries for N={n}, got {len(entries)}")
    try:
        vals = [complex(t) for t in entries]
    except ValueError as exc:
        raise ValueError(f"bad complex entry: {exc}") from None
    return np.array(vals, dtype=np.complex128).reshape(n, n)


def read_matrix(path: str | Path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def is_unitary(matrix: np.ndarray, tol: float = 1e-8) -> bool:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0])))) <= tol


def stack_from(mixers: Iterable[Mixer | np.ndarray]) -> MixerStack:
    return MixerStack(tuple(v if isinstance(v, Mixer) else Mixer(v) for v in mixers))
