"""
Truncated spin-boson Hilbert spaces.

Basis convention
----------------
The spin index is ``s = 0`` for spin down and ``s = 1`` for spin up, so that
``sigma_z = diag(-1, +1)``.  A bosonic cutoff ``n_max`` keeps the Fock levels
``0..n_max`` inclusive.

* one mode:  ``index = 2 n + s`` (spin is the fast index)
* two modes: ``index = s N_r N_l + n_r N_l + n_l`` (lexicographic in
  ``(s, n_r, n_l)`` with ``N_i = n_max_i + 1``)

The single-mode interleaving makes each parity sector of the Rabi model a
plain index selection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

SPIN_DOWN = 0
SPIN_UP = 1

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]])  # (down, up) ordering
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]])
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]])  # |up><down|
SIGMA_MINUS = SIGMA_PLUS.T.copy()
SPIN_UP_PROJECTOR = np.diag([0.0, 1.0])
SPIN_DOWN_PROJECTOR = np.diag([1.0, 0.0])

_SPIN_LABELS = {
    "up": SPIN_UP, "u": SPIN_UP, "↑": SPIN_UP,
    "down": SPIN_DOWN, "d": SPIN_DOWN, "dn": SPIN_DOWN, "↓": SPIN_DOWN,
}
_SQRT_HALF = 1.0 / np.sqrt(2.0)


def spinor(label) -> np.ndarray:
    """Two-component spinor in (down, up) order for a spin label.

    Accepts ``up``/``down`` (also ``↑``/``↓``) and the sigma_x eigenstates
    ``+``/``-`` with ``|±> = (|up> ± |down>)/sqrt(2)``.  An explicit length-2
    array is normalized and returned.
    """
    if not isinstance(label, str):
        vec = np.asarray(label, dtype=complex)
        if vec.shape != (2,):
            raise ValueError(f"spinor must have two components, got shape {vec.shape}")
        return vec / np.linalg.norm(vec)
    key = label.strip().lower()
    if key in ("+", "plus"):
        return np.array([_SQRT_HALF, _SQRT_HALF], dtype=complex)
    if key in ("-", "minus", "−"):
        return np.array([-_SQRT_HALF, _SQRT_HALF], dtype=complex)
    if key in _SPIN_LABELS:
        out = np.zeros(2, dtype=complex)
        out[_SPIN_LABELS[key]] = 1.0
        return out
    raise ValueError(f"unknown spin label {label!r}")


def spin_index(label) -> int:
    """0 for spin down, 1 for spin up."""
    if isinstance(label, (int, np.integer)):
        if label not in (SPIN_DOWN, SPIN_UP):
            raise ValueError(f"spin index must be 0 or 1, got {label}")
        return int(label)
    key = str(label).strip().lower()
    if key not in _SPIN_LABELS:
        raise ValueError(f"{label!r} is not a sigma_z basis label")
    return _SPIN_LABELS[key]


@dataclass(frozen=True)
class BasisLayout:
    """Index map for spin (x) Fock^k with inclusive cutoffs."""

    fock_cutoffs: tuple[int, ...]
    n_spin: int = field(default=2, init=False)

    def __post_init__(self):
        cutoffs = tuple(int(c) for c in self.fock_cutoffs)
        if not cutoffs:
            raise ValueError("at least one bosonic mode is required")
        if any(c < 0 for c in cutoffs):
            raise ValueError(f"cutoffs must be >= 0, got {cutoffs}")
        object.__setattr__(self, "fock_cutoffs", cutoffs)

    @property
    def n_modes(self) -> int:
        return len(self.fock_cutoffs)

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.fock_cutoffs)

    @property
    def dim(self) -> int:
        return 2 * int(np.prod(self.mode_dims))

    @property
    def shape(self) -> tuple[int, ...]:
        """Tensor shape of a state vector, in memory order."""
        if self.n_modes == 1:
            return (self.mode_dims[0], 2)
        return (2, *self.mode_dims)

    @property
    def spin_axis(self) -> int:
        return 1 if self.n_modes == 1 else 0

    def mode_axis(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise ValueError(f"mode {mode} out of range for {self.n_modes} modes")
        return 0 if self.n_modes == 1 else mode + 1

    def index(self, s, *occupations: int) -> int:
        s = spin_index(s)
        if len(occupations) != self.n_modes:
            raise ValueError(f"expected {self.n_modes} occupations, got {len(occupations)}")
        for n, c in zip(occupations, self.fock_cutoffs):
            if not 0 <= n <= c:
                raise ValueError(f"occupation {n} outside 0..{c}")
        coords = [0] * (self.n_modes + 1)
        coords[self.spin_axis] = s
        for m, n in enumerate(occupations):
            coords[self.mode_axis(m)] = n
        return int(np.ravel_multi_index(tuple(coords), self.shape))

    def labels(self) -> tuple[np.ndarray, ...]:
        """Per flat index: (spin, n_0, n_1, ...) arrays."""
        grids = np.unravel_index(np.arange(self.dim), self.shape)
        spin = grids[self.spin_axis]
        modes = [grids[self.mode_axis(m)] for m in range(self.n_modes)]
        return (spin, *modes)

    def occupation(self, mode: int = 0) -> np.ndarray:
        return self.labels()[1 + mode]

    def spin(self) -> np.ndarray:
        return self.labels()[0]


def boson_ladder(n_max: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Annihilation and creation operators on Fock levels 0..n_max."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    a = sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1,
                 shape=(n_max + 1, n_max + 1), format="csr")
    return a, a.T.tocsr()


def number_operator(n_max: int) -> sp.csr_matrix:
    return sp.diags(np.arange(n_max + 1, dtype=float), 0, format="csr")


def quadrature_G(n_max: int) -> sp.csr_matrix:
    """G = (a^dag + a)/2, real symmetric tridiagonal."""
    a, adag = boson_ladder(n_max)
    return ((a + adag) * 0.5).tocsr()


def _identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr", dtype=float)


def embed(spin_part, mode_parts, layout: BasisLayout) -> sp.csr_matrix:
    """Tensor product of local factors in the layout's index order.

    ``None`` stands for the identity on that factor.  ``mode_parts`` may be a
    single matrix when the layout has one mode.
    """
    if mode_parts is None or sp.issparse(mode_parts) or isinstance(mode_parts, np.ndarray):
        mode_parts = [mode_parts] + [None] * (layout.n_modes - 1)
    mode_parts = list(mode_parts)
    if len(mode_parts) != layout.n_modes:
        raise ValueError(f"expected {layout.n_modes} mode factors, got {len(mode_parts)}")

    spin = _identity(2) if spin_part is None else sp.csr_matrix(spin_part)
    if spin.shape != (2, 2):
        raise ValueError(f"spin factor must be 2x2, got {spin.shape}")
    modes = []
    for part, n in zip(mode_parts, layout.mode_dims):
        m = _identity(n) if part is None else sp.csr_matrix(part)
        if m.shape != (n, n):
            raise ValueError(f"mode factor shape {m.shape} does not match cutoff dim {n}")
        modes.append(m)

    factors = [modes[0], spin] if layout.n_modes == 1 else [spin, *modes]
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return out


def is_hermitian(matrix, atol: float = 1e-12) -> bool:
    """Entrywise check that ``matrix`` equals its conjugate transpose."""
    if sp.issparse(matrix):
        diff = (matrix - matrix.conj().T).tocoo()
        return diff.nnz == 0 or bool(np.max(np.abs(diff.data)) <= atol)
    m = np.asarray(matrix)
    return m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """An operator acting on one tensor factor (the spin or one mode).

    Keeping the factor separate lets the dynamics apply ``exp(i theta A)``
    from a single small eigendecomposition instead of exponentiating a
    full-space matrix.
    """

    layout: BasisLayout
    factor: np.ndarray
    site: str | int = 0  # "spin" or a mode index

    def __post_init__(self):
        f = self.factor.toarray() if sp.issparse(self.factor) else np.asarray(self.factor)
        n = 2 if self.site == "spin" else self.layout.mode_dims[self.site]
        if f.shape != (n, n):
            raise ValueError(f"factor shape {f.shape} does not match site dimension {n}")
        object.__setattr__(self, "factor", f)

    @property
    def axis(self) -> int:
        return self.layout.spin_axis if self.site == "spin" else self.layout.mode_axis(self.site)

    def to_sparse(self) -> sp.csr_matrix:
        if self.site == "spin":
            return embed(self.factor, None, self.layout)
        parts = [None] * self.layout.n_modes
        parts[self.site] = self.factor
        return embed(None, parts, self.layout)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply to a state (dim,) or a stack of states (dim, k)."""
        psi = np.asarray(psi)
        extra = psi.shape[1:]
        t = psi.reshape(*self.layout.shape, *extra)
        out = np.tensordot(self.factor, t, axes=([1], [self.axis]))
        out = np.moveaxis(out, 0, self.axis)
        return out.reshape(psi.shape)

    def exp_i(self, theta: float) -> "LocalOperator":
        """exp(i theta A) for Hermitian A, via one eigendecomposition."""
        w, v = np.linalg.eigh(self.factor)
        u = (v * np.exp(1j * theta * w)) @ v.conj().T
        return LocalOperator(self.layout, u, self.site)

    def square(self) -> "LocalOperator":
        return LocalOperator(self.layout, self.factor @ self.factor, self.site)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized amplitude vector over a basis layout."""

    layout: BasisLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.layout.dim,):
            raise ValueError(f"expected {self.layout.dim} amplitudes, got shape {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state is not normalized (norm {norm:.3e})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def expectation(self, operator) -> complex:
        if isinstance(operator, LocalOperator):
            return complex(np.vdot(self.amplitudes, operator.apply(self.amplitudes)))
        return complex(np.vdot(self.amplitudes, operator @ self.amplitudes))


def basis_state(s, occupations: int | Sequence[int], layout: BasisLayout) -> QuantumState:
    """Product state |s> (x) |n_0, n_1, ...>.

    ``s`` is any label accepted by :func:`spinor` (``up``, ``down``, ``+``,
    ``-``) or an explicit two-component spinor in (down, up) order.
    """
    if np.isscalar(occupations):
        occupations = (int(occupations),)
    occupations = tuple(int(n) for n in occupations)
    chi = spinor(s)
    amps = np.zeros(layout.dim, dtype=complex)
    for k in (SPIN_DOWN, SPIN_UP):
        if chi[k] != 0:
            amps[layout.index(k, *occupations)] = chi[k]
    return QuantumState(layout, amps)


def spin_superposition(phi: float, occupations, layout: BasisLayout) -> QuantumState:
    """(|down> + e^{i phi}|up>)|n>/sqrt(2)."""
    return basis_state(np.array([1.0, np.exp(1j * phi)]) * _SQRT_HALF, occupations, layout)
