"""
Symmetry sectors as symmetric tridiagonal blocks.

Rabi parity sectors are cut out of the full sparse Hamiltonian by index
selection.  Jahn-Teller U(1) sectors are generated by walking the coupling
terms of the Hamiltonian from the lowest-occupation state of the sector, so
no full two-mode matrix is ever built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hilbert import SPIN_DOWN, SPIN_UP, BasisLayout, spin_index
from .models import ModelParams, qjt_layout, qr_layout
from .spectral import Spectrum, eig_dense, eig_tridiag


@dataclass(frozen=True, eq=False)
class SymmetricTridiagonal:
    """Hamiltonian block of one symmetry sector.

    ``states`` lists the basis labels ``(s, n[, n'])`` of each row with
    ``s = 1`` for spin up; ``indices`` are the matching full-space indices.
    ``edge_rows`` marks rows touching the Fock truncation.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    sector_label: float
    states: tuple[tuple[int, ...], ...]
    indices: np.ndarray
    edge_rows: tuple[int, ...] = ()
    layout: BasisLayout | None = None

    def __post_init__(self):
        m = len(self.diag)
        if m < 1:
            raise ValueError("a sector block needs at least one state")
        if len(self.offdiag) != m - 1 or len(self.states) != m or len(self.indices) != m:
            raise ValueError("diag/offdiag/states sizes are inconsistent")
        if len(set(self.states)) != m:
            raise ValueError("sector states must be distinct")

    @property
    def size(self) -> int:
        return len(self.diag)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def solve(self, want_vectors: bool = True, **kw) -> Spectrum:
        """Diagonalize; vectors are mapped onto the block's full-space rows."""
        spec = eig_tridiag(self, want_vectors=want_vectors, **kw)
        dim = self.layout.dim if self.layout is not None else None
        return Spectrum(spec.eigenvalues, spec.eigenvectors,
                        support=self.indices if want_vectors else None,
                        dim=dim if want_vectors else spec.dim,
                        source=spec.source, label=self.sector_label)


# Rabi parity ----------------------------------------------------------------

def parity_eigenvalue(s, n: int) -> int:
    """Eigenvalue of exp(i pi (a^dag a + (sigma_z + 1)/2)) on |s, n>."""
    return 1 if (n + spin_index(s)) % 2 == 0 else -1


def qr_parity_block(params: ModelParams, n_max: int, sector: int) -> SymmetricTridiagonal:
    """Parity sector of the Rabi Hamiltonian, ordered by boson number.

    The negative sector is |up,0>, |down,1>, |up,2>, ...; the positive one
    |down,0>, |up,1>, ...
    """
    if params.kind != "QR":
        raise ValueError(f"parity blocks need kind QR, got {params.kind}")
    if sector not in (1, -1):
        raise ValueError(f"parity sector must be +1 or -1, got {sector}")
    layout = qr_layout(n_max)
    n = np.arange(n_max + 1)
    # parity -1 <=> n + s odd; neighbours differ by one boson and a spin flip
    s = (n + (1 if sector == -1 else 0)) % 2
    idx = 2 * n + s
    d = params.omega * n + 0.5 * params.delta * np.where(s == 1, 1.0, -1.0)
    e = params.g * np.sqrt(n[1:].astype(float))
    states = tuple((int(a), int(b)) for a, b in zip(s, n))
    return SymmetricTridiagonal(d, e, sector, states, idx, (n_max,), layout)


def qr_parity_blocks(params: ModelParams, n_max: int) -> list[SymmetricTridiagonal]:
    return [qr_parity_block(params, n_max, -1), qr_parity_block(params, n_max, 1)]


# Jahn-Teller U(1) -----------------------------------------------------------

def u1_eigenvalue(s, n_r: int, n_l: int) -> float:
    """Eigenvalue of C = n_l - n_r + sigma_z/2."""
    return n_l - n_r + (0.5 if spin_index(s) == SPIN_UP else -0.5)


def qjt_couplings(state: tuple[int, int, int]) -> list[tuple[tuple[int, int, int], float]]:
    """Off-diagonal matrix elements <state'|H|state>/g of the Jahn-Teller model.

    Terms: sigma_+ a_r^dag, sigma_+ a_l, sigma_- a_r, sigma_- a_l^dag.
    """
    s, nr, nl = state
    out = []
    if s == SPIN_UP:
        if nr > 0:
            out.append(((SPIN_DOWN, nr - 1, nl), math.sqrt(nr)))       # sigma_- a_r
        out.append(((SPIN_DOWN, nr, nl + 1), math.sqrt(nl + 1)))       # sigma_- a_l^dag
    else:
        out.append(((SPIN_UP, nr + 1, nl), math.sqrt(nr + 1)))         # sigma_+ a_r^dag
        if nl > 0:
            out.append(((SPIN_UP, nr, nl - 1), math.sqrt(nl)))         # sigma_+ a_l
    return out


def _sector_root(c: float) -> tuple[int, int, int]:
    """Lowest-occupation state with charge c."""
    twice = round(2 * c)
    if abs(2 * c - twice) > 1e-9 or twice % 2 == 0:
        raise ValueError(f"U(1) charge must be half-integer, got {c}")
    candidates = []
    for s, k in ((SPIN_UP, (twice - 1) // 2), (SPIN_DOWN, (twice + 1) // 2)):
        nr = max(0, -k)
        candidates.append((2 * nr + k, s, nr, nr + k))
    _, s, nr, nl = min(candidates)
    return (s, nr, nl)


def qjt_sector_states(c: float, n_max_r: int, n_max_l: int) -> list[tuple[int, int, int]]:
    """States of sector c inside the cutoffs, in chain order."""
    state = _sector_root(c)
    within = lambda st: st[1] <= n_max_r and st[2] <= n_max_l
    if not within(state):
        return []
    chain = [state]
    previous = None
    while True:
        nxt = [st for st, _ in qjt_couplings(chain[-1]) if st != previous]
        if len(nxt) != 1:
            raise RuntimeError(f"sector chain branches at {chain[-1]}")
        if not within(nxt[0]):
            break
        previous = chain[-1]
        chain.append(nxt[0])
    return chain


def qjt_u1_block(params: ModelParams, n_max_r: int, n_max_l: int, c: float) -> SymmetricTridiagonal:
    """Tridiagonal Jahn-Teller block for U(1) charge ``c``."""
    if params.kind != "QJT":
        raise ValueError(f"U(1) blocks need kind QJT, got {params.kind}")
    states = qjt_sector_states(c, n_max_r, n_max_l)
    if not states:
        raise ValueError(f"sector c={c} is empty for cutoffs ({n_max_r}, {n_max_l})")
    arr = np.array(states)
    s, nr, nl = arr[:, 0], arr[:, 1], arr[:, 2]
    d = params.omega * (nr + nl) + 0.5 * params.delta * np.where(s == SPIN_UP, 1.0, -1.0)
    e = np.empty(len(states) - 1)
    for i in range(len(states) - 1):
        elem = dict(qjt_couplings(states[i]))[states[i + 1]]
        e[i] = params.g * elem
    layout = qjt_layout(n_max_r, n_max_l)
    idx = (s * layout.mode_dims[0] + nr) * layout.mode_dims[1] + nl
    return SymmetricTridiagonal(d, e, float(c), tuple(map(tuple, arr.tolist())), idx,
                                (len(states) - 1,), layout)


def qjt_sector_labels(n_max_r: int, n_max_l: int, c_max: float | None = None) -> list[float]:
    """All nonempty half-integer charges, optionally capped at |c| <= c_max."""
    labels = [k + 0.5 for k in range(-n_max_r - 1, n_max_l + 1)]
    if c_max is not None:
        labels = [c for c in labels if abs(c) <= c_max]
    return labels


def qjt_u1_blocks(params: ModelParams, n_max_r: int, n_max_l: int,
                  c_max: float | None = None) -> list[SymmetricTridiagonal]:
    return [qjt_u1_block(params, n_max_r, n_max_l, c)
            for c in qjt_sector_labels(n_max_r, n_max_l, c_max)]


@dataclass(frozen=True, eq=False)
class SectorGroundState:
    energy: float
    sector: float
    vector: np.ndarray
    block: SymmetricTridiagonal
    sector_energies: dict = field(default_factory=dict)


def qjt_ground_state(params: ModelParams, n_max: int, c_max: float = 5.5) -> SectorGroundState:
    """Global ground state from a scan over sectors with |c| <= c_max."""
    best = None
    energies = {}
    for c in qjt_sector_labels(n_max, n_max, c_max):
        block = qjt_u1_block(params, n_max, n_max, c)
        spec = eig_tridiag(block, want_vectors=True, select=(0, 0))
        energies[c] = float(spec.eigenvalues[0])
        if best is None or spec.eigenvalues[0] < best[0]:
            best = (float(spec.eigenvalues[0]), c, spec.eigenvectors[:, 0], block)
    return SectorGroundState(*best, sector_energies=energies)


# consistency oracle ---------------------------------------------------------

@dataclass(frozen=True)
class SectorCheck:
    label: object
    block_size: int
    full_count: int
    max_abs_deviation: float


@dataclass(frozen=True)
class BlockConsistencyReport:
    sectors: tuple[SectorCheck, ...]
    partition_ok: bool

    @property
    def counts_ok(self) -> bool:
        return all(s.block_size == s.full_count for s in self.sectors)

    @property
    def max_deviation(self) -> float:
        return max((s.max_abs_deviation for s in self.sectors), default=0.0)

    @property
    def ok(self) -> bool:
        return self.partition_ok and self.counts_ok


def block_consistency_report(h, blocks: Sequence[SymmetricTridiagonal],
                             exclude_edge: bool = False) -> BlockConsistencyReport:
    """Compare each block's eigenvalues with the full-space solve filtered to that sector.

    Every full eigenvector is assigned to the block holding most of its
    weight.  A count mismatch means the blocks are mislabeled or do not
    partition the basis; deviations are only reported where counts agree.
    """
    full = eig_dense(h, want_vectors=True)
    dim = full.eigenvectors.shape[0]
    owner = np.full(dim, -1)
    seen = np.zeros(dim, dtype=int)
    for i, b in enumerate(blocks):
        owner[b.indices] = i
        seen[b.indices] += 1
    partition_ok = bool(np.all(seen == 1))

    weights = np.abs(full.eigenvectors) ** 2
    block_weight = np.zeros((len(blocks), weights.shape[1]))
    for i, b in enumerate(blocks):
        block_weight[i] = weights[b.indices].sum(axis=0)
    assigned = np.argmax(block_weight, axis=0)

    checks = []
    for i, b in enumerate(blocks):
        ref = np.sort(full.eigenvalues[assigned == i])
        own = eig_tridiag(b).eigenvalues
        if exclude_edge and b.edge_rows:
            own = own[: own.size - len(b.edge_rows)]
            ref = ref[: ref.size - len(b.edge_rows)]
        dev = float(np.max(np.abs(own - ref), initial=0.0)) if own.size == ref.size else float("nan")
        checks.append(SectorCheck(b.sector_label, b.size, int(np.sum(assigned == i)), dev))
    return BlockConsistencyReport(tuple(checks), partition_ok)
