"""Model-level assembly: eigensystems, initial states and observables."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .hilbert import (
    SIGMA_X,
    BasisLayout,
    LocalOperator,
    QuantumState,
    basis_state,
    embed,
    quadrature_G,
)
from .models import ModelParams, build_hamiltonian, layout_for, normalize_cutoffs
from .spectral import Eigensystem, Spectrum
from .symmetry import qjt_sector_labels, qjt_u1_block, qr_parity_block


def _banded_lower(h: sp.spmatrix, bandwidth: int) -> np.ndarray:
    n = h.shape[0]
    band = np.zeros((bandwidth + 1, n))
    for k in range(bandwidth + 1):
        band[k, : n - k] = h.diagonal(-k).real
    return band


def solve_sector(params: ModelParams, cutoffs, sector, cache=None) -> Spectrum:
    """Eigenpairs of one symmetry sector (parity for QR, charge for QJT)."""
    cutoffs = normalize_cutoffs(params, cutoffs)
    if cache is not None:
        hit = cache.load(params, cutoffs, sector)
        if hit is not None:
            return hit
    block = (qr_parity_block(params, cutoffs[0], int(sector)) if params.kind == "QR"
             else qjt_u1_block(params, *cutoffs, float(sector)))
    spec = block.solve(want_vectors=True)
    if cache is not None:
        cache.store(params, cutoffs, sector, spec)
    return spec


def eigensystem(params: ModelParams, cutoffs, sectors=None, cache=None) -> Eigensystem:
    """Full eigen-decomposition assembled from symmetry sectors.

    QR uses both parity blocks, QJT every U(1) block inside the cutoffs
    (``sectors`` may restrict the list, then only states in those sectors
    can be propagated).  The perturbed Rabi model has no parity, so it is
    solved as one banded matrix (bandwidth 3 in the interleaved layout).
    """
    cutoffs = normalize_cutoffs(params, cutoffs)
    layout = layout_for(params, cutoffs)
    if params.kind == "PerturbedQR":
        if cache is not None:
            hit = cache.load(params, cutoffs, "full")
            if hit is not None:
                return Eigensystem([hit])
        h = build_hamiltonian(params, cutoffs)
        w, v = sla.eig_banded(_banded_lower(h, 3), lower=True)
        spec = Spectrum(w, v, dim=layout.dim, source="banded", label="full")
        if cache is not None:
            cache.store(params, cutoffs, "full", spec)
        return Eigensystem([spec])
    if sectors is None:
        sectors = (-1, 1) if params.kind == "QR" else qjt_sector_labels(*cutoffs)
    blocks = [solve_sector(params, cutoffs, s, cache) for s in sectors]
    partial = sum(b.rows.size for b in blocks) < layout.dim
    return Eigensystem(blocks, layout.dim, partial=partial)


def fotoc_operator(params: ModelParams, cutoffs) -> LocalOperator:
    """G = (a^dag + a)/2 on the first mode (a_r for Jahn-Teller)."""
    layout = layout_for(params, cutoffs)
    return LocalOperator(layout, quadrature_G(layout.fock_cutoffs[0]), 0)


def sigma_x_operator(layout: BasisLayout) -> sp.csr_matrix:
    return embed(SIGMA_X, None, layout)


def spin_up_population(layout: BasisLayout) -> np.ndarray:
    """Diagonal of P(up) = |up><up|."""
    return layout.spin().astype(float)


def spin_down_population(layout: BasisLayout) -> np.ndarray:
    return 1.0 - layout.spin().astype(float)


def boson_number(layout: BasisLayout, mode: int | None = None) -> np.ndarray:
    """Diagonal of a^dag a (or the total number when ``mode`` is None)."""
    if mode is not None:
        return layout.occupation(mode).astype(float)
    return np.sum([layout.occupation(m) for m in range(layout.n_modes)], axis=0).astype(float)


def fock_projector(layout: BasisLayout, n: int, mode: int = 0) -> np.ndarray:
    """Diagonal of P(n) = |n><n| on one mode."""
    return (layout.occupation(mode) == n).astype(float)


def initial_state(params: ModelParams, cutoffs, spin, occupations) -> QuantumState:
    """Product state |spin> (x) |n...>; a scalar occupation fills every mode."""
    layout = layout_for(params, cutoffs)
    if np.isscalar(occupations):
        occupations = (int(occupations),) * layout.n_modes
    return basis_state(spin, occupations, layout)


def energy_expectation(h, psi) -> float:
    psi = psi.amplitudes if isinstance(psi, QuantumState) else np.asarray(psi)
    return float(np.real(np.vdot(psi, h @ psi)))
