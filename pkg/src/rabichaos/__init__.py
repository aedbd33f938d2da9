"""Quantum chaos and equilibration diagnostics for the Rabi and Jahn-Teller models."""

__version__ = "0.1.0"

from .hilbert import BasisLayout, LocalOperator, QuantumState, basis_state, embed, quadrature_G
from .models import ModelParams, build_hamiltonian, build_perturbed_qr, build_qjt, build_qr, params_from_gc_eta
from .spectral import Eigensystem, Spectrum, eig_dense, eig_tridiag, spacing_histogram, unfold
from .symmetry import SymmetricTridiagonal, qjt_u1_block, qr_parity_block
from .dynamics import (
    CutoffCapExceeded,
    LyapunovFit,
    NoGrowthPhaseError,
    TimeSeries,
    adaptive_cutoff,
    echo_divergence_series,
    evolve,
    fit_lyapunov,
    fotoc_echo_series,
    fotoc_variance_series,
)
from .equilibration import de_average, de_weights, effective_dimension, me_average, time_average

__all__ = [
    "BasisLayout", "LocalOperator", "QuantumState", "basis_state", "embed", "quadrature_G",
    "ModelParams", "build_hamiltonian", "build_perturbed_qr", "build_qjt", "build_qr",
    "params_from_gc_eta", "Eigensystem", "Spectrum", "eig_dense", "eig_tridiag",
    "spacing_histogram", "unfold", "SymmetricTridiagonal", "qjt_u1_block", "qr_parity_block",
    "CutoffCapExceeded", "LyapunovFit", "NoGrowthPhaseError", "TimeSeries", "adaptive_cutoff",
    "echo_divergence_series", "evolve", "fit_lyapunov", "fotoc_echo_series",
    "fotoc_variance_series", "de_average", "de_weights", "effective_dimension", "me_average",
    "time_average",
]
