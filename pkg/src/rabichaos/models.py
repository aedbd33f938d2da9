"""Rabi, perturbed Rabi and Jahn-Teller Hamiltonians (hbar = 1)."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    BasisLayout,
    boson_ladder,
    embed,
    number_operator,
)

KINDS = ("QR", "PerturbedQR", "QJT")


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one model instance.

    ``eta = delta/omega``; the critical coupling is ``sqrt(delta*omega)/2``
    for the Rabi models and ``sqrt(delta*omega/2)`` for Jahn-Teller.
    """

    kind: str
    omega: float
    delta: float
    g: float
    lambda_perturb: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.omega > 0 or not self.delta > 0:
            raise ValueError("omega and delta must be positive")
        if self.g < 0:
            raise ValueError("g must be non-negative")
        if self.kind != "PerturbedQR" and self.lambda_perturb != 0.0:
            raise ValueError("lambda_perturb is only meaningful for PerturbedQR")

    @property
    def eta(self) -> float:
        return self.delta / self.omega

    @property
    def g_c(self) -> float:
        if self.kind == "QJT":
            return math.sqrt(self.delta * self.omega / 2.0)
        return math.sqrt(self.delta * self.omega) / 2.0

    @property
    def coupling_ratio(self) -> float:
        """g / g_c."""
        return self.g / self.g_c

    def with_coupling(self, g: float) -> "ModelParams":
        return replace(self, g=float(g))

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "omega": self.omega, "delta": self.delta, "g": self.g,
            "lambda_perturb": self.lambda_perturb, "eta": self.eta, "g_c": self.g_c,
        }


def params_from_gc_eta(kind: str, g_c: float, eta: float, g: float = 0.0,
                       lambda_perturb: float = 0.0) -> ModelParams:
    """Parameters from the (critical coupling, eta) parameterization."""
    if not g_c > 0 or not eta > 0:
        raise ValueError("g_c and eta must be positive")
    scale = math.sqrt(2.0) if kind == "QJT" else 2.0
    # QR: g_c = sqrt(delta*omega)/2 ; QJT: g_c = sqrt(delta*omega/2)
    omega = scale * g_c / math.sqrt(eta)
    delta = scale * g_c * math.sqrt(eta)
    return ModelParams(kind, omega, delta, float(g), float(lambda_perturb))


def qr_layout(n_max: int) -> BasisLayout:
    return BasisLayout((n_max,))


def qjt_layout(n_max_r: int, n_max_l: int) -> BasisLayout:
    return BasisLayout((n_max_r, n_max_l))


def build_qr(params: ModelParams, n_max: int) -> sp.csr_matrix:
    """omega a^dag a + (delta/2) sigma_z + g sigma_x (a^dag + a)."""
    if params.kind not in ("QR", "PerturbedQR"):
        raise ValueError(f"build_qr needs a Rabi model, got {params.kind}")
    layout = qr_layout(n_max)
    a, adag = boson_ladder(n_max)
    h = (params.omega * embed(None, number_operator(n_max), layout)
         + 0.5 * params.delta * embed(SIGMA_Z, None, layout)
         + params.g * embed(SIGMA_X, a + adag, layout))
    return h.tocsr()


def build_perturbed_qr(params: ModelParams, n_max: int) -> sp.csr_matrix:
    """Rabi Hamiltonian plus lambda sigma_x, which breaks parity."""
    if params.kind != "PerturbedQR":
        raise ValueError(f"build_perturbed_qr needs kind PerturbedQR, got {params.kind}")
    h = build_qr(params, n_max) + params.lambda_perturb * embed(SIGMA_X, None, qr_layout(n_max))
    return h.tocsr()


def build_qjt(params: ModelParams, n_max_r: int, n_max_l: int, form: str = "rl") -> sp.csr_matrix:
    """Jahn-Teller Hamiltonian on spin (x) mode_1 (x) mode_2.

    ``form="rl"``: omega (n_r + n_l) + (delta/2) sigma_z
    + g sigma_+ (a_r^dag + a_l) + g sigma_- (a_r + a_l^dag).

    ``form="ab"``: the rotated modes, omega (n_a + n_b) + (delta/2) sigma_z
    + (g/sqrt 2) sigma_x (a^dag + a) + (g/sqrt 2) sigma_y (b^dag + b).
    The two forms are unitarily equivalent only without truncation.
    """
    if params.kind != "QJT":
        raise ValueError(f"build_qjt needs kind QJT, got {params.kind}")
    layout = qjt_layout(n_max_r, n_max_l)
    a1, a1d = boson_ladder(n_max_r)
    a2, a2d = boson_ladder(n_max_l)
    h0 = (params.omega * (embed(None, [number_operator(n_max_r), None], layout)
                          + embed(None, [None, number_operator(n_max_l)], layout))
          + 0.5 * params.delta * embed(SIGMA_Z, None, layout))
    g = params.g
    if form == "rl":
        up = embed(SIGMA_PLUS, [a1d, None], layout) + embed(SIGMA_PLUS, [None, a2], layout)
        h = h0 + g * (up + up.T)
    elif form == "ab":
        c = g / math.sqrt(2.0)
        h = (h0 + c * embed(SIGMA_X, [a1 + a1d, None], layout)
             + c * embed(SIGMA_Y, [None, a2 + a2d], layout))
    else:
        raise ValueError(f"form must be 'rl' or 'ab', got {form!r}")
    return h.tocsr()


def build_hamiltonian(params: ModelParams, cutoffs) -> sp.csr_matrix:
    """Dispatch on ``params.kind``; ``cutoffs`` is n_max or (n_max_r, n_max_l)."""
    cutoffs = normalize_cutoffs(params, cutoffs)
    if params.kind == "QR":
        return build_qr(params, *cutoffs)
    if params.kind == "PerturbedQR":
        return build_perturbed_qr(params, *cutoffs)
    return build_qjt(params, *cutoffs)


def normalize_cutoffs(params: ModelParams, cutoffs) -> tuple[int, ...]:
    if np.isscalar(cutoffs):
        cutoffs = (int(cutoffs),) * (2 if params.kind == "QJT" else 1)
    cutoffs = tuple(int(c) for c in cutoffs)
    expected = 2 if params.kind == "QJT" else 1
    if len(cutoffs) != expected:
        raise ValueError(f"{params.kind} needs {expected} cutoff(s), got {cutoffs}")
    return cutoffs


def layout_for(params: ModelParams, cutoffs) -> BasisLayout:
    return BasisLayout(normalize_cutoffs(params, cutoffs))


def parity_operator(layout: BasisLayout) -> sp.csr_matrix:
    """exp(i pi Pi) with Pi = a^dag a + (sigma_z + 1)/2, diagonal +-1."""
    spin, n = layout.labels()[:2]
    return sp.diags(np.where((n + spin) % 2 == 0, 1.0, -1.0), format="csr")


def u1_charge_operator(layout: BasisLayout) -> sp.csr_matrix:
    """C = n_l - n_r + sigma_z/2 on the two-mode layout."""
    spin, n_r, n_l = layout.labels()
    return sp.diags(n_l - n_r + (spin - 0.5), format="csr")
