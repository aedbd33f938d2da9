"""
Mean-field (eta -> infinity) results for the Jahn-Teller model and their
numerical counterparts from the U(1)-sector ground state.

With lambda = g/g_c and g_c = sqrt(delta omega/2):

* normal phase (lambda <= 1): two degenerate modes of energy
  omega sqrt(1 - lambda^2), <sigma_z> = -1, no macroscopic excitation;
* superradiant phase (lambda >= 1): a Goldstone mode at zero energy and a
  gapped mode sqrt(1 - lambda^-4) (in units of omega); the displacement obeys
  |alpha_r^* + alpha_l|^2 = eta (lambda^4 - 1)/(2 lambda^2), the spin
  splitting is Omega = sqrt(delta^2 + 4 g^2 |alpha_r^* + alpha_l|^2) and
  <sigma_z> = cos 2 theta = -delta/Omega.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hilbert import SPIN_UP
from .models import ModelParams
from .symmetry import qjt_ground_state

BRANCH_TOL = 1e-12


class BranchError(ValueError):
    """A formula was evaluated outside the phase where it holds."""


def qjt_critical_coupling(omega: float, delta: float) -> float:
    return math.sqrt(delta * omega / 2.0)


def _ratio(g: float, omega: float, delta: float) -> float:
    if not omega > 0 or not delta > 0 or g < 0:
        raise ValueError("need omega > 0, delta > 0, g >= 0")
    return g / qjt_critical_coupling(omega, delta)


def qjt_normal_excitation(g: float, omega: float, delta: float) -> float:
    """omega sqrt(1 - lambda^2), the doubly degenerate normal-phase gap."""
    lam = _ratio(g, omega, delta)
    if lam > 1.0 + BRANCH_TOL:
        raise BranchError(f"normal branch needs g <= g_c (lambda = {lam:.6g})")
    return omega * math.sqrt(max(0.0, 1.0 - lam**2))


def qjt_superradiant_modes(g: float, omega: float, delta: float) -> tuple[float, float]:
    """(eps_1, eps_2) = (0, sqrt(1 - lambda^-4)) in units of omega; eps_1 is the Goldstone mode."""
    lam = _ratio(g, omega, delta)
    if lam < 1.0 - BRANCH_TOL:
        raise BranchError(f"superradiant branch needs g >= g_c (lambda = {lam:.6g})")
    return 0.0, math.sqrt(max(0.0, 1.0 - lam**-4))


def qjt_superradiant_splitting(g: float, omega: float, delta: float) -> float:
    """Omega from the mean-field displacement; equals delta lambda^2."""
    lam = _ratio(g, omega, delta)
    if lam < 1.0 - BRANCH_TOL:
        raise BranchError(f"superradiant branch needs g >= g_c (lambda = {lam:.6g})")
    eta = delta / omega
    displacement2 = max(0.0, eta * (lam**4 - 1.0) / (2.0 * lam**2))
    return math.sqrt(delta**2 + 4.0 * g**2 * displacement2)


def qjt_order_parameters(g: float, omega: float, delta: float) -> tuple[float, float]:
    """(<sigma_z>, <(a_r^dag + a_l)(a_r + a_l^dag)>/eta) in the eta -> infinity limit."""
    lam = _ratio(g, omega, delta)
    if lam <= 1.0:
        return -1.0, 0.0
    cos2theta = -delta / qjt_superradiant_splitting(g, omega, delta)
    return cos2theta, (lam**4 - 1.0) / (2.0 * lam**2)


@dataclass(frozen=True)
class QjtMeanField:
    lambda_ratio: float
    epsilon_normal: float | None        # omega * eps, None above g_c
    epsilon_sr_pair: tuple[float, float] | None  # dimensionless, None below g_c
    excitation_density: float
    sigma_z: float
    omega_split: float | None
    cos2theta: float | None
    goldstone: bool

    @property
    def sr_gap(self) -> float | None:
        """Physical gap omega * eps_2 of the non-Goldstone mode."""
        return None if self.epsilon_sr_pair is None else self.epsilon_sr_pair[1]


def qjt_mean_field(params: ModelParams) -> QjtMeanField:
    if params.kind != "QJT":
        raise ValueError(f"mean-field formulas are for QJT, got {params.kind}")
    g, w, d = params.g, params.omega, params.delta
    lam = params.coupling_ratio
    normal = qjt_normal_excitation(g, w, d) if lam <= 1.0 + BRANCH_TOL else None
    sr = qjt_superradiant_modes(g, w, d) if lam >= 1.0 - BRANCH_TOL else None
    sz, dens = qjt_order_parameters(g, w, d)
    split = qjt_superradiant_splitting(g, w, d) if sr is not None else None
    return QjtMeanField(lam, normal, sr, dens, sz, split,
                        None if split is None else -d / split, sr is not None)


@dataclass(frozen=True)
class QjtGroundObservables:
    energy: float
    sector: float
    boson_number: float          # <n_r + n_l>
    excitation: float            # <(a_r^dag + a_l)(a_r + a_l^dag)>
    sigma_z: float
    eta: float
    n_max: int

    @property
    def boson_density(self) -> float:
        return self.boson_number / self.eta

    @property
    def excitation_density(self) -> float:
        return self.excitation / self.eta


def qjt_ground_observables(params: ModelParams, n_max: int, c_max: float = 5.5) -> QjtGroundObservables:
    """Ground-state order parameters from a scan over U(1) sectors."""
    gs = qjt_ground_state(params, n_max, c_max)
    states = np.array(gs.block.states)
    prob = np.abs(gs.vector) ** 2
    s, nr, nl = states[:, 0], states[:, 1], states[:, 2]
    number = float(prob @ (nr + nl))
    sz = float(prob @ np.where(s == SPIN_UP, 1.0, -1.0))
    # a_r^dag a_l^dag keeps the sector and links chain positions i and i + 2
    v = gs.vector
    pair = float(np.sum(v[2:] * v[:-2] * np.sqrt((nr[:-2] + 1.0) * (nl[:-2] + 1.0))))
    return QjtGroundObservables(gs.energy, gs.sector, number, number + 1.0 + 2.0 * pair, sz,
                                params.eta, n_max)
