"""
Long-time averages: diagonal and microcanonical ensembles, exact windowed
time averages and the effective dimension of the initial state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import CutoffCapExceeded, Propagator, _amplitudes
from .hilbert import LocalOperator, QuantumState
from .models import ModelParams, build_hamiltonian, layout_for
from .spectral import Eigensystem

DEGENERATE_GAP = 1e-10
SPIN_DIM_SQUARED = 4


@dataclass(frozen=True, eq=False)
class DiagonalEnsemble:
    """Weights |c_k|^2, concatenated over the blocks of ``eigen_ref``."""

    weights: np.ndarray
    eigen_ref: Eigensystem
    energies: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights must be nonnegative and sum to 1 (sum {w.sum():.12f})")
        object.__setattr__(self, "weights", w)
        if self.energies is None:
            object.__setattr__(self, "energies", self.eigen_ref.energies)

    def block_weights(self) -> list[np.ndarray]:
        out, start = [], 0
        for b in self.eigen_ref.blocks:
            out.append(self.weights[start:start + len(b)])
            start += len(b)
        return out

    @property
    def mean_energy(self) -> float:
        return float(self.weights @ self.energies)


def de_weights(spectrum, psi0) -> DiagonalEnsemble:
    system = Eigensystem.wrap(spectrum)
    coeffs = system.coefficients(_amplitudes(psi0))
    return DiagonalEnsemble(np.concatenate([np.abs(c) ** 2 for c in coeffs]), system)


def _as_observable(O):
    if isinstance(O, LocalOperator):
        return O.to_sparse()
    return O


def de_average(ensemble: DiagonalEnsemble, O, weight_cut: float = 0.0) -> float:
    """sum_k |c_k|^2 <E_k|O|E_k>, skipping weights <= ``weight_cut``."""
    O = _as_observable(O)
    bw = ensemble.block_weights()
    which = [w > weight_cut for w in bw]
    diag = ensemble.eigen_ref.diagonal_elements(O, which)
    return float(sum(w[m] @ d for w, m, d in zip(bw, which, diag)))


def _window_factors(de: np.ndarray, t_start: float, window: float) -> np.ndarray:
    """(1/W) int_{t_s}^{t_s+W} exp(i dE tau) dtau, exactly 1 for |dE| < 1e-10."""
    x = de * window
    small = np.abs(de) < DEGENERATE_GAP
    safe = np.where(small, 1.0, x)
    f = np.exp(1j * de * t_start) * np.expm1(1j * safe) / (1j * safe)
    return np.where(small, 1.0, f)


def _kept_columns(prop: Propagator, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Full-space columns c_k |E_k> of the kept components and their energies."""
    k_total = prop.n_components
    A = np.zeros((dim, k_total), dtype=complex)
    energies = np.empty(k_total)
    col = 0
    for rows, e, weighted, *_ in prop.parts:
        A[rows, col:col + e.size] = weighted
        energies[col:col + e.size] = e
        col += e.size
    return A, energies


def time_average(spectrum, psi0, O, t_start: float = 0.0, window: float = 1e3,
                 chunk: int = 1024) -> float:
    """(1/W) int <psi(tau)|O|psi(tau)> dtau over [t_start, t_start + W], in closed form.

    Uses O_t = sum_jk conj(c_j) c_k O_jk exp(i (E_j - E_k) tau); each phase is
    averaged over the window analytically.  Gaps below 1e-10 are treated as
    degenerate and kept undephased.
    """
    return float(time_average_family(spectrum, psi0, [O], t_start, window, chunk)[0])


def time_average_family(spectrum, psi0, observables: Sequence, t_start: float = 0.0,
                        window: float = 1e3, chunk: int = 1024) -> np.ndarray:
    if window <= 0:
        raise ValueError("window must be positive")
    prop = Propagator(spectrum, psi0)
    A, e = _kept_columns(prop, prop.system.dim)
    out = np.zeros(len(observables))
    ops = [_as_observable(O) for O in observables]
    applied = [(O[:, None] * A) if isinstance(O, np.ndarray) and O.ndim == 1 else O @ A for O in ops]
    for start in range(0, e.size, chunk):
        sl = slice(start, min(start + chunk, e.size))
        F = _window_factors(e[sl, None] - e[None, :], t_start, window)
        for i, OA in enumerate(applied):
            M = A[:, sl].conj().T @ OA
            out[i] += np.real(np.sum(M * F))
    return out


def time_averaged_populations(spectrum, psi0, labels: np.ndarray, t_start: float = 0.0,
                              window: float = 1e3, chunk: int = 1024) -> np.ndarray:
    """Windowed averages of every projector onto basis states sharing a label.

    ``labels`` assigns each basis index an integer (for example its Fock
    occupation); entry n of the result is the time-averaged weight of label n.
    """
    prop = Propagator(spectrum, psi0)
    A, e = _kept_columns(prop, prop.system.dim)
    r = np.zeros(A.shape[0])
    for start in range(0, e.size, chunk):
        sl = slice(start, min(start + chunk, e.size))
        F = _window_factors(e[sl, None] - e[None, :], t_start, window)
        r += np.real(np.sum(A[:, sl].conj() * (A @ F.T), axis=1))
    return np.bincount(np.asarray(labels), weights=r)


def de_populations(ensemble: DiagonalEnsemble, labels: np.ndarray) -> np.ndarray:
    """Diagonal-ensemble weight of each label class of basis states."""
    labels = np.asarray(labels)
    dens = np.zeros(labels.size)
    for b, w in zip(ensemble.eigen_ref.blocks, ensemble.block_weights()):
        dens[b.rows] += (np.abs(b.eigenvectors) ** 2) @ w
    return np.bincount(labels, weights=dens)


@dataclass(frozen=True)
class MicrocanonicalAverage:
    value: float
    n_states: int
    robust: bool
    delta_e: float
    e0: float
    variations: dict = field(default_factory=dict)


def _shell_mean(energies, diag, e0, delta_e):
    mask = np.abs(energies - e0) < delta_e
    n = int(mask.sum())
    return (float(np.mean(diag[mask])) if n else float("nan")), n


def me_average(spectrum, O, E0: float, delta_E: float | None = None, min_states: int = 20,
               variation: float = 0.25, rel_tol: float = 0.01) -> MicrocanonicalAverage:
    """Unweighted mean of <E_k|O|E_k> over the shell |E_k - E0| < delta_E.

    Without ``delta_E`` the shell is the smallest one holding ``min_states``
    levels.  The result is flagged robust when the value moves by less than
    ``rel_tol`` (relative) for delta_E scaled by 1 -/+ ``variation``.
    """
    system = Eigensystem.wrap(spectrum)
    energies = system.energies
    diag = np.concatenate(system.diagonal_elements(_as_observable(O)))
    dist = np.abs(energies - E0)
    if delta_E is None:
        if energies.size < min_states:
            raise ValueError(f"spectrum has only {energies.size} levels, fewer than {min_states}")
        delta_E = float(np.nextafter(np.sort(dist)[min_states - 1], np.inf))
    if delta_E <= 0:
        raise ValueError("delta_E must be positive")
    value, n = _shell_mean(energies, diag, E0, delta_E)
    if n == 0:
        k = int(np.argmin(dist))
        raise ValueError(f"empty energy shell |E - {E0:.6g}| < {delta_E:.3g}; nearest level "
                         f"E = {energies[k]:.6g} at distance {dist[k]:.3g}")
    variations = {}
    robust = True
    for factor in (1.0 - variation, 1.0 + variation):
        v, m = _shell_mean(energies, diag, E0, factor * delta_E)
        variations[factor] = (v, m)
        if m == 0 or abs(v - value) >= rel_tol * max(abs(value), 1e-300):
            robust = False
    return MicrocanonicalAverage(value, n, robust, float(delta_E), float(E0), variations)


def effective_dimension(ensemble: DiagonalEnsemble) -> float:
    """(sum_k |c_k|^4)^-1."""
    return float(1.0 / np.sum(ensemble.weights**2))


def energy_of(h, psi) -> float:
    amps = _amplitudes(psi)
    return float(np.real(np.vdot(amps, h @ amps)))


@dataclass(frozen=True, eq=False)
class UniversalityTable:
    labels: tuple
    energies: np.ndarray
    averages: dict          # observable name -> array over states
    spread: dict            # observable name -> max - min
    relative_spread: dict   # spread / |mean|


def universality_sweep(params: ModelParams, cutoffs, states: Sequence[QuantumState],
                       observables: Mapping[str, object], labels: Sequence | None = None,
                       system: Eigensystem | None = None) -> UniversalityTable:
    """Diagonal-ensemble averages of several observables for states of equal energy."""
    if not states:
        raise ValueError("at least one state is required")
    from .systems import eigensystem

    h = build_hamiltonian(params, cutoffs)
    energies = np.array([energy_of(h, s) for s in states])
    ref = energies[0]
    bad = np.abs(energies - ref) > 1e-10 * max(1.0, abs(ref))
    if np.any(bad):
        raise ValueError(f"states do not share <H>: energies {energies.tolist()}")
    system = system or eigensystem(params, cutoffs)
    ensembles = [de_weights(system, s) for s in states]
    averages, spread, rel = {}, {}, {}
    for name, O in observables.items():
        vals = np.array([de_average(ens, O) for ens in ensembles])
        averages[name] = vals
        spread[name] = float(np.ptp(vals))
        rel[name] = float(np.ptp(vals) / max(abs(np.mean(vals)), 1e-300))
    labels = tuple(labels) if labels is not None else tuple(range(len(states)))
    return UniversalityTable(labels, energies, averages, spread, rel)


@dataclass(frozen=True, eq=False)
class DeffTable:
    vary: str
    x: np.ndarray
    d_eff: np.ndarray

    @property
    def spin_equilibrates(self) -> np.ndarray:
        """d_eff much larger (here: 10x) than the squared spin dimension."""
        return self.d_eff >= 10 * SPIN_DIM_SQUARED


def deff_scan(params: ModelParams, cutoffs, values: Sequence, vary: str = "n",
              spin="down", occupation=0) -> DeffTable:
    """d_eff over a family of initial states |spin, n> (vary="n") or couplings (vary="g")."""
    from .systems import eigensystem, initial_state

    if len(values) == 0:
        raise ValueError("empty family")
    out = []
    if vary == "n":
        system = eigensystem(params, cutoffs)
        for n in values:
            out.append(effective_dimension(de_weights(system, initial_state(params, cutoffs, spin, n))))
    elif vary == "g":
        for g in values:
            p = params.with_coupling(g)
            ens = de_weights(eigensystem(p, cutoffs), initial_state(p, cutoffs, spin, occupation))
            out.append(effective_dimension(ens))
    else:
        raise ValueError(f"vary must be 'n' or 'g', got {vary!r}")
    return DeffTable(vary, np.asarray(values, dtype=float), np.array(out))


def de_cutoff(params: ModelParams, spin, occupations, n_start: int | None = None,
              population_tol: float = 1e-10, n_cap: int = 16384):
    """Smallest doubling cutoff whose diagonal ensemble leaves the top Fock decile empty.

    Returns ``(n_max, eigensystem, ensemble)``.
    """
    from .dynamics import _top_decile_weight
    from .systems import eigensystem, initial_state

    n = int(n_start if n_start is not None else 2 * (int(np.max(np.atleast_1d(occupations))) + 1))
    while n <= n_cap:
        cutoffs = (n,) * (2 if params.kind == "QJT" else 1)
        system = eigensystem(params, cutoffs)
        ens = de_weights(system, initial_state(params, cutoffs, spin, occupations))
        top = _top_decile_weight(layout_for(params, cutoffs), n)
        if de_average(ens, top) < population_tol:
            return n, system, ens
        n *= 2
    raise CutoffCapExceeded(n_cap, "diagonal-ensemble population reaches the truncation edge")
