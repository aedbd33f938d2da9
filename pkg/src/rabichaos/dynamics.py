"""
Exact time evolution and fidelity OTOC observables.

States are propagated by spectral decomposition, psi(t) = sum_k c_k
exp(-i E_k t)|E_k>, block by block over an :class:`Eigensystem`.  Time grids
are processed in chunks so that memory stays at O(dim x chunk).

Declared conventions (also written into every series' metadata):

* scrambling time t*: first local maximum whose value is within 10% of the
  global maximum over the horizon;
* Lyapunov fit window: from the first sample >= 10x the initial value to the
  first sample >= 10% of the value at t*.  When the series does not grow by
  more than two decades these thresholds cross, and the window falls back to
  the middle half of the log-range, [v0 r^(1/4), v0 r^(3/4)] with r = v(t*)/v0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .hilbert import LocalOperator, QuantumState
from .models import ModelParams, layout_for
from .spectral import Eigensystem

log = logging.getLogger(__name__)

T_STAR_RULE = "first local maximum within 10% of the global maximum"
WINDOW_RULE = "[first v >= 10 v(0), first v >= 0.1 v(t*)]"
FALLBACK_WINDOW_RULE = "[v0 r^0.25, v0 r^0.75], r = v(t*)/v(0)"
DEFAULT_DELTA_PHI = 1e-3


class NoGrowthPhaseError(ValueError):
    """Raised when a FOTOC series never grows 10x above its initial value."""


class CutoffCapExceeded(RuntimeError):
    def __init__(self, cap: int, detail: str = ""):
        self.cap = cap
        msg = f"adaptive cutoff did not converge below the hard cap n_max={cap}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class LyapunovFit:
    lambda_q: float
    t_star: float
    fit_window: tuple[float, float]
    r_squared: float
    window_rule: str
    n_points: int
    peak_value: float
    params: dict = field(default_factory=dict)

    @property
    def product(self) -> float:
        return self.lambda_q * self.t_star


@dataclass(frozen=True)
class EchoDivergence:
    """Delta E_V / dphi^2 from the explicit echo and from the double commutator."""

    echo: TimeSeries
    commutator: TimeSeries


# propagation ----------------------------------------------------------------

def _matmul(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    """v @ x without promoting a real ``v`` to complex."""
    if np.isrealobj(v) and np.iscomplexobj(x):
        return (v @ x.real) + 1j * (v @ x.imag)
    return v @ x


def _amplitudes(psi) -> np.ndarray:
    if isinstance(psi, QuantumState):
        return psi.amplitudes
    return np.asarray(psi, dtype=complex)


class Propagator:
    """Precomputed eigen-expansion of one initial state.

    Eigencomponents with |c_k| below ``rel_cut * max|c|`` are dropped; their
    contribution to any amplitude is below that bound.
    """

    def __init__(self, spectrum, psi0, rel_cut: float = 1e-14):
        self.system = Eigensystem.wrap(spectrum)
        self.psi0 = _amplitudes(psi0)
        if self.psi0.shape != (self.system.dim,):
            raise ValueError(f"state has {self.psi0.size} amplitudes, eigensystem dim is {self.system.dim}")
        coeffs = self.system.coefficients(self.psi0)
        cmax = max(np.max(np.abs(c), initial=0.0) for c in coeffs)
        self.parts = []
        captured = 0.0
        for block, c in zip(self.system.blocks, coeffs):
            keep = np.abs(c) > rel_cut * cmax
            if not np.any(keep):
                continue
            captured += float(np.sum(np.abs(c) ** 2))
            self.parts.append((block.rows, block.eigenvalues[keep],
                               block.eigenvectors[:, keep] * c[keep], c[keep], block, keep))
        norm2 = float(np.vdot(self.psi0, self.psi0).real)
        if abs(captured - norm2) > 1e-10 * max(norm2, 1.0):
            raise ValueError("initial state has weight outside the solved sectors")

    @property
    def n_components(self) -> int:
        return sum(p[1].size for p in self.parts)

    def states(self, times: np.ndarray) -> np.ndarray:
        """psi(t) for each t, as columns of a (dim, len(times)) array."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((self.system.dim, times.size), dtype=complex)
        for rows, energies, weighted, *_ in self.parts:
            out[rows] = weighted @ np.exp(-1j * np.outer(energies, times))
        return out

    def chunks(self, times: np.ndarray, chunk: int = 256) -> Iterator[tuple[slice, np.ndarray]]:
        for start in range(0, times.size, chunk):
            sl = slice(start, min(start + chunk, times.size))
            yield sl, self.states(times[sl])

    def overlap_back(self, x: np.ndarray, times: np.ndarray) -> np.ndarray:
        """<psi0| e^{iHt_j} x_j> for each column j, using only the kept components."""
        total = np.zeros(times.size, dtype=complex)
        for rows, energies, _, c, block, keep in self.parts:
            d = _matmul(block.eigenvectors[:, keep].conj().T, x[rows])
            total += np.sum(c.conj()[:, None] * np.exp(1j * np.outer(energies, times)) * d, axis=0)
        return total


def propagate_columns(system: Eigensystem, x: np.ndarray, times: np.ndarray, sign: int = -1) -> np.ndarray:
    """exp(sign * i H t_j) applied to column j of ``x``."""
    out = np.zeros_like(x, dtype=complex)
    for block in system.blocks:
        rows = block.rows
        v = block.eigenvectors
        d = _matmul(v.conj().T, x[rows])
        d *= np.exp(sign * 1j * np.outer(block.eigenvalues, times))
        out[rows] = _matmul(v, d)
    return out


def evolve(spectrum, psi0, t: float):
    """psi(t) = exp(-iHt) psi0 by spectral decomposition."""
    prop = Propagator(spectrum, psi0)
    amps = prop.states(np.array([float(t)]))[:, 0]
    if isinstance(psi0, QuantumState):
        return QuantumState(psi0.layout, amps)
    return amps


def _apply(op, psi: np.ndarray) -> np.ndarray:
    if isinstance(op, LocalOperator):
        return op.apply(psi)
    return op @ psi


def _kick(G, delta_phi: float):
    """exp(i dphi G): exact, from one eigendecomposition of G."""
    if isinstance(G, LocalOperator):
        return G.exp_i(delta_phi)
    dense = G.toarray() if sp.issparse(G) else np.asarray(G)
    w, v = np.linalg.eigh(dense)
    return (v * np.exp(1j * delta_phi * w)) @ v.conj().T


def _series_meta(extra: dict | None = None) -> dict:
    meta = {"t_star_rule": T_STAR_RULE, "fit_window_rule": WINDOW_RULE,
            "fit_window_fallback": FALLBACK_WINDOW_RULE, "evolution": "spectral decomposition"}
    if extra:
        meta.update(extra)
    return meta


def _fotoc_pass(prop: Propagator, G, times: np.ndarray, edge_weight: np.ndarray | None = None,
                chunk: int = 256) -> tuple[np.ndarray, np.ndarray | None]:
    var = np.empty(times.size)
    edge = None if edge_weight is None else np.empty(times.size)
    for sl, psi in prop.chunks(times, chunk):
        gpsi = _apply(G, psi)
        mean = np.real(np.sum(psi.conj() * gpsi, axis=0))
        second = np.sum(np.abs(gpsi) ** 2, axis=0)  # <G^2> = ||G psi||^2 for Hermitian G
        var[sl] = second - mean**2
        if edge is not None:
            edge[sl] = edge_weight @ (np.abs(psi) ** 2)
    return var, edge


def fotoc_variance_series(spectrum, psi0, G, times, meta: dict | None = None) -> TimeSeries:
    """var G(t) = <G^2> - <G>^2, the leading-order (1 - F_G)/dphi^2."""
    times = np.asarray(times, dtype=float)
    prop = Propagator(spectrum, psi0)
    var, _ = _fotoc_pass(prop, G, times)
    return TimeSeries(times, var, _series_meta({"quantity": "var_G", **(meta or {})}))


def fotoc_echo_series(spectrum, psi0, G, V=None, delta_phi: float = DEFAULT_DELTA_PHI,
                      times=None, meta: dict | None = None) -> TimeSeries:
    """(1 - Re F)/dphi^2 from the finite-dphi echo F = <W^dag(t) V W(t) V>.

    ``V=None`` is the projector onto ``psi0``.  The state is evolved forward,
    kicked by exp(i dphi G), evolved back and measured, with no expansion in
    dphi.
    """
    times = np.asarray(times, dtype=float)
    prop = Propagator(spectrum, psi0)
    W = _kick(G, delta_phi)
    values = np.empty(times.size)
    if V is None:
        for sl, psi in prop.chunks(times):
            amp = prop.overlap_back(_apply(W, psi), times[sl])
            values[sl] = (1.0 - np.abs(amp) ** 2) / delta_phi**2
    else:
        system = prop.system
        vpsi0 = V @ prop.psi0
        prop_v = Propagator(system, vpsi0) if np.linalg.norm(vpsi0) > 0 else None
        for sl, psi in prop.chunks(times):
            t = times[sl]
            chi1 = propagate_columns(system, _apply(W, psi), t, sign=+1)
            if prop_v is None:
                f = np.zeros(t.size)
            else:
                chi2 = propagate_columns(system, _apply(W, prop_v.states(t)), t, sign=+1)
                f = np.sum(chi1.conj() * (V @ chi2), axis=0)
            values[sl] = (1.0 - np.real(f)) / delta_phi**2
    return TimeSeries(times, values, _series_meta({"quantity": "fotoc_echo", "delta_phi": delta_phi,
                                                    **(meta or {})}))


def echo_divergence_series(spectrum, psi0, G, V=None, delta_phi: float = DEFAULT_DELTA_PHI,
                           times=None, meta: dict | None = None) -> EchoDivergence:
    """Divergence from the perfect echo, Delta E_V / dphi^2, by two routes.

    ``echo``: <psi0|V|psi0> - <psi0|U^dag V U|psi0> with
    U = exp(iHt) exp(i dphi G) exp(-iHt), computed exactly.
    ``commutator``: (1/2) <psi0|[G(t), [G(t), V]]|psi0>, the dphi^2 term.
    ``V=None`` is the projector onto ``psi0``.
    """
    times = np.asarray(times, dtype=float)
    prop = Propagator(spectrum, psi0)
    system = prop.system
    psi_0 = prop.psi0
    W = _kick(G, delta_phi)
    G2 = G.square() if isinstance(G, LocalOperator) else G @ G
    echo = np.empty(times.size)
    comm = np.empty(times.size)
    if V is None:
        v0 = float(np.vdot(psi_0, psi_0).real) ** 2
        for sl, psi in prop.chunks(times):
            t = times[sl]
            amp = prop.overlap_back(_apply(W, psi), t)
            echo[sl] = (v0 - np.abs(amp) ** 2) / delta_phi**2
            gpsi = _apply(G, psi)
            eta_overlap = prop.overlap_back(gpsi, t)        # <psi0|e^{iHt} G psi(t)>
            comm[sl] = np.real(np.sum(psi.conj() * _apply(G2, psi), axis=0)) - np.abs(eta_overlap) ** 2
    else:
        v0 = float(np.real(np.vdot(psi_0, V @ psi_0)))
        vpsi0 = V @ psi_0
        prop_v = Propagator(system, vpsi0) if np.linalg.norm(vpsi0) > 0 else None
        for sl, psi in prop.chunks(times):
            t = times[sl]
            chi = propagate_columns(system, _apply(W, psi), t, sign=+1)
            echo[sl] = (v0 - np.real(np.sum(chi.conj() * (V @ chi), axis=0))) / delta_phi**2
            eta = propagate_columns(system, _apply(G, psi), t, sign=+1)
            middle = np.real(np.sum(eta.conj() * (V @ eta), axis=0))
            if prop_v is None:
                outer = np.zeros(t.size)
            else:
                xi = prop_v.states(t)
                outer = np.real(np.sum(psi.conj() * _apply(G2, xi), axis=0))
            comm[sl] = outer - middle
    base = {"delta_phi": delta_phi, "observable": "projector" if V is None else "matrix", **(meta or {})}
    return EchoDivergence(
        TimeSeries(times, echo, _series_meta({"quantity": "echo_divergence", "route": "explicit echo", **base})),
        TimeSeries(times, comm, _series_meta({"quantity": "echo_divergence", "route": "double commutator", **base})),
    )


# truncation control ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AdaptiveCutoff:
    n_max: int
    series: TimeSeries
    history: tuple[tuple[int, float, float], ...]  # (n_max, max rel. change vs 2 n_max, edge population)
    system: Eigensystem | None = None
    psi0: QuantumState | None = None


def _top_decile_weight(layout, n_max: int) -> np.ndarray:
    """Indicator of basis states with some occupation above 0.9 n_max."""
    occ = np.max(np.stack([layout.occupation(m) for m in range(layout.n_modes)]), axis=0)
    return (occ > 0.9 * n_max).astype(float)


def fotoc_at_cutoff(params: ModelParams, spin, occupations, times, n_max: int, cache=None):
    """var G series at one cutoff plus the maximal top-decile Fock population."""
    from .systems import eigensystem, fotoc_operator, initial_state

    cutoffs = (n_max,) * (2 if params.kind == "QJT" else 1)
    layout = layout_for(params, cutoffs)
    psi0 = initial_state(params, cutoffs, spin, occupations)
    system = eigensystem(params, cutoffs, cache=cache)
    prop = Propagator(system, psi0)
    var, edge = _fotoc_pass(prop, fotoc_operator(params, cutoffs), np.asarray(times, float),
                            _top_decile_weight(layout, n_max))
    meta = {"quantity": "var_G", "n_max": n_max, "params": params.as_dict(),
            "initial_state": {"spin": str(spin), "occupations": list(np.atleast_1d(occupations).tolist())}}
    return TimeSeries(times, var, _series_meta(meta)), float(np.max(edge)), system, psi0


def adaptive_cutoff(params: ModelParams, spin, occupations, times, tolerance: float = 1e-3,
                    n_start: int | None = None, n_cap: int = 16384,
                    population_tol: float = 1e-8, cache=None) -> AdaptiveCutoff:
    """Double n_max until the FOTOC no longer depends on the truncation.

    A cutoff n is accepted when the population of the top decile of Fock
    levels (occupation > 0.9 n) stays below ``population_tol`` over the whole
    time grid and var G at n differs from var G at 2n by less than
    ``tolerance`` (relative, maximum over the grid).  The search starts one
    level above the largest initial occupation, the smallest cutoff on which
    G acts exactly on the initial state.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    times = np.asarray(times, dtype=float)
    occ = np.atleast_1d(occupations)
    n = int(n_start if n_start is not None else int(np.max(occ)) + 1)
    if n > n_cap:
        raise CutoffCapExceeded(n_cap, f"starting cutoff {n} already exceeds it")
    history = []
    current = fotoc_at_cutoff(params, spin, occupations, times, n, cache)
    while True:
        if 2 * n > n_cap:
            raise CutoffCapExceeded(n_cap, f"last tried n_max={n}")
        finer = fotoc_at_cutoff(params, spin, occupations, times, 2 * n, cache)
        ref = finer[0].values
        change = float(np.max(np.abs(current[0].values - ref) / np.maximum(np.abs(ref), 1e-300)))
        history.append((n, change, current[1]))
        log.debug("cutoff %d: rel change %.3e, edge population %.3e", n, change, current[1])
        if current[1] < population_tol and change < tolerance:
            series = TimeSeries(current[0].times, current[0].values,
                                {**current[0].meta, "cutoff_tolerance": tolerance,
                                 "cutoff_history": [list(h) for h in history]})
            return AdaptiveCutoff(n, series, tuple(history), current[2], current[3])
        n, current = 2 * n, finer


# fits -----------------------------------------------------------------------

def _local_maxima(v: np.ndarray, strict: bool = False) -> np.ndarray:
    """Interior maxima; the last sample of a flat top counts, a flat run that never drops does not."""
    left = v[1:-1] > v[:-2] if strict else v[1:-1] >= v[:-2]
    return np.flatnonzero(left & (v[1:-1] > v[2:])) + 1


def scrambling_index(values: np.ndarray) -> int:
    """Index of t*: first local maximum within 10% of the global maximum."""
    v = np.asarray(values, dtype=float)
    gmax = np.max(v)
    cands = [i for i in _local_maxima(v) if v[i] >= 0.9 * gmax]
    if v.size > 1 and v[-1] >= v[-2] and v[-1] >= 0.9 * gmax:
        cands.append(v.size - 1)
    if not cands:
        return int(np.argmax(v))
    return int(min(cands))


def _r_squared(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0:
        return 1.0
    return float(min(1.0, max(0.0, 1.0 - np.sum((y - yhat) ** 2) / ss_tot)))


def fit_lyapunov(series: TimeSeries) -> LyapunovFit:
    """Quantum Lyapunov exponent from the early exponential growth of the FOTOC."""
    t, v = series.times, series.values
    v0 = v[0]
    if v0 <= 0 or np.max(v) < 10.0 * v0:
        raise NoGrowthPhaseError(
            f"normal-phase-like series: maximum {np.max(v):.4g} is below 10x the initial value {v0:.4g}")
    i_star = scrambling_index(v)
    v_star = v[i_star]
    lower, upper, rule = 10.0 * v0, 0.1 * v_star, WINDOW_RULE
    if lower >= upper:
        ratio = v_star / v0
        lower, upper, rule = v0 * ratio**0.25, v0 * ratio**0.75, FALLBACK_WINDOW_RULE
    head = v[: i_star + 1]
    lo = int(np.argmax(head >= lower))
    hi = int(np.argmax(head >= upper))
    if hi - lo < 2:
        raise ValueError(f"fit window [{t[lo]:.4g}, {t[hi]:.4g}] has fewer than 3 samples; refine the time grid")
    x, y = t[lo: hi + 1], np.log(v[lo: hi + 1])
    slope, intercept = np.polyfit(x, y, 1)
    r2 = _r_squared(y, slope * x + intercept)
    params = series.meta.get("params", {})
    echo = {k: params[k] for k in ("eta", "g", "omega", "delta") if k in params}
    return LyapunovFit(float(slope), float(t[i_star]), (float(t[lo]), float(t[hi])), r2, rule,
                       int(hi - lo + 1), float(v_star), echo)


@dataclass(frozen=True)
class ScalingFits:
    """t* ~ a log(eta) + b log^2(eta) and lambda_Q t* ~ c log(eta) + d."""

    a: float
    b: float
    r2_t_star: float
    c: float
    d: float
    r2_product: float


def scaling_fits(eta_values: Sequence[float], fits: Sequence[LyapunovFit]) -> ScalingFits:
    eta = np.asarray(eta_values, dtype=float)
    if eta.size < 4 or eta.size != len(fits):
        raise ValueError("scaling fits need at least 4 eta points with one fit each")
    x = np.log(eta)
    t_star = np.array([f.t_star for f in fits])
    prod = np.array([f.product for f in fits])
    A = np.column_stack([x, x**2])
    (a, b), *_ = np.linalg.lstsq(A, t_star, rcond=None)
    B = np.column_stack([x, np.ones_like(x)])
    (c, d), *_ = np.linalg.lstsq(B, prod, rcond=None)
    return ScalingFits(float(a), float(b), _r_squared(t_star, A @ [a, b]),
                       float(c), float(d), _r_squared(prod, B @ [c, d]))


@dataclass(frozen=True)
class LongTimeProfile:
    t_star: float
    global_max: float
    recurrence_times: np.ndarray
    recurrence_values: np.ndarray
    envelope_times: np.ndarray
    envelope_values: np.ndarray
    saturates: bool

    @property
    def summary(self) -> str:
        if self.saturates:
            return "series settles on a plateau near its maximum"
        return (f"{self.recurrence_times.size} near-maximal recurrences after t*; "
                "no true saturation plateau is reached")


def long_time_profile(series: TimeSeries, threshold: float = 0.9,
                      min_horizon_factor: float = 5.0) -> LongTimeProfile:
    """Recurrences of near-maximal FOTOC values after the scrambling time."""
    t, v = series.times, series.values
    gmax = float(np.max(v))
    i_star = scrambling_index(v)
    if not (0 < i_star < v.size - 1):
        # monotone or saturating series: take the first arrival near the maximum
        i_star = int(np.argmax(v >= threshold * gmax))
    t_star = float(t[i_star])
    if t[-1] < min_horizon_factor * t_star:
        raise ValueError(f"horizon {t[-1]:.4g} is shorter than {min_horizon_factor} t* = {min_horizon_factor * t_star:.4g}")
    peaks = _local_maxima(v, strict=True)
    peaks = peaks[(peaks > i_star) & (v[peaks] >= threshold * gmax)]
    # envelope: maximum over consecutive windows of length t*
    width = max(t_star, t[1] - t[0])
    edges = np.arange(t[0], t[-1] + width, width)
    which = np.digitize(t, edges) - 1
    env_t, env_v = [], []
    for k in np.unique(which):
        mask = which == k
        env_t.append(float(edges[k]))
        env_v.append(float(np.max(v[mask])))
    after = v[i_star:]
    saturates = bool(np.mean(after >= threshold * gmax) >= 0.9)
    return LongTimeProfile(t_star, gmax, t[peaks], v[peaks], np.array(env_t), np.array(env_v), saturates)


# pipelines ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FotocRun:
    series: TimeSeries
    n_max: int
    fit: LyapunovFit | None
    fit_series: TimeSeries | None
    error: str | None = None


def run_fotoc(params: ModelParams, spin="+", occupations=0, horizon: float = 40.0,
              grid_size: int = 2000, n_max: int | None = None, tolerance: float = 1e-3,
              refine: bool = True, n_cap: int = 16384, cache=None) -> FotocRun:
    """FOTOC series on a uniform grid plus the Lyapunov fit when there is growth.

    Without an explicit ``n_max`` the cutoff is chosen by
    :func:`adaptive_cutoff`.  With ``refine`` the fit uses a second grid of
    ``grid_size`` points on [0, t* + 2 dt], which resolves the growth window
    independently of the horizon.
    """
    from .systems import fotoc_operator

    times = np.linspace(0.0, horizon, grid_size)
    if n_max is None:
        res = adaptive_cutoff(params, spin, occupations, times, tolerance, n_cap=n_cap, cache=cache)
        series, n_max, system, psi0 = res.series, res.n_max, res.system, res.psi0
    else:
        series, _, system, psi0 = fotoc_at_cutoff(params, spin, occupations, times, n_max, cache)
    try:
        fit = fit_lyapunov(series)
    except NoGrowthPhaseError as exc:
        return FotocRun(series, n_max, None, None, str(exc))
    fit_series = series
    if refine:
        i_star = scrambling_index(series.values)
        t_end = min(horizon, times[min(i_star + 2, times.size - 1)])
        fine = np.linspace(0.0, t_end, grid_size)
        cutoffs = (n_max,) * (2 if params.kind == "QJT" else 1)
        fit_series = fotoc_variance_series(system, psi0, fotoc_operator(params, cutoffs), fine,
                                           meta={k: v for k, v in series.meta.items() if k != "quantity"})
        fit = fit_lyapunov(fit_series)
    return FotocRun(series, n_max, fit, fit_series)
