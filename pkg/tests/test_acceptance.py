"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Each test computes its quantity, records a verdict line through the
``verdict`` fixture and then asserts the same condition, so the printed
verdict and the pytest outcome never disagree.  Criterion 13 is
observational and never asserts.
"""

import time
from timeit import repeat

import numpy as np
import pytest
from scipy.stats import linregress

from rabichaos.dynamics import (
    NoGrowthPhaseError,
    echo_divergence_series,
    fit_lyapunov,
    fotoc_echo_series,
    fotoc_variance_series,
    run_fotoc,
    scaling_fits,
)
from rabichaos.equilibration import (
    de_cutoff,
    de_average,
    de_populations,
    deff_scan,
    time_average,
    time_average_family,
    universality_sweep,
)
from rabichaos.hilbert import spin_superposition
from rabichaos.meanfield import qjt_ground_observables
from rabichaos.models import ModelParams, build_hamiltonian, layout_for, params_from_gc_eta
from rabichaos.spectral import eig_tridiag, small_spacing_fraction, spacing_histogram, unfold
from rabichaos.symmetry import qjt_u1_block, qjt_u1_blocks, qr_parity_block, qr_parity_blocks
from rabichaos.systems import (
    boson_number,
    eigensystem,
    fotoc_operator,
    initial_state,
    sigma_x_operator,
    spin_up_population,
)

pytestmark = pytest.mark.slow

# pinned tolerances
EXACT_TOL = 1e-14
BLOCK_REL_TOL = 1e-10
TWO_ROUTE_REL_TOL = 1e-3
TWO_ROUTE_FLOOR = 1e-3
DELTA_PHI = 1e-3
PEAK_SPREAD_TOL = 0.10
R2_MIN = 0.9
MF_DENSITY_MAX = 0.02
MF_REL_ERR_MAX = 0.10
EQ_ABS_TOL = 1e-3
EQ_WINDOW = 1e3
NORM_TOL = 1e-8
UNIV_REL_TOL = 1e-3
DEFF_FACTOR = 10
SPIN_DIM_SQ = 4
HIST_TOL = 1e-6
S_MIN = 0.05
BOUND_FRACTION = 0.99

GC = 5.0
OMEGA, DELTA, G = 1.0, 10.0, 2.0


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _fastest(fn, number=200):
    return min(repeat(fn, number=number, repeat=5)) / number


# 1 ---------------------------------------------------------------------------

def test_c01_qr_parity_block_matches_printed(verdict):
    w, d, g = OMEGA, DELTA, G
    r = np.sqrt
    printed = np.array([
        [0 * w + d / 2, r(1) * g, 0, 0, 0, 0],
        [r(1) * g, 1 * w - d / 2, r(2) * g, 0, 0, 0],
        [0, r(2) * g, 2 * w + d / 2, r(3) * g, 0, 0],
        [0, 0, r(3) * g, 3 * w - d / 2, r(4) * g, 0],
        [0, 0, 0, r(4) * g, 4 * w + d / 2, r(5) * g],
        [0, 0, 0, 0, r(5) * g, 5 * w - d / 2],
    ])
    p = ModelParams("QR", w, d, g)
    block = qr_parity_block(p, 5, -1)
    dev = float(np.max(np.abs(block.to_dense() - printed)))
    elapsed = _fastest(lambda: qr_parity_block(p, 5, -1))
    ok = dev <= EXACT_TOL and elapsed < 1e-3
    verdict("C1 parity block n_max=5", ok,
            f"max entry deviation {dev:.1e} (tol {EXACT_TOL:.0e}), build {elapsed * 1e3:.3f} ms (limit 1 ms)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_c02_qjt_u1_block_matches_printed(verdict):
    w, d, g = OMEGA, DELTA, G
    r = np.sqrt
    printed = np.array([
        [1 * w + d / 2, r(2) * g, 0, 0, 0, 0, 0],
        [r(2) * g, 2 * w - d / 2, r(1) * g, 0, 0, 0, 0],
        [0, r(1) * g, 3 * w + d / 2, r(3) * g, 0, 0, 0],
        [0, 0, r(3) * g, 4 * w - d / 2, r(2) * g, 0, 0],
        [0, 0, 0, r(2) * g, 5 * w + d / 2, r(4) * g, 0],
        [0, 0, 0, 0, r(4) * g, 6 * w - d / 2, r(3) * g],
        [0, 0, 0, 0, 0, r(3) * g, 7 * w + d / 2],
    ])
    p = ModelParams("QJT", w, d, g)
    block = qjt_u1_block(p, 3, 4, 1.5)
    dev = float(np.max(np.abs(block.to_dense() - printed)))
    elapsed = _fastest(lambda: qjt_u1_block(p, 3, 4, 1.5))
    ok = dev <= EXACT_TOL and elapsed < 1e-3
    verdict("C2 U(1) block c=3/2 cutoffs (3,4)", ok,
            f"max entry deviation {dev:.1e} (tol {EXACT_TOL:.0e}), build {elapsed * 1e3:.3f} ms (limit 1 ms)")
    assert ok


# 3 ---------------------------------------------------------------------------

def _merged_vs_dense(h, blocks):
    merged = np.sort(np.concatenate([eig_tridiag(b).eigenvalues for b in blocks]))
    dense = np.linalg.eigvalsh(h.toarray())
    if merged.size != dense.size:
        return np.inf
    return float(np.max(np.abs(merged - dense) / np.maximum(np.abs(dense), 1.0)))


def test_c03_blocks_match_dense(verdict):
    p_qr = ModelParams("QR", 1.0, 10.0, 2.5)
    p_jt = ModelParams("QJT", 1.0, 10.0, 2.5)

    def run():
        return (_merged_vs_dense(build_hamiltonian(p_qr, 30), qr_parity_blocks(p_qr, 30)),
                _merged_vs_dense(build_hamiltonian(p_jt, (5, 5)), qjt_u1_blocks(p_jt, 5, 5)))

    (dev_qr, dev_jt), elapsed = _timed(run)
    ok = dev_qr <= BLOCK_REL_TOL and dev_jt <= BLOCK_REL_TOL and elapsed < 5.0
    verdict("C3 sector blocks vs dense full space", ok,
            f"rel dev QR n=30 {dev_qr:.1e}, QJT (5,5) {dev_jt:.1e} (tol {BLOCK_REL_TOL:.0e}), {elapsed:.2f} s")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_c04_fotoc_two_routes(verdict):
    def run():
        p = params_from_gc_eta("QR", GC, 50, g=7.0)
        res = run_fotoc(p, "+", 0, horizon=20.0, grid_size=2000)
        t_star = res.fit.t_star
        times = np.linspace(0.0, t_star, 1000)
        system = eigensystem(p, res.n_max)
        psi0 = initial_state(p, res.n_max, "+", 0)
        G = fotoc_operator(p, res.n_max)
        var = fotoc_variance_series(system, psi0, G, times).values
        echo = fotoc_echo_series(system, psi0, G, None, DELTA_PHI, times).values
        mask = var >= TWO_ROUTE_FLOOR
        return res.n_max, t_star, float(np.max(np.abs(echo[mask] - var[mask]) / var[mask])), int(mask.sum())

    (n_max, t_star, rel, n_pts), elapsed = _timed(run)
    ok = rel <= TWO_ROUTE_REL_TOL and elapsed < 120
    verdict("C4 echo route vs variance route", ok,
            f"max rel diff {rel:.2e} over {n_pts} points on [0, t*={t_star:.3f}] "
            f"(tol {TWO_ROUTE_REL_TOL:.0e}), n_max={n_max}, {elapsed:.1f} s")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_c05_normal_phase_shape(verdict):
    def run():
        peaks, no_growth = [], []
        for eta in (25, 50, 100):
            res = run_fotoc(params_from_gc_eta("QR", GC, eta, g=4.0), "+", 0, horizon=40.0, grid_size=2000)
            peaks.append(float(np.max(res.series.values)))
            try:
                fit_lyapunov(res.series)
                no_growth.append(False)
            except NoGrowthPhaseError:
                no_growth.append(True)
        return np.array(peaks), no_growth

    (peaks, no_growth), elapsed = _timed(run)
    spread = float(peaks.max() / peaks.min() - 1.0)
    ok = spread < PEAK_SPREAD_TOL and all(no_growth) and elapsed < 120
    verdict("C5 normal phase g=4", ok,
            f"peaks {np.round(peaks, 4).tolist()}, spread {spread:.3f} (limit {PEAK_SPREAD_TOL}), "
            f"no-growth errors {no_growth}, {elapsed:.1f} s")
    assert ok


# 6 ---------------------------------------------------------------------------

ETAS = (25, 50, 100, 200)


@pytest.mark.parametrize("g", [7.0, 6.0])
def test_c06_superradiant_shape(verdict, g):
    def run():
        return [run_fotoc(params_from_gc_eta("QR", GC, eta, g=g), "+", 0, horizon=30.0, grid_size=3000)
                for eta in ETAS]

    runs, elapsed = _timed(run)
    fits = [r.fit for r in runs]
    if any(f is None for f in fits):
        verdict(f"C6 superradiant g={g:g}", False, f"no growth fit for some eta: {[r.error for r in runs]}")
        pytest.fail("missing fit")
    lam = np.array([f.lambda_q for f in fits])
    r2 = np.array([f.r_squared for f in fits])
    peaks = np.array([f.peak_value for f in fits])
    sf = scaling_fits(ETAS, fits)
    ok = (np.all(lam > 0) and np.all(r2 >= R2_MIN) and np.all(np.diff(peaks) > 0)
          and sf.r2_product >= R2_MIN and elapsed < 1800)
    verdict(f"C6 superradiant g={g:g}", ok,
            f"lambda_Q {np.round(lam, 3).tolist()}, r2 min {r2.min():.4f} (>= {R2_MIN}), "
            f"peaks {np.round(peaks, 2).tolist()} strictly increasing={bool(np.all(np.diff(peaks) > 0))}, "
            f"product-vs-log(eta) r2 {sf.r2_product:.4f} (>= {R2_MIN}), "
            f"n_max {[r.n_max for r in runs]}, {elapsed:.1f} s")
    assert ok


# 7 ---------------------------------------------------------------------------

def _slope_stderr(fit, series):
    t, v = series.times, series.values
    m = (t >= fit.fit_window[0]) & (t <= fit.fit_window[1])
    return linregress(t[m], np.log(v[m])).stderr


def test_c07_lambda_monotone_in_g(verdict):
    gs = np.arange(7, 15, dtype=float)

    def run():
        return [run_fotoc(params_from_gc_eta("QR", GC, 200, g=g), "+", 5, horizon=25.0, grid_size=2500)
                for g in gs]

    runs, elapsed = _timed(run)
    if any(r.fit is None for r in runs):
        verdict("C7 lambda_Q vs g", False, f"missing fits: {[r.error for r in runs]}")
        pytest.fail("missing fit")
    lam = np.array([r.fit.lambda_q for r in runs])
    err = np.array([_slope_stderr(r.fit, r.fit_series) for r in runs])
    drops = np.flatnonzero(np.diff(lam) < 0)
    flagged = [f"g {gs[i]:g}->{gs[i + 1]:g}: {lam[i]:.4f}->{lam[i + 1]:.4f}" for i in drops]
    within = all(lam[i] - lam[i + 1] <= 2 * np.hypot(err[i], err[i + 1]) for i in drops)
    ok = (drops.size == 0 or (drops.size == 1 and within)) and elapsed < 1800
    verdict("C7 lambda_Q nondecreasing in g (eta=200, |+,5>)", ok,
            f"lambda_Q {np.round(lam, 4).tolist()}, violations {flagged or 'none'}"
            f"{' (within 2 sigma fit uncertainty)' if drops.size and within else ''}, {elapsed:.1f} s")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_c08_meanfield_convergence(verdict):
    etas = (50, 100, 200)

    def run():
        low = [qjt_ground_observables(params_from_gc_eta("QJT", GC, e, g=0.5 * GC), 200).boson_density
               for e in etas]
        lam = 1.2
        target = (lam**4 - 1) / (2 * lam**2)
        high = [qjt_ground_observables(params_from_gc_eta("QJT", GC, e, g=lam * GC), 200).excitation_density
                for e in etas]
        return np.array(low), np.abs(np.array(high) - target) / target, target, np.array(high)

    (low, rel, target, high), elapsed = _timed(run)
    ok = (low[-1] <= MF_DENSITY_MAX and np.all(np.diff(low) < 0) and np.all(np.diff(rel) < 0)
          and rel[-1] <= MF_REL_ERR_MAX and elapsed < 300)
    verdict("C8 U(1)-sector ground state vs mean field", ok,
            f"lambda=0.5 density {[f'{x:.2e}' for x in low]} (<= {MF_DENSITY_MAX} at eta=200, decreasing); "
            f"lambda=1.2 excitation {np.round(high, 4).tolist()} vs {target:.5f}, "
            f"rel err {np.round(rel, 4).tolist()} (<= {MF_REL_ERR_MAX}), {elapsed:.1f} s")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_c09_time_average_vs_diagonal_ensemble(verdict):
    def run():
        p = params_from_gc_eta("QR", GC, 200, g=15.0)
        n, system, ens = de_cutoff(p, "down", 20)
        lay = layout_for(p, n)
        up = spin_up_population(lay)
        psi0 = initial_state(p, n, "down", 20)
        de = de_average(ens, up)
        devs = {w: abs(time_average(system, psi0, up, 0.0, w) - de) for w in (EQ_WINDOW, 1e4)}
        total = float(np.sum(de_populations(ens, lay.occupation(0))))
        return n, de, devs, total

    (n, de, devs, total), elapsed = _timed(run)
    ok = max(devs.values()) <= EQ_ABS_TOL and abs(total - 1) <= NORM_TOL and elapsed < 300
    verdict("C9 time average vs diagonal ensemble", ok,
            f"DE P(up) {de:.5f}, |TA-DE| " + ", ".join(f"W={w:g}: {d:.1e}" for w, d in devs.items())
            + f" (tol {EQ_ABS_TOL:.0e}), sum P(n)-1 {total - 1:.1e} (tol {NORM_TOL:.0e}), n_max={n}, {elapsed:.1f} s")
    assert ok


# 10 --------------------------------------------------------------------------

def test_c10_universality(verdict):
    phis = (0.0, np.pi / 4, np.pi / 2, np.pi)

    def run():
        p = params_from_gc_eta("QR", GC, 100, g=10.0)
        n, system, _ = de_cutoff(p, "+", 0)
        lay = layout_for(p, n)
        states = [spin_superposition(phi, 0, lay) for phi in phis]
        obs = {"P_up": spin_up_population(lay), "n_boson": boson_number(lay)}
        tab = universality_sweep(p, n, states, obs, phis, system)
        ta = np.array([time_average_family(system, s, list(obs.values()), 0.0, 1e4) for s in states])
        ta_rel = np.ptp(ta, axis=0) / np.abs(ta.mean(axis=0))
        return n, tab, ta_rel

    (n, tab, ta_rel), elapsed = _timed(run)
    de_rel = max(tab.relative_spread.values())
    ok = de_rel <= UNIV_REL_TOL and ta_rel.max() <= UNIV_REL_TOL and elapsed < 300
    verdict("C10 universality over phi", ok,
            f"relative spread DE {de_rel:.1e}, time average W=1e4 P(up) {ta_rel[0]:.1e} <a^dag a> {ta_rel[1]:.1e} "
            f"(tol {UNIV_REL_TOL:.0e}), n_max={n}, {elapsed:.1f} s")
    assert ok


# 11 --------------------------------------------------------------------------

def test_c11_deff_monotone(verdict):
    ns = [0, 5, 10, 20]

    def run():
        p = params_from_gc_eta("QR", GC, 200, g=15.0)
        n, _, _ = de_cutoff(p, "down", max(ns))
        return deff_scan(p, n, ns, "n", spin="down").d_eff

    d, elapsed = _timed(run)
    ok = bool(np.all(np.diff(d) > 0)) and d[-1] >= DEFF_FACTOR * SPIN_DIM_SQ and elapsed < 300
    verdict("C11 d_eff over |down,n>", ok,
            f"d_eff {np.round(d, 2).tolist()}, at n=20 {d[-1]:.1f} (>= {DEFF_FACTOR * SPIN_DIM_SQ}), {elapsed:.1f} s")
    assert ok


# 12 --------------------------------------------------------------------------

def test_c12_spacing_discriminator(verdict):
    n_max = 8000  # negative-parity block of size 8001; the converged lower half is used

    def run():
        out = {}
        for g in (3.0, 7.0):
            w = eig_tridiag(qr_parity_block(params_from_gc_eta("QR", GC, 200, g=g), n_max, -1)).eigenvalues
            s = unfold(np.sort(w)[: w.size // 2])
            out[g] = (small_spacing_fraction(s, S_MIN), spacing_histogram(s).integral, w.size // 2)
        return out

    out, elapsed = _timed(run)
    (f3, i3, m), (f7, i7, _) = out[3.0], out[7.0]
    ok = f3 > f7 and abs(i3 - 1) <= HIST_TOL and abs(i7 - 1) <= HIST_TOL and m >= 4000 and elapsed < 600
    verdict("C12 small-spacing discriminator", ok,
            f"fraction s<{S_MIN}: g=3 {f3:.4f} vs g=7 {f7:.4f}; histogram integrals {i3:.8f}, {i7:.8f} "
            f"(tol {HIST_TOL:.0e}); {m} levels per block; {elapsed:.1f} s")
    assert ok


# 13 --------------------------------------------------------------------------

def test_c13_sigma_x_echo_bound(verdict):
    rows = []
    for eta in (25, 50, 100):
        p = params_from_gc_eta("QR", GC, eta, g=7.0)
        res = run_fotoc(p, "+", 0, horizon=20.0, grid_size=1000, refine=False)
        n = res.n_max
        system, psi0 = eigensystem(p, n), initial_state(p, n, "+", 0)
        div = echo_divergence_series(system, psi0, fotoc_operator(p, n), sigma_x_operator(layout_for(p, n)),
                                     DELTA_PHI, res.series.times)
        bounded = div.echo.values <= res.series.values
        rows.append((eta, float(bounded.mean()), int((~bounded).sum())))
    frac = min(r[1] for r in rows)
    detail = ", ".join(f"eta={e}: {f:.3f} bounded ({v} violations)" for e, f, v in rows)
    verdict("C13 sigma_x echo divergence <= FOTOC", frac >= BOUND_FRACTION,
            f"{detail} (target >= {BOUND_FRACTION})", gating=False)
