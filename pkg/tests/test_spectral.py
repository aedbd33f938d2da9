import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rabichaos.models import ModelParams, build_qr
from rabichaos.spectral import (
    Eigensystem,
    Spectrum,
    eig_dense,
    eig_tridiag,
    gershgorin_bounds,
    poisson_pdf,
    small_spacing_fraction,
    spacing_histogram,
    sturm_count,
    unfold,
    wigner_dyson_pdf,
)
from rabichaos.symmetry import qr_parity_block

finite = st.floats(-5, 5, allow_nan=False)


def test_eig_dense_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eig_dense(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        eig_dense(np.zeros((2, 3)))


def test_eig_dense_vectors():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = m + m.conj().T
    s = eig_dense(h)
    assert s.residual(h) < 1e-13
    assert np.allclose(s.eigenvectors.conj().T @ s.eigenvectors, np.eye(6))


@given(arrays(float, 12, elements=finite), arrays(float, 11, elements=finite))
@settings(max_examples=40, deadline=None)
def test_tridiagonal_solvers_agree(d, e):
    ref = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    assert np.allclose(eig_tridiag((d, e)).eigenvalues, ref, atol=1e-10)
    assert np.allclose(eig_tridiag((d, e), slices=3).eigenvalues, ref, atol=1e-10)
    assert np.allclose(eig_tridiag((d, e), want_vectors=True).eigenvalues, ref, atol=1e-10)
    assert np.allclose(eig_tridiag((d, e), select=(2, 5)).eigenvalues, ref[2:6], atol=1e-10)


@given(arrays(float, 10, elements=finite), arrays(float, 9, elements=finite), st.floats(-12, 12))
@settings(max_examples=60, deadline=None)
def test_sturm_count_matches_eigenvalues(d, e, x):
    w = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    if np.min(np.abs(w - x)) < 1e-8:
        return
    assert sturm_count(d, e, x)[0] == np.sum(w < x)
    lo, hi = gershgorin_bounds(d, e)
    assert lo <= w[0] + 1e-12 and w[-1] <= hi + 1e-12


def test_block_vectors_map_to_full_space():
    p = ModelParams("QR", 1.0, 4.0, 0.8)
    b = qr_parity_block(p, 20, 1)
    spec = b.solve()
    assert spec.dim == 42 and np.array_equal(spec.rows, b.indices)
    assert spec.residual(build_qr(p, 20)) < 1e-12


def test_parallel_slices_match_serial():
    p = ModelParams("QR", 1.0, 50.0, 3.0)
    b = qr_parity_block(p, 600, -1)
    serial = eig_tridiag(b).eigenvalues
    sliced = eig_tridiag(b, slices=4, workers=2).eigenvalues
    assert np.allclose(serial, sliced, rtol=1e-12, atol=1e-10)


def test_eigensystem_coverage_check():
    s = Spectrum(np.array([0.0]), np.ones((1, 1)), support=[0], dim=2)
    with pytest.raises(ValueError):
        Eigensystem([s])
    assert Eigensystem([s], partial=True).partial
    with pytest.raises(ValueError):
        Eigensystem([Spectrum(np.array([0.0, 1.0]))])  # no vectors


def test_spectrum_rejects_unsorted():
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 0.0]))


def test_unfold_uniform_ladder():
    s = unfold(np.arange(1000) * 0.37 + 5.0)
    assert np.allclose(s, 1.0, atol=1e-8)


@given(st.floats(0.1, 50), st.floats(-100, 100))
@settings(max_examples=20, deadline=None)
def test_unfold_affine_invariant(a, b):
    rng = np.random.default_rng(3)
    e = np.sort(rng.normal(size=400))
    assert np.allclose(unfold(e), unfold(a * e + b), atol=1e-6)


def test_unfold_mean_spacing_near_one():
    rng = np.random.default_rng(5)
    e = np.cumsum(rng.exponential(size=3000))
    details = unfold(e, return_details=True)
    assert abs(details.mean_spacing - 1.0) < 0.01
    assert details.n_levels_used == 3000 - 2 * 60


def test_unfold_needs_enough_levels():
    with pytest.raises(ValueError):
        unfold(np.arange(40.0))


def test_poisson_sample_statistics():
    rng = np.random.default_rng(11)
    s = rng.exponential(size=200_000)
    h = spacing_histogram(s)
    assert np.isclose(h.integral, 1.0, atol=1e-12)
    assert np.max(np.abs(h.densities - h.p_poisson)[:20]) < 0.05
    assert abs(small_spacing_fraction(s) - (1 - np.exp(-0.05))) < 3e-3


def test_reference_curves_normalized():
    s = np.linspace(0, 40, 400_001)
    assert np.isclose(np.trapezoid(poisson_pdf(s), s), 1.0, atol=1e-6)
    assert np.isclose(np.trapezoid(wigner_dyson_pdf(s), s), 1.0, atol=1e-6)
    assert np.isclose(np.trapezoid(s * wigner_dyson_pdf(s), s), 1.0, atol=1e-6)


@given(arrays(float, st.integers(1, 200), elements=st.floats(0, 6)))
@settings(max_examples=40, deadline=None)
def test_histogram_properties(s):
    h = spacing_histogram(s)
    assert h.densities.size == 40 and np.isclose(h.bin_edges[-1], 4.0)
    inside = np.sum(s <= 4.0)
    assert h.n_outside == s.size - inside
    if inside:
        assert np.isclose(h.integral, 1.0)
    assert 0.0 <= small_spacing_fraction(s) <= 1.0


def test_histogram_rejects_empty():
    with pytest.raises(ValueError):
        spacing_histogram([])
    with pytest.raises(ValueError):
        small_spacing_fraction([])
