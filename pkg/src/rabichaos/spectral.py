"""
Eigensolvers and nearest-neighbour level statistics.

Eigenvalue-only solves of symmetric tridiagonal sectors use LAPACK's
root-free QR (``sterf``) for the full spectrum.  Partial spectra are computed
by bisection (``stebz``) on index slices, which are independent and can run
on a thread pool.  :func:`sturm_count` gives an independent eigenvalue count
below any shift.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .hilbert import is_hermitian


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues (ascending) and optional orthonormal eigenvectors.

    When ``support`` is given, the rows of ``eigenvectors`` are the full-space
    basis indices listed there (a symmetry sector); otherwise they span the
    whole space of dimension ``dim``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    support: np.ndarray | None = None
    dim: int | None = None
    source: str = ""
    label: object = None

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=float)
        if w.ndim != 1:
            raise ValueError("eigenvalues must be one-dimensional")
        if w.size > 1 and np.any(np.diff(w) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        object.__setattr__(self, "eigenvalues", w)
        rows = w.size if self.eigenvectors is None else np.shape(self.eigenvectors)[0]
        if self.support is not None:
            object.__setattr__(self, "support", np.asarray(self.support, dtype=np.int64))
            rows = self.support.size
        if self.dim is None:
            object.__setattr__(self, "dim", int(rows))
        if self.eigenvectors is not None and np.shape(self.eigenvectors)[1] != w.size:
            raise ValueError("one eigenvector column per eigenvalue is required")

    def __len__(self) -> int:
        return self.eigenvalues.size

    @property
    def has_vectors(self) -> bool:
        return self.eigenvectors is not None

    @property
    def rows(self) -> np.ndarray:
        """Full-space indices of the eigenvector rows."""
        if self.support is not None:
            return self.support
        return np.arange(self.dim)

    def residual(self, matrix) -> float:
        """max_k ||H v_k - E_k v_k|| / ||H||_2-estimate, on the sector rows."""
        if self.eigenvectors is None:
            raise ValueError("spectrum has no eigenvectors")
        h = matrix[self.rows][:, self.rows] if self.support is not None else matrix
        v = self.eigenvectors
        r = (h @ v) - v * self.eigenvalues
        scale = max(np.max(np.abs(self.eigenvalues)), 1e-300)
        return float(np.max(np.linalg.norm(r, axis=0)) / scale)


class Eigensystem:
    """A list of spectra whose supports partition the full space.

    A single full-space spectrum is the one-block case.  Dynamics and
    ensemble averages work block by block so that symmetry sectors never
    need a full-space dense eigenvector matrix.
    """

    def __init__(self, blocks: Sequence[Spectrum], dim: int | None = None, partial: bool = False):
        blocks = list(blocks)
        if not blocks:
            raise ValueError("an eigensystem needs at least one block")
        if any(not b.has_vectors for b in blocks):
            raise ValueError("every block must carry eigenvectors")
        self.blocks = blocks
        self.dim = int(dim if dim is not None else blocks[0].dim)
        self.partial = partial
        covered = sum(b.rows.size for b in blocks)
        if covered > self.dim or (covered < self.dim and not partial):
            raise ValueError(f"blocks cover {covered} basis states, space has {self.dim}")

    @classmethod
    def wrap(cls, spectrum) -> "Eigensystem":
        if isinstance(spectrum, Eigensystem):
            return spectrum
        if isinstance(spectrum, Spectrum):
            return cls([spectrum], spectrum.dim)
        return cls(list(spectrum))

    @property
    def energies(self) -> np.ndarray:
        return np.concatenate([b.eigenvalues for b in self.blocks])

    def sorted_energies(self) -> np.ndarray:
        return np.sort(self.energies)

    def coefficients(self, psi: np.ndarray) -> list[np.ndarray]:
        """c_k = <E_k|psi> per block."""
        psi = np.asarray(psi)
        return [b.eigenvectors.conj().T @ psi[b.rows] for b in self.blocks]

    def diagonal_elements(self, observable, which: Sequence[np.ndarray] | None = None) -> list[np.ndarray]:
        """O_kk = <E_k|O|E_k> per block, optionally only for selected columns.

        ``observable`` is a full-space matrix or a 1-D array holding the
        diagonal of a basis-diagonal operator.
        """
        out = []
        for i, b in enumerate(self.blocks):
            v = b.eigenvectors if which is None else b.eigenvectors[:, which[i]]
            rows = b.rows
            if isinstance(observable, np.ndarray) and observable.ndim == 1:
                out.append(np.real(np.einsum("ik,i,ik->k", v.conj(), observable[rows], v)))
            else:
                o = observable[rows][:, rows]
                out.append(np.real(np.sum(v.conj() * (o @ v), axis=0)))
        return out


def eig_dense(matrix, want_vectors: bool = True, atol: float = 1e-12, source: str = "") -> Spectrum:
    """Full Hermitian diagonalization (LAPACK ``syevd``/``heevd``)."""
    dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1] or dense.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {dense.shape}")
    if not is_hermitian(dense, atol):
        raise ValueError("matrix is not Hermitian")
    if np.iscomplexobj(dense) and not np.any(dense.imag):
        dense = dense.real
    if want_vectors:
        w, v = np.linalg.eigh(dense)
        return Spectrum(w, v, dim=dense.shape[0], source=source or "dense")
    return Spectrum(np.linalg.eigvalsh(dense), dim=dense.shape[0], source=source or "dense")


def _tridiag_arrays(t):
    if isinstance(t, tuple):
        d, e = t
    else:
        d, e = t.diag, t.offdiag
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    if d.size < 1 or e.size != d.size - 1:
        raise ValueError(f"inconsistent tridiagonal sizes {d.size}, {e.size}")
    return d, e


def sturm_count(diag, offdiag, x) -> np.ndarray:
    """Number of eigenvalues strictly below each shift in ``x``.

    Counts negative pivots of the LDL^T factorization of T - x I.  The loop
    runs over matrix rows and is vectorized across shifts.
    """
    d = np.asarray(diag, dtype=float)
    e2 = np.asarray(offdiag, dtype=float) ** 2
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tiny = np.finfo(float).tiny ** 0.5 * max(1.0, np.max(np.abs(d), initial=0.0))
    count = np.zeros(x.shape, dtype=np.int64)
    q = np.ones_like(x)
    for i in range(d.size):
        q = d[i] - x - (e2[i - 1] / q if i else 0.0)
        q = np.where(q == 0.0, -tiny, q)  # a zero pivot counts as negative
        count += q < 0
    return count


def gershgorin_bounds(diag, offdiag) -> tuple[float, float]:
    d, e = np.asarray(diag, float), np.abs(np.asarray(offdiag, float))
    r = np.zeros_like(d)
    r[:-1] += e
    r[1:] += e
    return float(np.min(d - r)), float(np.max(d + r))


def eig_tridiag(t, want_vectors: bool = False, select: tuple[int, int] | None = None,
                slices: int = 1, workers: int | None = None, source: str = "") -> Spectrum:
    """Eigen-decomposition of a symmetric tridiagonal matrix.

    Parameters
    ----------
    t : SymmetricTridiagonal or (diag, offdiag)
    want_vectors : bool
        Return eigenvectors (LAPACK ``stemr``).
    select : (lo, hi), optional
        Inclusive index range of eigenvalues to compute (bisection).
    slices : int
        Split the requested index range into this many bisection slices.
        ``slices == 1`` with no ``select`` uses ``sterf`` for all eigenvalues.
    workers : int, optional
        Thread-pool size for slices.
    """
    d, e = _tridiag_arrays(t)
    m = d.size
    label = getattr(t, "sector_label", None)
    if m == 1:
        vec = np.ones((1, 1)) if want_vectors else None
        return Spectrum(d.copy(), vec, source=source or "tridiagonal", label=label)
    if want_vectors:
        kw = {} if select is None else {"select": "i", "select_range": select}
        w, v = sla.eigh_tridiagonal(d, e, lapack_driver="stemr", **kw)
        return Spectrum(w, v, source=source or "tridiagonal", label=label)
    if select is None and slices <= 1:
        w = sla.eigvalsh_tridiagonal(d, e, lapack_driver="sterf")
        return Spectrum(np.sort(w), dim=m, source=source or "tridiagonal", label=label)

    lo, hi = (0, m - 1) if select is None else (int(select[0]), int(select[1]))
    if not 0 <= lo <= hi < m:
        raise ValueError(f"select range {(lo, hi)} outside 0..{m - 1}")
    bounds = np.linspace(lo, hi + 1, max(1, slices) + 1).round().astype(int)
    ranges = [(int(a), int(b) - 1) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def solve(r):
        return sla.eigvalsh_tridiagonal(d, e, select="i", select_range=r, lapack_driver="stebz")

    if len(ranges) > 1 and (workers or 1) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(solve, ranges))
    else:
        parts = [solve(r) for r in ranges]
    w = np.sort(np.concatenate(parts))
    return Spectrum(w, dim=m, source=source or "tridiagonal-bisection", label=label)


# level statistics -----------------------------------------------------------

def poisson_pdf(s):
    return np.exp(-np.asarray(s, dtype=float))


def wigner_dyson_pdf(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s**2)


@dataclass(frozen=True)
class Unfolding:
    spacings: np.ndarray
    poly_degree: int
    edge_trim_fraction: float
    n_levels_used: int

    @property
    def mean_spacing(self) -> float:
        return float(np.mean(self.spacings))


def unfold(eigenvalues, poly_degree: int = 7, edge_trim_fraction: float = 0.02,
           return_details: bool = False):
    """Unfolded nearest-neighbour spacings.

    A degree-``poly_degree`` polynomial is least-squares fitted to the
    cumulative level count N(E) of the trimmed spectrum; the spacings are
    consecutive differences of the fitted staircase, which have unit mean
    when the fit follows the smooth density.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    k = int(np.floor(edge_trim_fraction * e.size))
    e = e[k:e.size - k]
    if e.size < 50:
        raise ValueError(f"unfolding needs at least 50 levels after trimming, got {e.size}")
    staircase = np.arange(1, e.size + 1, dtype=float)
    # Polynomial.fit maps the energy window onto [-1, 1], which keeps the
    # fit well conditioned and makes it invariant under E -> aE + b.
    fit = np.polynomial.Polynomial.fit(e, staircase, poly_degree)
    s = np.diff(fit(e))
    if return_details:
        return Unfolding(s, poly_degree, edge_trim_fraction, e.size)
    return s


@dataclass(frozen=True)
class SpacingHistogram:
    bin_edges: np.ndarray
    densities: np.ndarray
    n_spacings: int
    n_outside: int
    p_poisson: np.ndarray
    p_wigner_dyson: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def integral(self) -> float:
        return float(np.sum(self.densities * np.diff(self.bin_edges)))


def spacing_histogram(spacings, bin_width: float = 0.1, s_max: float = 4.0) -> SpacingHistogram:
    """Density-normalized histogram on [0, s_max] with both reference curves.

    Spacings beyond ``s_max`` are counted in ``n_outside`` and excluded from
    the normalization, so the histogram integrates to one.
    """
    s = np.asarray(spacings, dtype=float)
    if s.size == 0:
        raise ValueError("no spacings")
    n_bins = int(round(s_max / bin_width))
    edges = np.linspace(0.0, n_bins * bin_width, n_bins + 1)
    counts, _ = np.histogram(s, bins=edges)
    inside = int(counts.sum())
    dens = counts / (inside * bin_width) if inside else np.zeros(n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return SpacingHistogram(edges, dens, int(s.size), int(s.size - inside),
                            poisson_pdf(centers), wigner_dyson_pdf(centers))


def small_spacing_fraction(spacings, s_min: float = 0.05) -> float:
    s = np.asarray(spacings, dtype=float)
    if s.size == 0:
        raise ValueError("no spacings")
    return float(np.mean(s < s_min))
