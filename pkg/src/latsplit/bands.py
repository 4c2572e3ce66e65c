"""Bloch band structure of a 1D optical lattice.

The lattice is ``V(x) = depth * sin^2(k_r x)`` (period lambda/2). In the
plane-wave basis ``exp(i (q + 2 l) k_r x)``, ``l = -L..L``, the Hamiltonian in
recoil units is tridiagonal:

    H[l, l]     = (q + 2 l)^2 + depth / 2
    H[l, l +/- 1] = -depth / 4

so each quasi-momentum is a symmetric tridiagonal eigenproblem.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

DEFAULT_TRUNCATION = 12
DEFAULT_NQ = 257
CONVERGENCE_TOL = 1e-8  # E_r


class BandError(ValueError):
    """Invalid band-structure request."""


class BandAccuracyError(ArithmeticError):
    """Plane-wave truncation too small for the requested bands."""


@dataclass(frozen=True)
class BandStructure:
    depth: float
    q_grid: np.ndarray
    energies: np.ndarray  # shape (n_q, n_bands)
    truncation: int

    @property
    def n_bands(self) -> int:
        return self.energies.shape[1]

    def band(self, n: int) -> np.ndarray:
        return self.energies[:, n]


def default_q_grid(n_q: int = DEFAULT_NQ) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n_q)


def _tridiagonal(depth: float, q: float, truncation: int):
    l = np.arange(-truncation, truncation + 1)
    diag = (q + 2.0 * l) ** 2 + 0.5 * depth
    off = np.full(2 * truncation, -0.25 * depth)
    return diag, off


def _eigvals(depth, q_grid, n_bands, truncation):
    out = np.empty((len(q_grid), n_bands))
    for i, q in enumerate(q_grid):
        d, e = _tridiagonal(depth, q, truncation)
        out[i] = eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, n_bands - 1))
    return out


def compute_bands(depth: float, n_bands: int = 4, q_grid=None, truncation: int = DEFAULT_TRUNCATION) -> BandStructure:
    """Diagonalize the lattice Hamiltonian on a grid of quasi-momenta.

    Parameters
    ----------
    depth : float
        Lattice depth in E_r, ``>= 0``.
    n_bands : int
        Number of lowest bands to keep.
    q_grid : array_like, optional
        Quasi-momenta in units of hbar k_r, inside [-1, 1].
    truncation : int
        Plane-wave cutoff L (basis size 2L+1), at least ``n_bands + 4``.

    Raises
    ------
    BandError
        For negative depth, bad q values or too small a truncation.
    BandAccuracyError
        When the L and L+4 results differ by more than 1e-8 E_r.
    """
    if not np.isfinite(depth) or depth < 0:
        raise BandError(f"depth must be >= 0, got {depth!r}")
    if n_bands < 1:
        raise BandError("n_bands must be >= 1")
    if truncation < n_bands + 4:
        raise BandError(f"truncation {truncation} too small for {n_bands} bands (need >= {n_bands + 4})")
    q = default_q_grid() if q_grid is None else np.asarray(q_grid, dtype=float).ravel()
    if q.size == 0 or np.any(np.abs(q) > 1.0 + 1e-12):
        raise BandError("q_grid must be non-empty and lie in [-1, 1]")

    energies = _eigvals(depth, q, n_bands, truncation)
    check = _eigvals(depth, q, n_bands, truncation + 4)
    err = np.max(np.abs(energies - check))
    if err > CONVERGENCE_TOL:
        raise BandAccuracyError(
            f"truncation L={truncation} not converged at depth {depth}: max change {err:.3g} E_r vs L+4"
        )
    return BandStructure(depth=float(depth), q_grid=q, energies=energies, truncation=truncation)


def gap_location(n: int) -> float:
    """Reduced-zone image of the extended-zone momentum n (1 for odd n, 0 for even)."""
    if n < 1:
        raise BandError(f"gap index must be >= 1, got {n}")
    return 1.0 if n % 2 else 0.0


def band_gap(bs: BandStructure, n: int) -> float:
    """Gap between bands n-1 and n at extended-zone quasi-momentum n hbar k_r."""
    if n < 1 or n >= bs.n_bands:
        raise BandError(f"gap index n={n} needs 1 <= n < n_bands={bs.n_bands}")
    loc = gap_location(n)
    hits = np.flatnonzero(np.isclose(np.abs(bs.q_grid), loc, rtol=0.0, atol=1e-12))
    if hits.size == 0:
        raise BandError(f"q_grid does not contain the gap location q = +/-{loc:g}")
    i = hits[0]
    return float(bs.energies[i, n] - bs.energies[i, n - 1])


def gap_at_depth(depth: float, n: int, truncation: int = DEFAULT_TRUNCATION) -> float:
    """Shortcut: gap Delta_n from a single-q diagonalization."""
    bs = compute_bands(depth, n_bands=n + 1, q_grid=[gap_location(n)], truncation=max(truncation, n + 5))
    return band_gap(bs, n)


def bloch_states(depth: float, q: float, n_bands: int, truncation: int = DEFAULT_TRUNCATION):
    """Eigenpairs at one quasi-momentum.

    Returns ``(energies, vectors, l)`` where ``vectors[:, n]`` holds the
    plane-wave coefficients of band n on momenta ``q + 2 l``.
    """
    d, e = _tridiagonal(depth, q, truncation)
    w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, n_bands - 1))
    return w, v, np.arange(-truncation, truncation + 1)


def write_bands_csv(bs: BandStructure, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q"] + [f"E_{n}" for n in range(bs.n_bands)])
        for q, row in zip(bs.q_grid, bs.energies):
            writer.writerow([repr(float(q))] + [repr(float(x)) for x in row])
