"""Observables extracted from wavefunctions and densities."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .wavesolver import Wavefunction

DEFAULT_THRESHOLD = 0.05
MIN_SEP_POSITION = 5e-6  # m
MIN_SEP_MOMENTUM = 0.2  # hbar k_r


class AnalysisError(ValueError):
    pass


@dataclass
class Packet:
    centroid: float
    width: float
    population: float
    label: str = ""


@dataclass
class PacketSet:
    packets: list = field(default_factory=list)
    axis: str = "position"

    @property
    def total(self) -> float:
        return float(sum(p.population for p in self.packets))

    @property
    def populations(self) -> np.ndarray:
        return np.array([p.population for p in self.packets])

    @property
    def centroids(self) -> np.ndarray:
        return np.array([p.centroid for p in self.packets])

    def __len__(self):
        return len(self.packets)


def momentum_distribution(wf: Wavefunction):
    """Return ``(p, density)`` with p in hbar k_r, sorted, and sum(density) * dp == norm."""
    g = wf.grid
    phi = np.fft.fftshift(np.fft.fft(wf.psi))
    p = np.fft.fftshift(g.k) + wf.p_offset
    dens = np.abs(phi) ** 2 * g.dx / (g.n * g.dk)
    return p, dens


def _plane_wave_amplitudes(wf: Wavefunction) -> np.ndarray:
    """Coefficients a_k of psi = sum_k a_k exp(i k x) / sqrt(L), with sum |a_k|^2 = norm."""
    g = wf.grid
    return np.fft.fft(wf.psi) * np.exp(-1j * g.k * g.x_min) * np.sqrt(g.dx / g.n)


def band_populations(wf: Wavefunction, depth: float, n_bands: int) -> np.ndarray:
    """Project ``wf`` onto the Bloch bands of a lattice of the given depth.

    Grid momenta are grouped into quasi-momentum classes ``q + 2 l``; within
    each class the lattice Hamiltonian is diagonalized on exactly the momenta
    the grid carries, so the populations of all bands add up to the norm.
    The grid length must be a whole number of lattice periods.
    """
    if depth < 0:
        raise AnalysisError("depth must be >= 0")
    if wf.p_offset != 0.0:
        raise AnalysisError("band projection needs a wavefunction without momentum offset")
    g = wf.grid
    ratio = 2.0 / g.dk
    m = int(round(ratio))
    if abs(ratio - m) > 1e-6 or m < 1:
        raise AnalysisError("grid length is not a whole number of lattice periods")
    basis = g.n // m  # smallest class size
    if n_bands > basis:
        raise AnalysisError(f"n_bands={n_bands} exceeds the {basis} bands the grid supports")
    a = _plane_wave_amplitudes(wf)
    j = np.fft.fftfreq(g.n, 1.0 / g.n).astype(int)  # integer momentum index, k = j dk
    order = np.argsort(j, kind="stable")
    j_sorted = j[order]
    pops = np.zeros(n_bands)
    for r in range(m):
        idx = order[(j_sorted % m) == r]  # ascending momenta, spacing 2
        k = g.k[idx]
        amp = a[idx]
        if not np.any(np.abs(amp) > 0):
            continue
        diag = k**2 + 0.5 * depth
        if depth > 0:
            off = np.full(len(k) - 1, -0.25 * depth)
            _, vec = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_bands - 1))
            pops += np.abs(vec.T @ amp) ** 2
        else:
            srt = np.argsort(diag, kind="stable")[:n_bands]
            pops += np.abs(amp[srt]) ** 2
    return pops


def _basins(cores, dens):
    """Split the axis at the density minimum between neighbouring cores."""
    bounds = [0]
    for (a0, a1), (b0, b1) in zip(cores[:-1], cores[1:]):
        gap = dens[a1:b0]
        bounds.append(a1 + int(np.argmin(gap)) if gap.size else b0)
    bounds.append(len(dens))
    return [(bounds[i], bounds[i + 1]) for i in range(len(cores))]


def detect_packets(density, coords, threshold_frac: float = DEFAULT_THRESHOLD, min_separation: float = 0.0,
                   axis: str = "position") -> PacketSet:
    """Find packets as contiguous regions above ``threshold_frac * max(density)``.

    Regions closer than ``min_separation`` are merged. Each packet then owns
    the basin reaching to the density minimum between it and its
    neighbours, so populations add up to one.
    """
    dens = np.asarray(density, dtype=float)
    x = np.asarray(coords, dtype=float)
    if dens.shape != x.shape:
        raise AnalysisError("density and coordinates differ in shape")
    if not 0 < threshold_frac < 1:
        raise AnalysisError("threshold_frac must lie in (0, 1)")
    if np.any(dens < 0):
        raise AnalysisError("density must be non-negative")
    total = dens.sum()
    if total <= 0:
        return PacketSet([], axis)
    above = dens > threshold_frac * dens.max()
    edges = np.diff(above.astype(int))
    starts = list(np.flatnonzero(edges == 1) + 1)
    stops = list(np.flatnonzero(edges == -1) + 1)
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        stops.append(len(dens))
    cores = []
    for s, e in zip(starts, stops):
        if cores and x[s] - x[cores[-1][1] - 1] < min_separation:
            cores[-1] = (cores[-1][0], e)
        else:
            cores.append((s, e))
    packets = []
    for i, (lo, hi) in enumerate(_basins(cores, dens)):
        w = dens[lo:hi]
        pop = w.sum() / total
        c = float(np.sum(w * x[lo:hi]) / w.sum())
        width = float(np.sqrt(np.sum(w * (x[lo:hi] - c) ** 2) / w.sum()))
        packets.append(Packet(c, width, float(pop), f"P{i}"))
    return PacketSet(packets, axis)


def uniformity(ps: PacketSet) -> float:
    """Population standard deviation divided by the mean population."""
    if len(ps) == 0:
        raise AnalysisError("uniformity of an empty packet set")
    pops = ps.populations
    return float(np.std(pops) / np.mean(pops))


def write_packets_csv(ps: PacketSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["packet_id", "axis", "centroid", "width", "population"])
        for i, p in enumerate(ps.packets):
            w.writerow([i, ps.axis, repr(p.centroid), repr(p.width), repr(p.population)])


def summary_text(ps: PacketSet, band_pops=None) -> str:
    lines = [f"packet_count = {len(ps)}", f"axis = {ps.axis}"]
    if len(ps):
        lines.append(f"uniformity = {uniformity(ps):.6g}")
        lines.append("populations = " + " ".join(f"{p:.6g}" for p in ps.populations))
        lines.append("centroids = " + " ".join(f"{c:.6g}" for c in ps.centroids))
    if band_pops is not None:
        lines.append("band_populations = " + " ".join(f"{p:.6g}" for p in band_pops))
    return "\n".join(lines) + "\n"
