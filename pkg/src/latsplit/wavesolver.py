"""Split-step Fourier solver for the 1D Schroedinger equation.

Works entirely in recoil units: x in 1/k_r, t in hbar/E_r, momentum in
hbar k_r, so that

    i d(psi)/dt = [p^2 + V(x, t) + g1d |psi|^2] psi,
    V = depth(t) sin^2(x) + (w/2)^2 (x - c(t))^2 + a x

with ``w = omega * t_r`` the trap frequency and ``a`` the gravitational
acceleration in units of a_r. A step is half potential, full kinetic phase
in momentum space, half potential (Strang splitting), with the potential
sampled at the midpoint of the step.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .schedule import DepthSchedule
from .units import DEFAULT_FRAME, RecoilFrame

EDGE_TOL = 1e-8
MAX_POINTS = 1 << 22
CHECKPOINT_MAGIC = b"LSWF"
CHECKPOINT_VERSION = 1


class SolverError(RuntimeError):
    pass


class GridOverflowError(SolverError):
    """Density reached the grid boundary."""

    def __init__(self, time, ratio):
        self.time = time
        self.ratio = ratio
        super().__init__(f"boundary density {ratio:.3g} x peak at t = {time:.6g} t_r; enlarge the grid")


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n_points must be a power of two, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.dx)

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / (self.n * self.dx)

    @classmethod
    def lattice_commensurate(cls, x_min: float, x_max: float, n: int) -> "Grid":
        """Grid whose length is a whole number of lattice periods (pi)."""
        periods = max(1, int(round((x_max - x_min) / np.pi)))
        centre = 0.5 * (x_min + x_max)
        half = 0.5 * periods * np.pi
        return cls(centre - half, centre + half, n)


@dataclass
class Wavefunction:
    grid: Grid
    psi: np.ndarray
    time: float = 0.0
    p_offset: float = 0.0  # psi_true = exp(i p_offset x) psi

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dx)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def copy(self) -> "Wavefunction":
        return replace(self, psi=self.psi.copy())

    def normalized(self) -> "Wavefunction":
        return replace(self, psi=self.psi / np.sqrt(self.norm))

    def mean_x(self) -> float:
        rho = self.density()
        return float(np.sum(rho * self.grid.x) / np.sum(rho))

    def width(self) -> float:
        rho = self.density()
        m = np.sum(rho * self.grid.x) / np.sum(rho)
        return float(np.sqrt(np.sum(rho * (self.grid.x - m) ** 2) / np.sum(rho)))

    def mean_p(self) -> float:
        phi = np.abs(np.fft.fft(self.psi)) ** 2
        return float(np.sum(phi * (self.grid.k + self.p_offset)) / np.sum(phi))


@dataclass
class PotentialProgram:
    """Time-dependent lattice + trap + gravity potential in recoil units.

    ``schedule`` times are SI seconds and are converted with ``frame``; the
    trap is given by its SI angular frequency and initial centre (metres).
    """

    frame: RecoilFrame = DEFAULT_FRAME
    schedule: DepthSchedule = field(default_factory=DepthSchedule)
    trap_omega: Optional[float] = None
    trap_center: float = 0.0
    gravity: float = 0.0  # m/s^2, 0 disables
    g1d: float = 0.0

    def __post_init__(self):
        if self.g1d < 0:
            raise ValueError("g1d must be >= 0")
        t_r = self.frame.t_r
        self._trap_events = []
        self._lattice_off = self.schedule.lattice_off_time() / t_r
        for ev in self.schedule.events:
            if ev.kind == "trap_displace":
                self._trap_events.append((ev.time / t_r, "move", ev.payload * self.frame.k_r))
            elif ev.kind in ("trap_off", "release"):
                self._trap_events.append((ev.time / t_r, "off", None))

    @property
    def omega_r(self) -> float:
        return 0.0 if self.trap_omega is None else self.trap_omega * self.frame.t_r

    @property
    def accel_r(self) -> float:
        return self.gravity / self.frame.a_r

    def depth(self, t: float) -> float:
        if t >= self._lattice_off:
            return 0.0
        return float(self.schedule.depth(t * self.frame.t_r))

    def trap_state(self, t: float):
        """(on, centre) of the harmonic trap at recoil time t; right-continuous."""
        on = self.trap_omega is not None
        centre = self.trap_center * self.frame.k_r
        for te, kind, val in self._trap_events:
            if te > t:
                break
            if kind == "move":
                centre = val
            else:
                on = False
        return on, centre

    def static(self, x: np.ndarray, t: float) -> np.ndarray:
        on, centre = self.trap_state(t)
        v = self.accel_r * x if self.accel_r else np.zeros_like(x)
        if on:
            v = v + 0.25 * self.omega_r**2 * (x - centre) ** 2
        return v

    def potential(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.static(x, t) + self.depth(t) * np.sin(x) ** 2

    def lattice_active(self, t: float) -> bool:
        return self.depth(t) > 0.0

    def change_times(self, t0: float, t1: float) -> list:
        return [te for te, _, _ in self._trap_events if t0 <= te <= t1]


def gaussian(grid: Grid, x0: float = 0.0, sigma: float = 1.0, p0: float = 0.0, time: float = 0.0) -> Wavefunction:
    """Normalized Gaussian with density width ``sigma / sqrt(2)`` (sigma is the amplitude width)."""
    x = grid.x
    psi = (np.pi * sigma**2) ** -0.25 * np.exp(-((x - x0) ** 2) / (2 * sigma**2) + 1j * p0 * x)
    return Wavefunction(grid, psi.astype(complex), time)


def energy(wf: Wavefunction, program: Optional[PotentialProgram] = None, t: Optional[float] = None) -> float:
    """Expectation of p^2 + V (+ g1d/2 |psi|^4) per unit norm."""
    g = wf.grid
    phi = np.fft.fft(wf.psi)
    kin = np.sum(np.abs(phi) ** 2 * (g.k + wf.p_offset) ** 2) / np.sum(np.abs(phi) ** 2)
    if program is None:
        return float(kin)
    rho = wf.density()
    norm = np.sum(rho) * g.dx
    t = wf.time if t is None else t
    pot = np.sum(rho * program.potential(g.x, t)) * g.dx / norm
    inter = 0.5 * program.g1d * np.sum(rho**2) * g.dx / norm
    return float(kin + pot + inter)


def ground_state(program: PotentialProgram, grid: Grid, tol: float = 1e-12, dtau: float = 0.05,
                 max_steps: int = 200_000) -> Wavefunction:
    """Trap ground state at t = 0.

    For ``g1d == 0`` this is the analytic oscillator Gaussian. Otherwise the
    Gaussian seeds an imaginary-time split-step relaxation that stops when the
    energy changes by less than ``tol`` per step.
    """
    # the trap as prepared, before any t = 0 switching event
    on, centre = program.trap_omega is not None, program.trap_center * program.frame.k_r
    if not on or program.omega_r <= 0:
        raise ValueError("ground state needs a confining trap at t = 0")
    sigma = np.sqrt(2.0 / program.omega_r)
    wf = gaussian(grid, centre, sigma)
    if program.g1d == 0:
        return wf
    x, k = grid.x, grid.k
    v_ext = program.accel_r * x + 0.25 * program.omega_r**2 * (x - centre) ** 2
    kin = np.exp(-(k**2) * dtau)
    psi = wf.psi
    e_old = _gp_energy(psi, grid, v_ext, program.g1d)
    for _ in range(max_steps):
        half = np.exp(-0.5 * dtau * (v_ext + program.g1d * np.abs(psi) ** 2))
        psi = half * psi
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = np.exp(-0.5 * dtau * (v_ext + program.g1d * np.abs(psi) ** 2)) * psi
        psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
        e_new = _gp_energy(psi, grid, v_ext, program.g1d)
        if abs(e_new - e_old) < tol:
            break
        e_old = e_new
    return Wavefunction(grid, psi, 0.0)


def _gp_energy(psi, grid, v_ext, g1d):
    phi = np.fft.fft(psi)
    rho = np.abs(psi) ** 2
    norm = np.sum(rho) * grid.dx
    kin = np.sum(np.abs(phi) ** 2 * grid.k**2) / np.sum(np.abs(phi) ** 2)
    return float(kin + (np.sum(rho * v_ext) + 0.5 * g1d * np.sum(rho**2)) * grid.dx / norm)


def _edge_ratio(psi: np.ndarray) -> float:
    rho = np.abs(psi) ** 2
    m = max(4, len(rho) // 64)
    peak = rho.max()
    if peak == 0:
        return 0.0
    return float(max(rho[:m].max(), rho[-m:].max()) / peak)


def evolve(wf: Wavefunction, program: PotentialProgram, dt: float, t_end: float,
           callback: Optional[Callable[[Wavefunction], None]] = None, stride: int = 0,
           check_every: int = 200) -> Wavefunction:
    """Propagate ``wf`` from ``wf.time`` to ``t_end`` with steps of about ``dt`` (recoil units).

    The step is shrunk slightly so that an integer number of steps lands on
    ``t_end``. ``callback`` is invoked every ``stride`` steps (and at the end)
    with a snapshot of the state.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if dt >= 0.1:
        raise ValueError(f"dt = {dt} t_r violates dt < 0.1 t_r")
    span = t_end - wf.time
    if span < 0:
        raise ValueError("t_end precedes the wavefunction time")
    grid = wf.grid
    out = wf.copy()
    if span == 0:
        return out
    n_steps = int(np.ceil(span / dt - 1e-9))
    h = span / n_steps
    x = grid.x
    kin = np.exp(-1j * (grid.k + wf.p_offset) ** 2 * h)
    sin2 = np.sin(x) ** 2
    psi = out.psi
    t0 = wf.time

    static_key = None
    static = None
    cache_key = None
    half = None
    for step in range(n_steps):
        tm = t0 + (step + 0.5) * h
        trap_key = program.trap_state(tm)
        if trap_key != static_key:
            static = program.static(x, tm)
            static_key = trap_key
            cache_key = None
        depth = program.depth(tm)
        if program.g1d:
            v = static + depth * sin2
            psi *= np.exp(-0.5j * h * (v + program.g1d * np.abs(psi) ** 2))
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            psi *= np.exp(-0.5j * h * (v + program.g1d * np.abs(psi) ** 2))
        else:
            key = (depth, static_key)
            if key != cache_key:
                half = np.exp(-0.5j * h * (static + depth * sin2))
                cache_key = key
            psi *= half
            psi = np.fft.ifft(kin * np.fft.fft(psi))
            psi *= half
        if check_every and (step + 1) % check_every == 0:
            ratio = _edge_ratio(psi)
            if ratio > EDGE_TOL:
                raise GridOverflowError(t0 + (step + 1) * h, ratio)
        if callback is not None and stride and (step + 1) % stride == 0 and step + 1 < n_steps:
            callback(Wavefunction(grid, psi.copy(), t0 + (step + 1) * h, wf.p_offset))
    ratio = _edge_ratio(psi)
    if check_every and ratio > EDGE_TOL:
        raise GridOverflowError(t_end, ratio)
    out = Wavefunction(grid, psi, t_end, wf.p_offset)
    if callback is not None and stride:
        callback(out.copy())
    return out


def _next_pow2(n: int) -> int:
    return 1 << int(np.ceil(np.log2(max(n, 2))))


def free_expand(wf: Wavefunction, t_tof: float, accel: float = 0.0, support_tol: float = 1e-12) -> Wavefunction:
    """Exact propagation for ``t_tof`` (t_r) with all potentials off except gravity ``accel`` (a_r).

    Under H = p^2 + a x the state is exp(-i a t x) times the momentum-space
    phase exp(-i(p^2 t - a p t^2 + a^2 t^3 / 3)). The grid is enlarged by
    zero-padding so that every momentum component with weight above
    ``support_tol`` of the peak stays inside; the gravitational momentum kick
    is carried in ``p_offset`` instead of on the grid.
    """
    if t_tof < 0:
        raise ValueError("t_tof must be >= 0")
    if t_tof == 0:
        return wf.copy()
    g = wf.grid
    phi = np.fft.fft(wf.psi)
    w = np.abs(phi) ** 2
    p = g.k + wf.p_offset
    sig = w > support_tol * w.max()
    shift_lo = 2.0 * p[sig].min() * t_tof - accel * t_tof**2
    shift_hi = 2.0 * p[sig].max() * t_tof - accel * t_tof**2
    rho = wf.density()
    occ = np.flatnonzero(rho > support_tol * rho.max())
    lo = g.x[occ[0]] + min(0.0, shift_lo)
    hi = g.x[occ[-1]] + max(0.0, shift_hi)
    spread = 2.0 * np.sqrt(t_tof)  # diffraction allowance
    lo -= 8 * spread + 0.05 * (hi - lo)
    hi += 8 * spread + 0.05 * (hi - lo)
    lo = min(lo, g.x_min)
    hi = max(hi, g.x_max)
    i_lo = int(np.floor((lo - g.x_min) / g.dx))
    i_hi = int(np.ceil((hi - g.x_min) / g.dx))
    n_new = _next_pow2(i_hi - i_lo)
    if n_new > MAX_POINTS:
        raise GridOverflowError(wf.time + t_tof, float("inf"))
    if n_new != g.n:
        i_lo = min(i_lo, 0)
        x_min = g.x_min + i_lo * g.dx
        grid = Grid(x_min, x_min + n_new * g.dx, n_new)
        psi = np.zeros(n_new, dtype=complex)
        psi[-i_lo:-i_lo + g.n] = wf.psi
    else:
        grid, psi = g, wf.psi
    k = grid.k + wf.p_offset
    phase = k**2 * t_tof - accel * k * t_tof**2 + accel**2 * t_tof**3 / 3.0
    psi = np.fft.ifft(np.exp(-1j * phase) * np.fft.fft(psi))
    # exp(-i a t x) is absorbed into p_offset
    p_off = wf.p_offset - accel * t_tof
    out = Wavefunction(grid, psi, wf.time + t_tof, p_off)
    if _edge_ratio(psi) > EDGE_TOL:
        raise GridOverflowError(out.time, _edge_ratio(psi))
    return out


# ------------------------------------------------------------------ I/O


def write_checkpoint(wf: Wavefunction, path) -> None:
    """Little-endian binary: magic, u32 version, u64 n, f64 x_min, x_max, time, p_offset, then re/im pairs."""
    header = CHECKPOINT_MAGIC + struct.pack("<IQdddd", CHECKPOINT_VERSION, wf.grid.n, wf.grid.x_min,
                                            wf.grid.x_max, wf.time, wf.p_offset)
    data = np.empty(2 * wf.grid.n, dtype="<f8")
    data[0::2] = wf.psi.real
    data[1::2] = wf.psi.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_checkpoint(path) -> Wavefunction:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a wavefunction checkpoint")
    version, n, x_min, x_max, time, p_off = struct.unpack_from("<IQdddd", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IQdddd")
    data = np.frombuffer(raw, dtype="<f8", count=2 * n, offset=off)
    return Wavefunction(Grid(x_min, x_max, n), data[0::2] + 1j * data[1::2], time, p_off)


class DensityRecorder:
    """Collects (t, x, |psi|^2) and (t, p, |psi(p)|^2) rows in SI / hbar k_r units."""

    def __init__(self, frame: RecoilFrame = DEFAULT_FRAME, decimate: int = 1):
        self.frame = frame
        self.decimate = max(1, int(decimate))
        self.snapshots = []

    def __call__(self, wf: Wavefunction) -> None:
        self.snapshots.append(wf.copy())

    def write_density(self, path) -> None:
        f = self.frame
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "density"])
            for wf in self.snapshots:
                t = wf.time * f.t_r
                x = wf.grid.x[:: self.decimate] / f.k_r
                rho = wf.density()[:: self.decimate] * f.k_r
                for xi, ri in zip(x, rho):
                    w.writerow([repr(t), repr(float(xi)), repr(float(ri))])

    def write_momentum(self, path) -> None:
        from .analysis import momentum_distribution

        f = self.frame
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "p", "density"])
            for wf in self.snapshots:
                p, rho = momentum_distribution(wf)
                for pi, ri in zip(p[:: self.decimate], rho[:: self.decimate]):
                    w.writerow([repr(wf.time * f.t_r), repr(float(pi)), repr(float(ri))])
