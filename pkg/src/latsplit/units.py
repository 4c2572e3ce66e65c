"""Physical constants and recoil-unit conversions.

Everything downstream works in recoil units of the lattice light:

    energy        E_r = hbar^2 k_r^2 / (2 m)
    momentum      hbar k_r
    length        1 / k_r
    time          t_r = hbar / E_r
    velocity      v_r = hbar k_r / m
    acceleration  a_r = v_r / t_r

With these choices the single-particle Hamiltonian reads ``H = p^2 + V(x)``
and a velocity ``v`` corresponds to a coordinate speed ``dx/dt = 2 v / v_r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

HBAR = 1.054571817e-34  # J s
H_PLANCK = 2.0 * math.pi * HBAR
MASS_RB87 = 1.44316060e-25  # kg
G_EARTH = 9.81  # m / s^2
LAMBDA_LATTICE = 914e-9  # m

KINDS = ("length", "time", "velocity", "acceleration", "energy")


class UnitsError(ValueError):
    """Raised for non-physical frame parameters or unknown quantity kinds."""


@dataclass(frozen=True)
class RecoilFrame:
    """Immutable set of recoil scales for one lattice wavelength and atom mass."""

    wavelength: float
    atom_mass: float
    k_r: float = field(init=False)
    E_r: float = field(init=False)
    v_r: float = field(init=False)
    t_r: float = field(init=False)
    a_r: float = field(init=False)

    def __post_init__(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise UnitsError(f"wavelength must be positive, got {self.wavelength!r}")
        if not (self.atom_mass > 0 and math.isfinite(self.atom_mass)):
            raise UnitsError(f"atom_mass must be positive, got {self.atom_mass!r}")
        k_r = 2.0 * math.pi / self.wavelength
        E_r = HBAR**2 * k_r**2 / (2.0 * self.atom_mass)
        v_r = HBAR * k_r / self.atom_mass
        t_r = HBAR / E_r
        object.__setattr__(self, "k_r", k_r)
        object.__setattr__(self, "E_r", E_r)
        object.__setattr__(self, "v_r", v_r)
        object.__setattr__(self, "t_r", t_r)
        object.__setattr__(self, "a_r", v_r / t_r)

    def scale(self, kind: str) -> float:
        """SI value of one recoil unit of ``kind``."""
        if kind == "length":
            return 1.0 / self.k_r
        if kind == "time":
            return self.t_r
        if kind == "velocity":
            return self.v_r
        if kind == "acceleration":
            return self.a_r
        if kind == "energy":
            return self.E_r
        raise UnitsError(f"unknown quantity kind {kind!r}; expected one of {KINDS}")

    def to_recoil(self, value, kind: str):
        return value / self.scale(kind)

    def from_recoil(self, value, kind: str):
        return value * self.scale(kind)


def make_recoil_frame(wavelength: float = LAMBDA_LATTICE, atom_mass: float = MASS_RB87) -> RecoilFrame:
    return RecoilFrame(wavelength, atom_mass)


def to_recoil(value, kind: str, frame: RecoilFrame):
    """Convert an SI quantity of the given kind to recoil units."""
    return frame.to_recoil(value, kind)


def from_recoil(value, kind: str, frame: RecoilFrame):
    """Convert a recoil-unit quantity of the given kind back to SI."""
    return frame.from_recoil(value, kind)


DEFAULT_FRAME = make_recoil_frame()
