"""Declarative experiment descriptions.

Scenario files are line-oriented ``key = value`` documents. Grammar::

    document   := { line NEWLINE }
    line       := blank | "#" text | key "=" value
    key        := ident { "." ident }
    value      := quantity | word | segment | event
    quantity   := number [ unit ]
    segment    := shape "," quantity "," quantity "," quantity "," quantity
    event      := kind "," quantity [ "," quantity ]

``segment`` and ``event`` may repeat; every other key appears at most once.
Dimensional keys need an explicit unit, e.g. ``9 mm/s``, ``2.4 Er``,
``0.01 t_r``. Recognized keys are listed in ``KEYS``; ``meta.*`` keys hold
free-form strings.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import lz
from .schedule import EVENT_KINDS, SHAPES, DepthSchedule, Event, ScheduleError, Segment, validate_schedule
from .units import G_EARTH, LAMBDA_LATTICE, MASS_RB87, RecoilFrame

SUPPRESSION_DEPTH = 2.4  # E_r
RAMP_TIME = 200e-6  # s
PLATEAU_FRACTION = 0.5  # of tau_B
TURN_ON_MARGIN = 0.1  # of tau_B
KICK_VELOCITY = 9e-3  # m/s, upward
SPLIT_TRAP_FREQUENCY = 38.4  # Hz
BRAGG_TRAP_FREQUENCY = 51.2  # Hz
BRAGG_AMPLITUDE = 89.6e-6  # m
TOF = 12e-3  # s
AMU = 1.66053906660e-27

_UNITS = {
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "velocity": {"m/s": 1.0, "mm/s": 1e-3, "um/s": 1e-6},
    "acceleration": {"m/s2": 1.0, "m/s^2": 1.0},
    "frequency": {"Hz": 1.0, "kHz": 1e3},
    "mass": {"kg": 1.0, "u": AMU, "amu": AMU},
    "depth": {"Er": 1.0, "E_r": 1.0},
}
_RECOIL_UNITS = {"length": "1/k_r", "time": "t_r", "velocity": "v_r", "acceleration": "a_r"}

KEYS = {
    "name": "word",
    "frame.wavelength": "length",
    "frame.mass": "mass",
    "gravity": "switch",
    "gravity.g": "acceleration",
    "trap.frequency": "frequency?",
    "trap.center": "length",
    "initial.velocity": "velocity",
    "grid.x_min": "length",
    "grid.x_max": "length",
    "grid.points": "int",
    "solver.dt": "time",
    "solver.t_end": "time",
    "solver.g1d": "number",
    "output.tof": "time",
    "output.density_stride": "int",
}
REPEATED = ("segment", "event")


class ScenarioError(ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("\n".join(self.issues))


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    wavelength: float = LAMBDA_LATTICE
    mass: float = MASS_RB87
    gravity: bool = False
    g: float = G_EARTH
    trap_frequency: Optional[float] = None  # Hz
    trap_center: float = 0.0  # m
    initial_velocity: float = 0.0  # m/s, positive is up
    schedule: DepthSchedule = field(default_factory=DepthSchedule)
    x_min: float = -300e-6
    x_max: float = 300e-6
    n_points: int = 1 << 15
    dt: float = 0.01  # t_r
    t_end: float = 0.0  # s
    g1d: float = 0.0
    tof: float = 0.0  # s
    density_stride: int = 0
    meta: tuple = ()

    @property
    def frame(self) -> RecoilFrame:
        return RecoilFrame(self.wavelength, self.mass)

    def meta_get(self, key, default=None):
        return dict(self.meta).get(key, default)

    @property
    def kind(self) -> str:
        return self.meta_get("kind", "custom")

    @property
    def trap_omega(self) -> Optional[float]:
        return None if self.trap_frequency is None else 2.0 * math.pi * self.trap_frequency

    def with_meta(self, **kv) -> "Scenario":
        d = dict(self.meta)
        d.update({k: str(v) for k, v in kv.items()})
        return replace(self, meta=tuple(sorted(d.items())))


# ------------------------------------------------------------------ parsing

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANT = re.compile(rf"^\s*({_NUM})\s*(\S*)\s*$")


def _quantity(text: str, kind: str, frame: Optional[RecoilFrame]):
    m = _QUANT.match(text)
    if not m:
        raise ValueError(f"cannot read quantity {text.strip()!r}")
    value, unit = float(m.group(1)), m.group(2)
    if kind == "number":
        if unit:
            raise ValueError(f"unexpected unit {unit!r}")
        return value
    if not unit:
        raise ValueError(f"missing unit for {kind} value {text.strip()!r}")
    table = _UNITS[kind]
    if unit in table:
        return value * table[unit]
    if _RECOIL_UNITS.get(kind) == unit and frame is not None:
        return value * frame.scale(kind)
    raise ValueError(f"unknown {kind} unit {unit!r}")


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document; raises ScenarioError listing every issue."""
    issues = []
    single = {}
    repeated = {k: [] for k in REPEATED}
    meta = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            issues.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in REPEATED:
            repeated[key].append((lineno, value))
        elif key.startswith("meta.") and len(key) > 5:
            meta[key[5:]] = value
        elif key in KEYS:
            if key in single:
                issues.append(f"line {lineno}: duplicate key {key!r} (first on line {single[key][0]})")
            single[key] = (lineno, value)
        else:
            issues.append(f"line {lineno}: unknown key {key!r}")

    kw = {}
    frame = None
    for key in ("frame.wavelength", "frame.mass"):
        if key in single:
            lineno, value = single[key]
            try:
                kw[key] = _quantity(value, KEYS[key], None)
            except ValueError as exc:
                issues.append(f"line {lineno}: {key}: {exc}")
    try:
        frame = RecoilFrame(kw.get("frame.wavelength", LAMBDA_LATTICE), kw.get("frame.mass", MASS_RB87))
    except ValueError as exc:
        issues.append(f"frame: {exc}")

    for key, (lineno, value) in single.items():
        if key in kw:
            continue
        kind = KEYS[key]
        try:
            if kind == "word":
                kw[key] = value
            elif kind == "switch":
                if value not in ("on", "off"):
                    raise ValueError("expected 'on' or 'off'")
                kw[key] = value == "on"
            elif kind == "int":
                kw[key] = int(value)
            elif key == "solver.dt":  # stored in t_r; keep t_r input exact
                m = _QUANT.match(value)
                if m and m.group(2) == "t_r":
                    kw[key] = float(m.group(1))
                else:
                    kw[key] = _quantity(value, "time", frame) / frame.t_r
            elif kind == "frequency?":
                kw[key] = None if value == "none" else _quantity(value, "frequency", frame)
            else:
                kw[key] = _quantity(value, kind, frame)
        except ValueError as exc:
            issues.append(f"line {lineno}: {key}: {exc}")

    segments = []
    seg_lines = []
    for lineno, value in repeated["segment"]:
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != 5:
            issues.append(f"line {lineno}: segment needs shape, t_start, t_end, depth_start, depth_end")
            continue
        try:
            if parts[0] not in SHAPES:
                raise ValueError(f"unknown shape {parts[0]!r}")
            t0, t1 = (_quantity(p, "time", frame) for p in parts[1:3])
            d0, d1 = (_quantity(p, "depth", frame) for p in parts[3:5])
        except ValueError as exc:
            issues.append(f"line {lineno}: segment: {exc}")
            continue
        segments.append(Segment(t0, t1, parts[0], d0, d1))
        seg_lines.append(lineno)
    events = []
    for lineno, value in repeated["event"]:
        parts = [p.strip() for p in value.split(",")]
        try:
            if len(parts) not in (2, 3):
                raise ValueError("event needs kind, time [, payload]")
            if parts[0] not in EVENT_KINDS:
                raise ValueError(f"unknown kind {parts[0]!r}")
            t = _quantity(parts[1], "time", frame)
            payload = _quantity(parts[2], "length", frame) if len(parts) == 3 else None
        except ValueError as exc:
            issues.append(f"line {lineno}: event: {exc}")
            continue
        events.append(Event(t, parts[0], payload))

    # an unvalidated schedule lets every remaining problem be reported in one pass
    probe = DepthSchedule.__new__(DepthSchedule)
    object.__setattr__(probe, "segments", tuple(segments))
    object.__setattr__(probe, "events", tuple(sorted(events, key=lambda e: e.time)))
    for msg in validate_schedule(probe):
        issues.append(_locate(msg, seg_lines))

    mapping = {
        "name": "name", "frame.wavelength": "wavelength", "frame.mass": "mass", "gravity": "gravity",
        "gravity.g": "g", "trap.frequency": "trap_frequency", "trap.center": "trap_center",
        "initial.velocity": "initial_velocity", "grid.x_min": "x_min", "grid.x_max": "x_max",
        "grid.points": "n_points", "solver.dt": "dt", "solver.t_end": "t_end", "solver.g1d": "g1d",
        "output.tof": "tof", "output.density_stride": "density_stride",
    }
    fields = {mapping[k]: v for k, v in kw.items()}
    scen = Scenario(schedule=probe, meta=tuple(sorted(meta.items())), **fields)
    issues += [_locate(m, seg_lines) for m in validate_scenario(scen)]
    if issues:
        raise ScenarioError(issues)
    return replace(scen, schedule=DepthSchedule(segments, events))


def _locate(msg: str, seg_lines):
    def sub(m):
        i = int(m.group(1))
        return f"segment[{i}] (line {seg_lines[i]})" if i < len(seg_lines) else m.group(0)

    msg = re.sub(r"segment\[(\d+)\]", sub, msg)
    m = re.match(r"segments (\d+) and (\d+) (.*)", msg)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        return f"segments {a} (line {seg_lines[a]}) and {b} (line {seg_lines[b]}) {m.group(3)}"
    return msg


def validate_scenario(s: Scenario) -> list:
    issues = []
    try:
        s.frame
    except ValueError as exc:
        issues.append(f"frame: {exc}")
    if s.n_points < 2 or s.n_points & (s.n_points - 1):
        issues.append(f"grid.points: {s.n_points} is not a power of two")
    if not s.x_max > s.x_min:
        issues.append("grid: x_max must exceed x_min")
    if not 0 < s.dt < 0.1:
        issues.append(f"solver.dt: {s.dt} t_r outside (0, 0.1) t_r")
    if not math.isfinite(s.initial_velocity):
        issues.append("initial.velocity must be finite")
    if s.t_end < 0:
        issues.append("solver.t_end must be >= 0")
    if s.tof < 0:
        issues.append("output.tof must be >= 0")
    if s.g1d < 0:
        issues.append("solver.g1d must be >= 0")
    if s.trap_frequency is not None and not s.trap_frequency > 0:
        issues.append("trap.frequency must be positive")
    for i, seg in enumerate(s.schedule.segments):
        if seg.t_end > s.t_end * (1 + 1e-12) + 1e-15:
            issues.append(f"segment[{i}]: ends after solver.t_end")
    for i, ev in enumerate(s.schedule.events):
        if ev.time > s.t_end * (1 + 1e-12) + 1e-15 or ev.time < 0:
            issues.append(f"event[{i}]: time outside the simulation span")
    return issues


# --------------------------------------------------------------- serializing


def serialize_scenario(s: Scenario, digits: Optional[int] = None) -> str:
    """Canonical text form: fixed key order, SI units.

    Floats are written with ``repr`` so that parsing gives back the identical
    Scenario; ``digits`` rounds them to that many significant digits instead.
    """

    def _r(x: float) -> str:
        return repr(float(x)) if digits is None else format(float(x), f".{digits}g")

    lines = [
        f"name = {s.name}",
        f"frame.wavelength = {_r(s.wavelength)} m",
        f"frame.mass = {_r(s.mass)} kg",
        f"gravity = {'on' if s.gravity else 'off'}",
        f"gravity.g = {_r(s.g)} m/s2",
        f"trap.frequency = {'none' if s.trap_frequency is None else _r(s.trap_frequency) + ' Hz'}",
        f"trap.center = {_r(s.trap_center)} m",
        f"initial.velocity = {_r(s.initial_velocity)} m/s",
        f"grid.x_min = {_r(s.x_min)} m",
        f"grid.x_max = {_r(s.x_max)} m",
        f"grid.points = {int(s.n_points)}",
        f"solver.dt = {_r(s.dt)} t_r",
        f"solver.t_end = {_r(s.t_end)} s",
        f"solver.g1d = {_r(s.g1d)}",
        f"output.tof = {_r(s.tof)} s",
        f"output.density_stride = {int(s.density_stride)}",
    ]
    for seg in s.schedule.segments:
        lines.append(
            f"segment = {seg.shape}, {_r(seg.t_start)} s, {_r(seg.t_end)} s, {_r(seg.depth_start)} Er, {_r(seg.depth_end)} Er"
        )
    for ev in s.schedule.events:
        tail = "" if ev.payload is None else f", {_r(ev.payload)} m"
        lines.append(f"event = {ev.kind}, {_r(ev.time)} s{tail}")
    for k, v in sorted(s.meta):
        lines.append(f"meta.{k} = {v}")
    return "\n".join(lines) + "\n"


def scenario_hash(s: Scenario) -> str:
    """SHA-256 of the canonical text at 12 significant digits, so unit spelling does not matter."""
    return hashlib.sha256(serialize_scenario(s, digits=12).encode()).hexdigest()


# ------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class Plateau:
    cycle_index: int
    probability: float
    depth: float
    t_start: float
    t_end: float


def split_plan(fractions: Sequence[float], frame: RecoilFrame, g: float = G_EARTH, v0: float = KICK_VELOCITY,
               release_cycles: Optional[Sequence[int]] = None, suppression_depth: float = SUPPRESSION_DEPTH,
               plateau_fraction: float = PLATEAU_FRACTION) -> list:
    """Per-cycle plateaus that emit ``fractions`` on the given release cycles.

    Packet i leaves on crossing ``release_cycles[i]`` (default i + 1). Cycles
    that release nothing are held at ``suppression_depth``. The last packet
    is released whole: its plateau has depth 0.
    """
    probs = lz.fractions_to_probabilities(fractions)
    m = len(fractions)
    cycles = list(range(1, m + 1)) if release_cycles is None else [int(c) for c in release_cycles]
    if len(cycles) != m or any(b <= a for a, b in zip(cycles, cycles[1:])) or cycles[0] < 1:
        raise lz.LZError("release_cycles must be strictly increasing, one per fraction, starting at >= 1")
    env = lz.GravityEnv(g, v0)
    tau = lz.bloch_period(g, frame)
    w = plateau_fraction * tau
    plan = []
    release_at = dict(zip(cycles[:-1], probs))
    for k in range(1, cycles[-1] + 1):
        c = env.crossing_time(k, frame)
        if k == cycles[-1]:
            p, depth = 1.0, 0.0
        elif k in release_at:
            p = release_at[k]
            depth = 0.0 if p >= 1.0 else lz.depth_for_probability(p, 1, g, frame)
        else:
            depth = suppression_depth
            p = lz.probability_at_depth(depth, 1, g, frame)
        plan.append(Plateau(k, p, depth, c - 0.5 * w, c + 0.5 * w))
    return plan


def schedule_from_plan(plan, frame: RecoilFrame, g: float = G_EARTH, v0: float = KICK_VELOCITY,
                       suppression_depth: float = SUPPRESSION_DEPTH, ramp: float = RAMP_TIME):
    """Depth program: s-curve turn-on ending at q = 0, plateaus joined by s-curves, release."""
    t_q0 = v0 / g
    segs = [Segment(t_q0 - ramp, t_q0, "s-curve", 0.0, suppression_depth)]
    prev_depth, prev_end = suppression_depth, t_q0
    for pl in plan[:-1]:
        shape = "hold" if pl.depth == prev_depth else "s-curve"
        segs.append(Segment(prev_end, pl.t_start, shape, prev_depth, pl.depth))
        segs.append(Segment(pl.t_start, pl.t_end, "hold", pl.depth, pl.depth))
        prev_depth, prev_end = pl.depth, pl.t_end
    last = plan[-1]
    segs.append(Segment(prev_end, last.t_start, "s-curve", prev_depth, 0.0))
    events = [Event(0.0, "trap_off"), Event(last.t_start, "lattice_off")]
    return DepthSchedule(segs, events), last.t_start


def _split_grid(frame, g, t_fall, extra=60e-6):
    fall = frame.v_r * t_fall + 0.5 * g * t_fall**2
    return -(fall + extra), 40e-6


def synthesize_split_scenario(fractions: Sequence[float], frame: RecoilFrame = None, g: float = G_EARTH,
                              v0: float = KICK_VELOCITY, release_cycles=None, name: str = "split",
                              trap_frequency: float = SPLIT_TRAP_FREQUENCY, tof: float = 0.0,
                              suppression_depth: float = SUPPRESSION_DEPTH) -> Scenario:
    """Vertical-lattice splitter emitting ``fractions`` one Bloch cycle at a time."""
    frame = frame or RecoilFrame(LAMBDA_LATTICE, MASS_RB87)
    fr = [float(f) for f in fractions]
    meta = {"kind": "split", "fractions": " ".join(repr(f) for f in fr)}
    if release_cycles is not None:
        meta["release_cycles"] = " ".join(str(int(c)) for c in release_cycles)
    if len(fr) == 1:
        lz.fractions_to_probabilities(fr)
        t_rel = v0 / g
        sched = DepthSchedule([], [Event(0.0, "trap_off"), Event(t_rel, "release")])
        x_lo, x_hi = _split_grid(frame, g, 0.0)
        return Scenario(name=name, wavelength=frame.wavelength, mass=frame.atom_mass, gravity=True, g=g,
                        trap_frequency=trap_frequency, initial_velocity=v0, schedule=sched, x_min=x_lo,
                        x_max=x_hi, n_points=1 << 14, t_end=t_rel, tof=tof, meta=tuple(sorted(meta.items())))
    plan = split_plan(fr, frame, g, v0, release_cycles, suppression_depth)
    sched, t_off = schedule_from_plan(plan, frame, g, v0, suppression_depth)
    x_lo, x_hi = _split_grid(frame, g, t_off - plan[0].t_start)
    span_ok = int(2 ** np.ceil(np.log2((x_hi - x_lo) * frame.k_r / 0.13)))
    return Scenario(name=name, wavelength=frame.wavelength, mass=frame.atom_mass, gravity=True, g=g,
                    trap_frequency=trap_frequency, initial_velocity=v0, schedule=sched, x_min=x_lo, x_max=x_hi,
                    n_points=span_ok, t_end=t_off, tof=tof, meta=tuple(sorted(meta.items())))


def synthesize_lz_scenario(depth: float, frame: RecoilFrame = None, g: float = G_EARTH, v0: float = KICK_VELOCITY,
                           ramp: float = RAMP_TIME) -> Scenario:
    """Single zone-edge crossing at a fixed depth, read out half a Bloch period later (q = 0)."""
    frame = frame or RecoilFrame(LAMBDA_LATTICE, MASS_RB87)
    env = lz.GravityEnv(g, v0)
    tau = lz.bloch_period(g, frame)
    t_q0 = env.t_q0()
    t_read = env.crossing_time(1, frame) + 0.5 * tau
    segs = []
    if depth > 0:
        segs = [Segment(t_q0 - ramp, t_q0, "s-curve", 0.0, depth), Segment(t_q0, t_read, "hold", depth, depth)]
    sched = DepthSchedule(segs, [Event(0.0, "trap_off")])
    meta = {"kind": "lz", "depth": repr(float(depth)), "readout": repr(t_read)}
    return Scenario(name=f"lz-{depth:g}", wavelength=frame.wavelength, mass=frame.atom_mass, gravity=True, g=g,
                    trap_frequency=SPLIT_TRAP_FREQUENCY, initial_velocity=v0, schedule=sched, x_min=-60e-6,
                    x_max=20e-6, n_points=1 << 12, t_end=t_read, meta=tuple(sorted(meta.items())))


def synthesize_bragg_scenario(order: int, trap: lz.HarmonicTrap = None, pulse_length: float = 1e-3,
                              frame: RecoilFrame = None, depth: Optional[float] = None, variant: str = "stay",
                              lead: float = TURN_ON_MARGIN, early_off: float = 0.25, tof: float = TOF) -> Scenario:
    """Partial Bragg mirror of the given order on a cloud oscillating in a displaced trap.

    The trap centre jumps from ``r_max`` to 0 at t = 0. The lattice pulse
    starts ``lead`` local Bloch periods before the cloud's momentum falls
    through ``order`` hbar k_r. ``variant="early-off"`` switches the lattice
    off ``early_off`` Bloch periods after that crossing, before the
    transmitted part reaches the next zone edge. The trap is released at the
    end of the pulse.
    """
    frame = frame or RecoilFrame(LAMBDA_LATTICE, MASS_RB87)
    trap = trap or lz.HarmonicTrap(2 * math.pi * BRAGG_TRAP_FREQUENCY, BRAGG_AMPLITUDE)
    if variant not in ("stay", "early-off"):
        raise ValueError("variant must be 'stay' or 'early-off'")
    t_c = lz.bragg_pulse_time(order, trap, frame)
    depth = lz.BRAGG_DEPTHS.get(order) if depth is None else depth
    if depth is None:
        raise lz.LZError(f"no default depth for order {order}; pass depth explicitly")
    tau = lz.bloch_period(lz.local_acceleration(trap, t_c), frame)
    t_on = t_c - lead * tau
    t_end = t_on + pulse_length
    segs = [Segment(t_on, t_end, "hold", depth, depth)] if pulse_length > 0 else []
    events = [Event(0.0, "trap_displace", 0.0), Event(t_end, "release")]
    meta = {"kind": "bragg", "order": str(order), "variant": variant, "crossing": repr(t_c),
            "tau_local": repr(tau), "depth": repr(float(depth))}
    if variant == "early-off" and pulse_length > 0:
        t_off = min(t_c + early_off * tau, t_end)
        events.append(Event(t_off, "lattice_off"))
        meta["lattice_off"] = repr(t_off)
    return Scenario(name=f"bragg-{order}-{variant}", wavelength=frame.wavelength, mass=frame.atom_mass,
                    gravity=False, trap_frequency=trap.omega / (2 * math.pi), trap_center=trap.r_max,
                    schedule=DepthSchedule(segs, events), x_min=-150e-6, x_max=150e-6, n_points=1 << 14,
                    t_end=t_end, tof=tof, meta=tuple(sorted(meta.items())))


def synthesize_array_scenario(cycles: int = 3, pyramid: bool = True, trap: lz.HarmonicTrap = None,
                              frame: RecoilFrame = None, p: float = 0.5, lead: float = TURN_ON_MARGIN) -> Scenario:
    """Two partial BM_1 mirrors, before P1 and before P2.

    With ``pyramid`` the first pulse spans ``cycles`` zone-edge crossings and
    the second stays on while all clouds arrive; otherwise both pulses cover
    a single crossing.
    """
    frame = frame or RecoilFrame(LAMBDA_LATTICE, MASS_RB87)
    trap = trap or lz.HarmonicTrap(2 * math.pi * BRAGG_TRAP_FREQUENCY, BRAGG_AMPLITUDE)
    t1 = lz.bragg_pulse_time(1, trap, frame)
    a = lz.local_acceleration(trap, t1)
    tau = lz.bloch_period(a, frame)
    depth = lz.depth_for_probability(p, 1, a, frame)
    n1 = cycles if pyramid else 1
    on1, off1 = t1 - lead * tau, t1 + (n1 - 1) * tau + 0.5 * tau
    s0 = math.asin(frame.v_r / (trap.omega * trap.r_max)) / trap.omega
    t2 = t1 + 0.5 * trap.period - 2 * s0
    n2 = cycles + 1 if pyramid else 2
    on2, off2 = t2 - lead * tau, t2 + (n2 - 1) * tau + 0.5 * tau
    segs = [Segment(on1, off1, "hold", depth, depth), Segment(on2, off2, "hold", depth, depth)]
    events = [Event(0.0, "trap_displace", 0.0), Event(off2, "release")]
    meta = {"kind": "array", "cycles": str(cycles), "pyramid": "yes" if pyramid else "no", "probability": repr(p)}
    return Scenario(name="pyramid" if pyramid else "array", wavelength=frame.wavelength, mass=frame.atom_mass,
                    gravity=False, trap_frequency=trap.omega / (2 * math.pi), trap_center=trap.r_max,
                    schedule=DepthSchedule(segs, events), x_min=-150e-6, x_max=150e-6, n_points=1 << 14,
                    t_end=off2, tof=TOF, meta=tuple(sorted(meta.items())))


# --------------------------------------------------------------- presets

FIG1_DEPTHS = (0.3, 0.6, 0.9, 1.2, 1.6, 2.0, 2.4)


def _fig1():
    s = synthesize_lz_scenario(FIG1_DEPTHS[0])
    return replace(s, name="fig1-lz-curve").with_meta(kind="lz-scan", depths=" ".join(str(d) for d in FIG1_DEPTHS))


def _fig2():
    return replace(synthesize_split_scenario([1.0 / 6] * 6), name="fig2-equal-split")


def _fig3(j=3):
    return replace(synthesize_split_scenario([1 / 3, 1 / 3, 1 / 3], release_cycles=[1, j, 6]), name=f"fig3-selective")


def _fig4(order, variant="stay"):
    s = synthesize_bragg_scenario(order, variant=variant)
    suffix = "" if variant == "stay" else "-early-off"
    return replace(s, name=f"fig4-bragg-order-{order}{suffix}")


PRESETS = {
    "fig1-lz-curve": _fig1,
    "fig2-equal-split": _fig2,
    "fig3-selective": _fig3,
    "fig4-bragg-order-1": lambda: _fig4(1),
    "fig4-bragg-order-2": lambda: _fig4(2),
    "fig4-bragg-order-3": lambda: _fig4(3),
    "fig4-bragg-order-2-early-off": lambda: _fig4(2, "early-off"),
    "fig4-bragg-order-3-early-off": lambda: _fig4(3, "early-off"),
    "fig8-array": lambda: replace(synthesize_array_scenario(pyramid=False), name="fig8-array"),
    "fig9-pyramid": lambda: replace(synthesize_array_scenario(cycles=3, pyramid=True), name="fig9-pyramid"),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ScenarioError([f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"]) from None


def write_schedule_csv(plan, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle_index", "probability", "depth_E_r", "t_start", "t_end"])
        for pl in plan:
            w.writerow([pl.cycle_index, repr(float(pl.probability)), repr(float(pl.depth)), repr(pl.t_start),
                        repr(pl.t_end)])


# ---------------------------------------------------------------- running


@dataclass
class WaveRun:
    scenario: Scenario
    grid: object
    final: object
    snapshots: dict
    expanded: object = None


def build_program(s: Scenario):
    from .wavesolver import PotentialProgram

    return PotentialProgram(s.frame, s.schedule, s.trap_omega, s.trap_center, s.g if s.gravity else 0.0, s.g1d)


def build_grid(s: Scenario):
    from .wavesolver import Grid

    k = s.frame.k_r
    return Grid.lattice_commensurate(s.x_min * k, s.x_max * k, s.n_points)


def initial_state(s: Scenario, grid=None, program=None):
    """Trap ground state, kicked by ``initial_velocity``."""
    from .wavesolver import ground_state

    grid = grid or build_grid(s)
    program = program or build_program(s)
    wf = ground_state(program, grid)
    p0 = s.initial_velocity / s.frame.v_r
    if p0:
        wf.psi = wf.psi * np.exp(1j * p0 * grid.x)
    return wf


def run_wave(s: Scenario, snapshot_times: Sequence[float] = (), recorder=None) -> WaveRun:
    """Propagate the scenario; ``snapshot_times`` (SI seconds) get stored copies of the state."""
    from .wavesolver import evolve, free_expand

    grid = build_grid(s)
    program = build_program(s)
    wf = initial_state(s, grid, program)
    t_r = s.frame.t_r
    stride = s.density_stride if recorder is not None else 0
    snaps = {}
    for ts in sorted(set(float(t) for t in snapshot_times)):
        if not 0 <= ts <= s.t_end:
            raise ScenarioError([f"snapshot time {ts!r} s outside [0, t_end]"])
        wf = evolve(wf, program, s.dt, ts / t_r, callback=recorder, stride=stride)
        snaps[ts] = wf.copy()
    wf = evolve(wf, program, s.dt, s.t_end / t_r, callback=recorder, stride=stride)
    expanded = None
    if s.tof > 0:
        accel = program.accel_r if s.gravity else 0.0
        expanded = free_expand(wf, s.tof / t_r, accel=accel)
    return WaveRun(s, grid, wf, snaps, expanded)


def run_event(s: Scenario):
    """Event-model counterpart of the scenario (a CascadeResult or BraggPrediction)."""
    frame = s.frame
    kind = s.kind
    trap = None
    if s.trap_omega is not None and s.trap_center:
        trap = lz.HarmonicTrap(s.trap_omega, abs(s.trap_center))
    if kind == "bragg":
        return lz.bragg_split(int(s.meta_get("order")), trap, float(s.meta_get("depth")), frame)
    if kind == "array":
        return lz.simulate_array(trap, float(s.meta_get("probability", 0.5)), int(s.meta_get("cycles", 3)),
                                 frame=frame, independent_second_stage=s.meta_get("pyramid") == "no")
    if s.gravity:
        return lz.simulate_cascade(s.schedule, lz.GravityEnv(s.g, s.initial_velocity), frame)
    if trap is not None:
        return lz.simulate_cascade(s.schedule, trap, frame)
    raise ScenarioError(["event engine needs gravity or a displaced trap"])


def lz_scan(depths: Sequence[float] = FIG1_DEPTHS, frame: RecoilFrame = None, engine: str = "both") -> list:
    """Tunneling probability at q = 0 after one crossing, per depth.

    Returns rows ``(depth, gap, predicted, simulated)``; ``simulated`` is
    None for the event engine alone.
    """
    from .analysis import band_populations
    from .bands import gap_at_depth

    frame = frame or RecoilFrame(LAMBDA_LATTICE, MASS_RB87)
    out = []
    for d in depths:
        pred = lz.probability_at_depth(d, 1, G_EARTH, frame)
        sim = None
        if engine in ("wave", "both"):
            s = synthesize_lz_scenario(d, frame)
            wf = run_wave(s).final
            sim = 1.0 if d <= 0 else float(1.0 - band_populations(wf, d, 4)[0] / wf.norm)
        out.append((float(d), gap_at_depth(d, 1) if d > 0 else 0.0, pred, sim))
    return out


def split_packets(run: WaveRun):
    """Released packets of a vertical split, found in momentum space."""
    from .analysis import MIN_SEP_MOMENTUM, detect_packets, momentum_distribution

    p, dens = momentum_distribution(run.final)
    return detect_packets(dens, p, min_separation=MIN_SEP_MOMENTUM, axis="momentum")


@dataclass(frozen=True)
class BraggMeasurement:
    order: int
    transmitted: float  # bands below the mirror order, just after the crossing
    reflected: float
    retained: Optional[float]  # band order-1 population kept until pulse end (lattice on)
    separation: Optional[float]  # momentum gap between the two main packets at pulse end, hbar k_r
    tof_separation: Optional[float]  # metres, after time of flight
    free_momentum: float = 0.0  # where the cloud would be without any lattice, hbar k_r
    unaffected: bool = False  # a packet sits at free_momentum
    shifted: bool = False  # a packet sits at free_momentum + 2 * order


def measure_bragg(s: Scenario, settle: float = 0.25e-3) -> BraggMeasurement:
    """Run a Bragg scenario and read out the split.

    The split is read in the band basis ``settle`` seconds after the
    crossing. With the lattice kept on, the band order-1 population is read
    again just before the pulse ends. The momentum separation of the two
    largest packets is taken at the end of the pulse.
    """
    from .analysis import MIN_SEP_MOMENTUM, MIN_SEP_POSITION, band_populations, detect_packets, momentum_distribution

    n = int(s.meta_get("order"))
    depth = float(s.meta_get("depth"))
    t_c = float(s.meta_get("crossing"))
    early = s.meta_get("lattice_off")
    t_read = t_c + settle
    if early is not None and float(early) <= t_read:
        raise ScenarioError(["lattice goes off before the split can be read"])
    t_late = s.t_end - 1e-6
    times = [t_read] if early is not None else [t_read, t_late]
    run = run_wave(s, times)
    nb = n + 4
    pops = band_populations(run.snapshots[t_read], depth, nb)
    pops = pops / run.snapshots[t_read].norm
    trans = float(pops[:n].sum())
    retained = None
    if early is None and n > 1:
        late = band_populations(run.snapshots[t_late], depth, nb) / run.snapshots[t_late].norm
        retained = float(late[n - 1] / pops[n - 1])
    pk, dk = momentum_distribution(run.final)
    mom = detect_packets(dk, pk, min_separation=MIN_SEP_MOMENTUM, axis="momentum")
    sep = _two_largest_gap(mom)
    tof_sep = None
    if run.expanded is not None:
        x = run.expanded.grid.x / s.frame.k_r
        pos = detect_packets(run.expanded.density(), x, min_separation=MIN_SEP_POSITION)
        tof_sep = _two_largest_gap(pos)
    v_free = -abs(s.trap_center) * s.trap_omega * math.sin(s.trap_omega * s.t_end)
    p_free = v_free / s.frame.v_r
    near = lambda target: any(abs(c - target) < 0.5 for c in mom.centroids)
    return BraggMeasurement(n, trans, 1.0 - trans, retained, sep, tof_sep, p_free, near(p_free),
                            near(p_free + 2 * n))


def _two_largest_gap(ps):
    if len(ps) < 2:
        return None
    top = sorted(ps.packets, key=lambda p: p.population)[-2:]
    return abs(top[0].centroid - top[1].centroid)
