"""Piecewise lattice-depth programs plus discrete trap/lattice events.

Times are in seconds, depths in E_r. Evaluation is right-continuous: at a
boundary shared by two segments the later segment wins, and gaps between
segments (and everything outside them) evaluate to depth 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SHAPES = ("hold", "linear", "s-curve")
EVENT_KINDS = ("trap_displace", "trap_off", "lattice_off", "release")
MAX_DEPTH = 30.0  # E_r, hardware range


class ScheduleError(ValueError):
    """Validation failure; ``issues`` lists every problem with its location."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    shape: str
    depth_start: float
    depth_end: float

    def value(self, t):
        if self.shape == "hold":
            return np.full_like(np.asarray(t, dtype=float), self.depth_start)
        u = (np.asarray(t, dtype=float) - self.t_start) / (self.t_end - self.t_start)
        w = np.clip(u, 0.0, 1.0) if self.shape == "linear" else smoothstep(u)
        return self.depth_start + (self.depth_end - self.depth_start) * w


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    payload: Optional[float] = None


@dataclass(frozen=True)
class DepthSchedule:
    segments: tuple = field(default_factory=tuple)
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.time)))
        issues = validate_schedule(self)
        if issues:
            raise ScheduleError(issues)

    def lattice_off_time(self) -> float:
        """Earliest lattice_off or release event, or +inf."""
        times = [e.time for e in self.events if e.kind in ("lattice_off", "release")]
        return min(times) if times else np.inf

    def depth(self, t):
        """Lattice depth (E_r) at time(s) ``t`` in seconds."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for seg in self.segments:
            mask = (t >= seg.t_start) & (t < seg.t_end)
            if np.any(mask):
                out = np.where(mask, seg.value(t), out)
        out = np.where(t >= self.lattice_off_time(), 0.0, out)
        return out if out.ndim else float(out)

    @property
    def t_first(self) -> float:
        return self.segments[0].t_start if self.segments else 0.0

    @property
    def t_last(self) -> float:
        ends = [s.t_end for s in self.segments] + [e.time for e in self.events]
        return max(ends) if ends else 0.0


def validate_schedule(sched: DepthSchedule) -> list:
    issues = []
    for i, seg in enumerate(sched.segments):
        where = f"segment[{i}]"
        if seg.shape not in SHAPES:
            issues.append(f"{where}: unknown shape {seg.shape!r}")
        if not (np.isfinite(seg.t_start) and np.isfinite(seg.t_end)) or seg.t_end <= seg.t_start:
            issues.append(f"{where}: t_end must be after t_start")
        for name in ("depth_start", "depth_end"):
            v = getattr(seg, name)
            if not (0.0 <= v <= MAX_DEPTH):
                issues.append(f"{where}: {name}={v!r} outside [0, {MAX_DEPTH:g}] E_r")
        if seg.shape == "hold" and seg.depth_start != seg.depth_end:
            issues.append(f"{where}: hold segment needs depth_start == depth_end")
    for i in range(1, len(sched.segments)):
        a, b = sched.segments[i - 1], sched.segments[i]
        if b.t_start < a.t_end:
            issues.append(f"segments {i - 1} and {i} overlap or are out of order")
    for i, ev in enumerate(sched.events):
        if ev.kind not in EVENT_KINDS:
            issues.append(f"event[{i}]: unknown kind {ev.kind!r}")
        if not np.isfinite(ev.time):
            issues.append(f"event[{i}]: time must be finite")
        if ev.kind == "trap_displace" and ev.payload is None:
            issues.append(f"event[{i}]: trap_displace needs a new centre position")
    return issues
