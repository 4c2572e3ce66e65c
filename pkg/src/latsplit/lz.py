"""Landau-Zener event model.

Packets are bookkept as fractions that branch instantaneously each time the
lattice-bound cloud crosses a Brillouin-zone edge. All accelerations here
are SI (m/s^2), times SI seconds, gaps and depths E_r.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .bands import gap_at_depth
from .schedule import MAX_DEPTH, DepthSchedule
from .units import DEFAULT_FRAME, G_EARTH, HBAR, RecoilFrame

TRAPPED = "trapped-oscillating"
FALLING = "released-falling"
FREE = "free"

UNBOUND_THRESHOLD = 0.99


class LZError(ValueError):
    """Invalid argument to the event model."""


class ProbabilityRangeError(LZError):
    """Target probability unreachable within the lattice depth range."""


class UnreachableMomentumError(LZError):
    """Bragg order needs more momentum than the trap oscillation supplies."""


# ---------------------------------------------------------------- Landau-Zener core


def critical_acceleration(gap: float, n: int, frame: RecoilFrame = DEFAULT_FRAME) -> float:
    """a_c(n) = pi Delta_n^2 / (4 n k_r hbar^2), SI."""
    delta = gap * frame.E_r
    return math.pi * delta**2 / (4.0 * n * frame.k_r * HBAR**2)


def tunneling_probability(gap: float, n: int, accel: float, frame: RecoilFrame = DEFAULT_FRAME) -> float:
    """Landau-Zener probability to tunnel from band n-1 to band n per crossing.

    Parameters
    ----------
    gap : float
        Band gap Delta_n in E_r.
    n : int
        Gap order (1 for the first zone edge).
    accel : float
        Acceleration in m/s^2; ``math.inf`` is allowed.
    """
    if n < 1:
        raise LZError(f"band index n must be >= 1, got {n}")
    if gap < 0:
        raise LZError(f"gap must be >= 0, got {gap}")
    if not accel > 0:
        raise LZError(f"acceleration must be > 0, got {accel}")
    return math.exp(-critical_acceleration(gap, n, frame) / accel)


@dataclass(frozen=True)
class LZContext:
    frame: RecoilFrame
    acceleration: float
    band_index: int
    gap: float
    critical_acceleration: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "critical_acceleration", critical_acceleration(self.gap, self.band_index, self.frame))

    @property
    def probability(self) -> float:
        return math.exp(-self.critical_acceleration / self.acceleration)


def bloch_period(accel: float, frame: RecoilFrame = DEFAULT_FRAME) -> float:
    """tau_B = 2 hbar k_r / (m a), seconds."""
    if not accel > 0:
        raise LZError(f"acceleration must be > 0, got {accel}")
    return 2.0 * HBAR * frame.k_r / (frame.atom_mass * accel)


# ------------------------------------------------------- schedule synthesis


def equal_split_probabilities(m: int) -> list:
    if m < 1:
        raise LZError("m must be >= 1")
    return [1.0 / k for k in range(m, 1, -1)]


def fractions_to_probabilities(fractions: Sequence[float]) -> list:
    """Per-crossing tunneling probabilities that emit ``fractions`` in order.

    The last fraction is not tunneled out but released whole when the lattice
    is switched off, so ``len(fractions) - 1`` probabilities are returned.
    """
    f = np.asarray(fractions, dtype=float)
    if f.size < 1 or np.any(~np.isfinite(f)) or np.any(f <= 0):
        raise LZError("fractions must be a non-empty list of positive numbers")
    if abs(f.sum() - 1.0) > 1e-9:
        raise LZError(f"fractions must sum to 1, got {f.sum():.12g}")
    out = []
    remaining = 1.0
    for fi in f[:-1]:
        out.append(min(1.0, fi / remaining))
        remaining -= fi
    return out


@lru_cache(maxsize=4096)
def _gap(depth: float, n: int) -> float:
    return gap_at_depth(depth, n)


def depth_for_probability(p_target: float, n: int, accel: float, frame: RecoilFrame = DEFAULT_FRAME,
                          max_depth: float = MAX_DEPTH) -> float:
    """Lattice depth giving tunneling probability ``p_target`` at gap order n."""
    if not 0.0 < p_target < 1.0:
        raise ProbabilityRangeError(f"p_target must lie in (0, 1), got {p_target}")
    if not accel > 0:
        raise LZError(f"acceleration must be > 0, got {accel}")

    def f(v):
        return math.log(tunneling_probability(_gap(v, n), n, accel, frame)) - math.log(p_target)

    hi = f(max_depth)
    if hi > 0:
        raise ProbabilityRangeError(
            f"P={p_target} needs a depth above {max_depth} E_r (reachable minimum {math.exp(hi) * p_target:.3g})"
        )
    # f(0) = -log(p_target) > 0 side: gap 0 gives P = 1
    return brentq(f, 0.0, max_depth, xtol=1e-13, rtol=1e-13, maxiter=200)


def probability_at_depth(depth: float, n: int, accel: float, frame: RecoilFrame = DEFAULT_FRAME) -> float:
    if depth <= 0:
        return 1.0
    return tunneling_probability(_gap(float(depth), n), n, accel, frame)


# --------------------------------------------------------------- environments


@dataclass(frozen=True)
class GravityEnv:
    """Free fall with an initial upward kick; the lattice holds atoms at the apex."""

    accel: float = G_EARTH
    v0: float = 9e-3
    x0: float = 0.0

    def t_q0(self) -> float:
        return self.v0 / self.accel

    def crossing_time(self, k: int, frame: RecoilFrame) -> float:
        """Time of the k-th (1-based) zone-edge crossing of the lattice-bound cloud."""
        return self.t_q0() + (k - 0.5) * bloch_period(self.accel, frame)


@dataclass(frozen=True)
class HarmonicTrap:
    omega: float  # rad/s
    r_max: float  # m

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def p_max(self, frame: RecoilFrame = DEFAULT_FRAME) -> float:
        """Peak momentum in units of hbar k_r."""
        return frame.atom_mass * self.omega * self.r_max / (HBAR * frame.k_r)

    def position(self, t):
        return self.r_max * np.cos(self.omega * t)

    def velocity(self, t):
        return -self.r_max * self.omega * np.sin(self.omega * t)


def local_acceleration(trap: HarmonicTrap, t: float) -> float:
    """Magnitude of the restoring acceleration at the cloud's position, m/s^2."""
    return trap.omega**2 * abs(trap.r_max * math.cos(trap.omega * t))


def bragg_pulse_time(order: int, trap: HarmonicTrap, frame: RecoilFrame = DEFAULT_FRAME) -> float:
    """Time at which |p| falls through ``order`` hbar k_r on the way to P1 (t = T/2)."""
    if order < 1:
        raise LZError("Bragg order must be >= 1")
    ratio = order / trap.p_max(frame)
    if ratio > 1.0:
        raise UnreachableMomentumError(
            f"order {order} needs {order} hbar k_r but the trap supplies only {trap.p_max(frame):.3f}"
        )
    return (math.pi - math.asin(ratio)) / trap.omega


# ------------------------------------------------------------- packet cascade


@dataclass
class PacketNode:
    packet_id: int
    parent_id: Optional[int]
    fraction: float
    band: int
    status: str
    release_cycle: Optional[int] = None
    position: float = 0.0
    velocity: float = 0.0
    birth_time: float = 0.0
    row: Optional[int] = None

    def position_at(self, t: float, accel: float = 0.0) -> float:
        """Ballistic position at time t under constant acceleration ``-accel``."""
        dt = t - self.birth_time
        return self.position + self.velocity * dt - 0.5 * accel * dt * dt


@dataclass
class CascadeResult:
    packets: list
    per_cycle_probabilities: list
    timeline: list

    @property
    def fractions(self) -> list:
        return [p.fraction for p in self.packets]

    def released(self) -> list:
        return [p for p in self.packets if p.status != TRAPPED]

    @property
    def total(self) -> float:
        return math.fsum(self.fractions)


def _timeline_add(timeline, t, text):
    if timeline and timeline[-1][0] == t:
        timeline[-1] = (t, timeline[-1][1] + "; " + text)
    else:
        timeline.append((t, text))


def simulate_cascade(schedule: Union[Sequence[float], DepthSchedule], environment=None,
                     frame: RecoilFrame = DEFAULT_FRAME, release_remaining: bool = False) -> CascadeResult:
    """Branch a lattice-bound cloud at every zone-edge crossing.

    ``schedule`` is either a list of per-crossing tunneling probabilities or a
    DepthSchedule whose depth at each predicted crossing time is converted to
    a probability through the exact band gap. With a DepthSchedule the cloud
    remaining when the lattice goes off is always released.

    In a :class:`GravityEnv` tunneled atoms fall out of the lattice. In a
    :class:`HarmonicTrap` the cloud arrives from high momentum at the first
    mirror: the reflected part (1 - p_1) leaves and the transmitted part is
    held in the lowest band, which then emits a fraction p_k per Bloch cycle
    with the acceleration frozen at its value at the first crossing.
    """
    env = GravityEnv() if environment is None else environment
    if isinstance(env, HarmonicTrap):
        return _cascade_harmonic(schedule, env, frame, release_remaining)
    return _cascade_gravity(schedule, env, frame, release_remaining)


def _probabilities_from_schedule(sched: DepthSchedule, crossing, accel, frame):
    """Yield (k, t_k, P_k) for crossings while the lattice is on."""
    t_off = min(sched.lattice_off_time(), sched.t_last)
    k = 1
    out = []
    while True:
        t = crossing(k)
        if t >= t_off:
            break
        if t >= sched.t_first:
            out.append((k, t, probability_at_depth(sched.depth(t), 1, accel, frame)))
        k += 1
    return out, t_off


def _cascade_gravity(schedule, env: GravityEnv, frame, release_remaining):
    tau = bloch_period(env.accel, frame)
    apex = env.x0 + env.v0**2 / (2.0 * env.accel)
    if isinstance(schedule, DepthSchedule):
        steps, t_off = _probabilities_from_schedule(schedule, lambda k: env.crossing_time(k, frame), env.accel, frame)
        release_remaining = True
    else:
        probs = [float(p) for p in schedule]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise LZError("probabilities must lie in [0, 1]")
        steps = [(k, env.crossing_time(k, frame), p) for k, p in enumerate(probs, start=1)]
        t_off = (steps[-1][1] if steps else env.t_q0() - 0.5 * tau) + 0.5 * tau

    trapped = PacketNode(0, None, 1.0, 0, TRAPPED, position=apex, birth_time=0.0)
    packets = []
    timeline = []
    probs_out = []
    next_id = 1
    for k, t, p in steps:
        probs_out.append(p)
        out = trapped.fraction * p
        trapped.fraction -= out
        if out > 0.0:
            packets.append(PacketNode(next_id, 0, out, 1, FALLING, k, apex, -frame.v_r, t))
            next_id += 1
        _timeline_add(timeline, t, f"crossing {k}: P={p:.6g}, released {out:.6g}")
        if UNBOUND_THRESHOLD <= p < 1.0:
            _timeline_add(timeline, t, f"warning: crossing {k} is effectively unbound (P >= {UNBOUND_THRESHOLD:g})")
        if trapped.fraction <= 0.0:
            trapped.fraction = 0.0
            break
    if trapped.fraction > 0.0 and release_remaining:
        trapped.status = FALLING
        trapped.release_cycle = len(probs_out) + 1
        # released mid-zone: momentum (1 - 2 phase) hbar k_r; at t_off default this is 0
        phase = ((t_off - env.t_q0()) / tau) % 1.0
        trapped.velocity = -2.0 * phase * frame.v_r if phase <= 0.5 else (2.0 - 2.0 * phase) * frame.v_r
        trapped.birth_time = t_off
        _timeline_add(timeline, t_off, f"lattice off: released {trapped.fraction:.6g}")
    if trapped.fraction > 0.0 or not packets:
        packets.append(trapped)
    return CascadeResult(packets, probs_out, timeline)


def _cascade_harmonic(schedule, trap: HarmonicTrap, frame, release_remaining):
    t1 = bragg_pulse_time(1, trap, frame)
    a_loc = local_acceleration(trap, t1)
    tau = bloch_period(a_loc, frame)
    x_m = float(trap.position(t1))
    if isinstance(schedule, DepthSchedule):
        steps, t_off = _probabilities_from_schedule(schedule, lambda k: t1 + (k - 1) * tau, a_loc, frame)
        release_remaining = True
    else:
        probs = [float(p) for p in schedule]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise LZError("probabilities must lie in [0, 1]")
        steps = [(k, t1 + (k - 1) * tau, p) for k, p in enumerate(probs, start=1)]
        t_off = (steps[-1][1] if steps else t1) + 0.5 * tau

    packets, timeline, probs_out = [], [], []
    incoming = PacketNode(0, None, 1.0, 1, FREE, position=float(trap.position(0.0)), birth_time=0.0)
    reservoir = PacketNode(1, 0, 0.0, 0, TRAPPED, position=x_m, birth_time=t1)
    next_id = 2
    for k, t, p in steps:
        probs_out.append(p)
        if k == 1:
            refl = 1.0 - p
            reservoir.fraction = p
            if refl > 0:
                packets.append(PacketNode(next_id, 0, refl, 1, FREE, k, x_m, frame.v_r, t))
                next_id += 1
            _timeline_add(timeline, t, f"mirror: P={p:.6g}, reflected {refl:.6g}")
        else:
            out = reservoir.fraction * p
            reservoir.fraction -= out
            if out > 0:
                packets.append(PacketNode(next_id, 1, out, 1, FREE, k, x_m, frame.v_r, t))
                next_id += 1
            _timeline_add(timeline, t, f"crossing {k}: P={p:.6g}, emitted {out:.6g}")
    if not steps:
        packets.append(incoming)
        return CascadeResult(packets, probs_out, timeline)
    if reservoir.fraction > 0 and release_remaining:
        reservoir.status = FREE
        reservoir.release_cycle = len(probs_out) + 1
        reservoir.birth_time = t_off
        _timeline_add(timeline, t_off, f"lattice off: released {reservoir.fraction:.6g}")
    if reservoir.fraction > 0:
        packets.append(reservoir)
    return CascadeResult(packets, probs_out, timeline)


# ------------------------------------------------------------ Bragg mirrors


BRAGG_DEPTHS = {1: 1.1, 2: 5.0, 3: 13.5}


@dataclass(frozen=True)
class BraggPrediction:
    order: int
    depth: float
    pulse_time: float
    acceleration: float
    transmitted: float  # P_t(n): tunnels into band n-1
    reflected: float
    next_mirror_transmission: Optional[float]  # P_t(n-1) for the transmitted branch


def bragg_split(order: int, trap: HarmonicTrap, depth: Optional[float] = None,
                frame: RecoilFrame = DEFAULT_FRAME) -> BraggPrediction:
    """Event-model prediction for a partial Bragg mirror of the given order."""
    depth = BRAGG_DEPTHS.get(order) if depth is None else depth
    if depth is None:
        raise LZError(f"no default depth for order {order}")
    t = bragg_pulse_time(order, trap, frame)
    a = local_acceleration(trap, t)
    p = probability_at_depth(depth, order, a, frame)
    nxt = probability_at_depth(depth, order - 1, a, frame) if order > 1 else None
    return BraggPrediction(order, depth, t, a, p, 1.0 - p, nxt)


# ------------------------------------------------------------ packet arrays


def simulate_array(trap: HarmonicTrap, p1: float = 0.5, cycles1: int = 3, p2: float = 0.5,
                   cycles2: Optional[int] = None, frame: RecoilFrame = DEFAULT_FRAME,
                   independent_second_stage: bool = False) -> CascadeResult:
    """Two-stage mirror sequence: a cascade at P1 followed by a second one at P2.

    Stage 1 is :func:`simulate_cascade` in the trap with ``cycles1`` crossings
    and the remainder released, giving ``cycles1 + 1`` clouds. The clouds
    traverse the trap and reach the P2 mirror one local Bloch period apart.
    At slot k of stage 2 the lowest-band reservoir emits a fraction ``p2``
    and the arriving cloud k is reflected with ``1 - p2`` while its
    transmitted part joins the reservoir, so row 1 holds one packet and every
    later row two. With ``independent_second_stage`` each cloud is simply
    split once (the short-pulse array).
    """
    stage1 = simulate_cascade([p1] * cycles1, trap, frame, release_remaining=True)
    clouds = sorted(stage1.released(), key=lambda c: c.birth_time)
    t1 = bragg_pulse_time(1, trap, frame)
    a_loc = local_acceleration(trap, t1)
    tau = bloch_period(a_loc, frame)
    # mirror-symmetric transit from (x_m, +v_r) to (-x_m, +v_r)
    s0 = math.asin(min(1.0, frame.v_r / (trap.omega * trap.r_max))) / trap.omega
    transit = 0.5 * trap.period - 2.0 * s0
    t2 = clouds[0].birth_time + transit
    x2 = -float(trap.position(t1))

    timeline = list(stage1.timeline)
    packets = []
    next_id = max(p.packet_id for p in stage1.packets) + 1

    if independent_second_stage:
        for c in clouds:
            t = c.birth_time + transit
            for frac, vel in ((c.fraction * (1.0 - p2), -frame.v_r), (c.fraction * p2, frame.v_r)):
                packets.append(PacketNode(next_id, c.packet_id, frac, 1, FREE, None, x2, vel, t))
                next_id += 1
            _timeline_add(timeline, t, f"P2 mirror: split cloud {c.packet_id}")
        packets.sort(key=lambda n: n.birth_time)
        for row, n in enumerate(packets, start=1):
            n.row = (row + 1) // 2
        return CascadeResult(packets, stage1.per_cycle_probabilities + [p2] * len(clouds), timeline)

    n_slots = len(clouds) if cycles2 is None else cycles2
    reservoir = 0.0
    feeder = None  # most recent cloud whose transmitted part joined the reservoir
    probs = list(stage1.per_cycle_probabilities)
    for k in range(1, n_slots + 1):
        t = t2 + (k - 1) * tau
        probs.append(p2)
        if reservoir > 0:
            out = reservoir * p2
            reservoir -= out
            packets.append(PacketNode(next_id, feeder, out, 1, FREE, k, x2, -frame.v_r, t, row=k))
            next_id += 1
        if k <= len(clouds):
            c = clouds[k - 1]
            refl = c.fraction * (1.0 - p2)
            reservoir += c.fraction * p2
            feeder = c.packet_id
            packets.append(PacketNode(next_id, c.packet_id, refl, 1, FREE, k, x2, -frame.v_r, t, row=k))
            next_id += 1
        _timeline_add(timeline, t, f"P2 slot {k}")
    t_end = t2 + n_slots * tau - 0.5 * tau
    for c in clouds[n_slots:]:
        packets.append(PacketNode(next_id, c.packet_id, c.fraction, 1, FREE, None, x2, -frame.v_r,
                                  c.birth_time + transit))
        next_id += 1
    if reservoir > 0:
        packets.append(PacketNode(next_id, feeder, reservoir, 0, FREE, n_slots + 1, x2, 0.0, t_end, row=n_slots + 1))
        _timeline_add(timeline, t_end, "lattice off: reservoir released")
    return CascadeResult(packets, probs, timeline)


def rows(result: CascadeResult) -> dict:
    """Group packets by their output row."""
    out = {}
    for p in result.packets:
        if p.row is not None:
            out.setdefault(p.row, []).append(p)
    return dict(sorted(out.items()))


# ----------------------------------------------------------------- export


def write_packet_tree_csv(result: CascadeResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["packet_id", "parent_id", "fraction", "band", "release_cycle", "release_time"])
        for p in result.packets:
            w.writerow([
                p.packet_id,
                "" if p.parent_id is None else p.parent_id,
                repr(float(p.fraction)),
                p.band,
                "" if p.release_cycle is None else p.release_cycle,
                repr(float(p.birth_time)) if p.status != TRAPPED else "",
            ])
