import numpy as np
import pytest
from hypothesis import given, strategies as st

from latsplit.schedule import DepthSchedule, Event, ScheduleError, Segment, smoothstep


def test_shapes():
    lin = Segment(0.0, 1.0, "linear", 0.0, 2.0)
    s = Segment(0.0, 1.0, "s-curve", 0.0, 2.0)
    assert lin.value(0.25) == pytest.approx(0.5)
    assert s.value(0.5) == pytest.approx(1.0)
    assert s.value(0.25) == pytest.approx(2 * (3 * 0.0625 - 2 * 0.015625))


def test_right_continuous_and_gaps():
    sched = DepthSchedule([Segment(0, 1, "hold", 1.0, 1.0), Segment(1, 2, "hold", 2.0, 2.0),
                           Segment(3, 4, "hold", 3.0, 3.0)])
    assert sched.depth(1.0) == 2.0
    assert sched.depth(2.5) == 0.0
    assert sched.depth(-1.0) == 0.0
    assert sched.depth(4.0) == 0.0
    assert np.allclose(sched.depth(np.array([0.5, 1.5, 3.5])), [1, 2, 3])


def test_lattice_off_wins():
    sched = DepthSchedule([Segment(0, 2, "hold", 1.0, 1.0)], [Event(1.0, "lattice_off")])
    assert sched.depth(0.99) == 1.0
    assert sched.depth(1.0) == 0.0
    assert sched.lattice_off_time() == 1.0


def test_itemized_errors():
    with pytest.raises(ScheduleError) as info:
        DepthSchedule([Segment(0, 1, "hold", 1.0, 1.0), Segment(0.5, 2, "ramp", 0.0, 40.0)],
                      [Event(0.1, "trap_displace")])
    issues = info.value.issues
    assert any(i.startswith("segment[1]: unknown shape") for i in issues)
    assert any("depth_end" in i for i in issues)
    assert any("overlap" in i for i in issues)
    assert any(i.startswith("event[0]") for i in issues)


def test_hold_needs_constant_depth():
    with pytest.raises(ScheduleError):
        DepthSchedule([Segment(0, 1, "hold", 1.0, 2.0)])


def test_events_sorted():
    sched = DepthSchedule([], [Event(2.0, "release"), Event(1.0, "trap_off")])
    assert [e.kind for e in sched.events] == ["trap_off", "release"]


@given(st.floats(-1.0, 2.0))
def test_smoothstep_bounded(u):
    assert 0.0 <= smoothstep(u) <= 1.0


@given(st.floats(0.0, 30.0), st.floats(0.0, 30.0), st.sampled_from(["linear", "s-curve"]), st.floats(0.0, 1.0))
def test_ramps_stay_between_endpoints(a, b, shape, u):
    seg = Segment(0.0, 1.0, shape, a, b)
    v = seg.value(u)
    assert min(a, b) - 1e-12 <= v <= max(a, b) + 1e-12
