"""Band structure checked against Mathieu characteristic values.

With V(x) = V0 sin^2(x) the Schrodinger equation is Mathieu's equation with
q = V0/4 (up to a half-period shift), so E = V0/2 + a_n(q) at band edges and
the n-th gap is |a_n(q) - b_n(q)|.
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import mathieu_a, mathieu_b

from latsplit.bands import (BandAccuracyError, BandError, band_gap, bloch_states, compute_bands, default_q_grid,
                            gap_at_depth, gap_location, write_bands_csv)


def mathieu_gap(depth, n):
    q = depth / 4.0
    return abs(mathieu_a(n, q) - mathieu_b(n, q))


def test_free_particle_parabola():
    bs = compute_bands(0.0, 3)
    q = bs.q_grid
    # lowest free band is q^2; second is (|q| - 2)^2 folded into the zone
    assert np.allclose(bs.band(0), q**2, atol=1e-12)
    assert np.allclose(bs.band(1), (np.abs(q) - 2) ** 2, atol=1e-12)


@pytest.mark.parametrize("depth", [0.5, 1.1, 2.4, 5.0, 13.5, 30.0])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_gaps_match_mathieu(depth, n):
    assert gap_at_depth(depth, n) == pytest.approx(mathieu_gap(depth, n), rel=1e-8, abs=1e-11)


def test_band_bottom_matches_mathieu():
    bs = compute_bands(5.0, 4)
    assert bs.band(0).min() == pytest.approx(2.5 + mathieu_a(0, 1.25), abs=1e-10)


def test_frozen_gaps():
    # frozen from the diagonalization (cross-checked by the Mathieu oracle above)
    assert gap_at_depth(2.4, 1) == pytest.approx(1.1932967165, abs=1e-9)
    assert gap_at_depth(5.0, 2) == pytest.approx(0.6791283037, abs=1e-9)
    assert gap_at_depth(13.5, 3) == pytest.approx(0.9346123950, abs=1e-9)


def test_weak_lattice_first_gap_is_half_depth():
    # first-order perturbation theory: Delta_1 = 2 |V_1| = V0 / 2
    assert gap_at_depth(0.01, 1) == pytest.approx(0.005, rel=1e-4)


def test_gap_location():
    assert gap_location(1) == 1.0
    assert gap_location(2) == 0.0
    assert gap_location(3) == 1.0
    with pytest.raises(BandError):
        gap_location(0)


def test_band_gap_from_structure_agrees():
    bs = compute_bands(5.0, 4)
    assert band_gap(bs, 2) == pytest.approx(gap_at_depth(5.0, 2), abs=1e-12)


def test_errors():
    with pytest.raises(BandError):
        compute_bands(-1.0)
    with pytest.raises(BandError):
        compute_bands(1.0, n_bands=0)
    with pytest.raises(BandError):
        compute_bands(1.0, q_grid=np.array([0.0, 1.5]))


def test_accuracy_error_when_not_converged(monkeypatch):
    monkeypatch.setattr("latsplit.bands.CONVERGENCE_TOL", 0.0)
    with pytest.raises(BandAccuracyError):
        compute_bands(30.0, n_bands=8, truncation=12)


def test_bloch_states_orthonormal():
    w, v, l = bloch_states(5.0, 0.3, 4)
    assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
    assert np.all(np.diff(w) > 0)


def test_csv(tmp_path):
    bs = compute_bands(1.0, 2, default_q_grid(5))
    path = tmp_path / "b.csv"
    write_bands_csv(bs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "q,E_0,E_1"
    assert len(lines) == 6


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 30.0))
def test_bands_sorted_and_symmetric(depth):
    bs = compute_bands(depth, 4, default_q_grid(33))
    e = bs.energies
    assert np.all(np.diff(e, axis=1) >= -1e-12)
    assert np.allclose(e, e[::-1], atol=1e-10)  # E(q) = E(-q)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 30.0), st.floats(-1.0, 1.0))
def test_matches_dense_diagonalization(depth, q):
    l = np.arange(-14, 15)
    h = np.diag((q + 2 * l) ** 2 + depth / 2) - depth / 4 * (np.eye(29, k=1) + np.eye(29, k=-1))
    ref = np.linalg.eigvalsh(h)[:3]
    assert np.allclose(compute_bands(depth, 3, np.array([q])).energies[0], ref, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 29.0), st.floats(0.05, 1.0))
def test_gap_grows_with_depth(depth, dv):
    for n in (1, 2, 3):
        assert gap_at_depth(depth + dv, n) > gap_at_depth(depth, n)
