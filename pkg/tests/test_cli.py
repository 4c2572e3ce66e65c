import csv

import numpy as np
import pytest

from latsplit import scenario as sc
from latsplit.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_band_free_particle(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["band", "--depth", "0", "--bands", "2", "--nq", "5", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["q", "E_0", "E_1"]
    q = np.array([float(r[0]) for r in rows[1:]])
    assert np.allclose([float(r[1]) for r in rows[1:]], q**2)


def test_band_depth_five(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["band", "--depth", "5", "--out", str(out)]) == 0
    assert len(read_csv(out)[0]) == 5
    assert "gap 2: 0.679128 E_r" in capsys.readouterr().out


def test_band_errors(tmp_path, monkeypatch):
    assert main(["band", "--depth", "-1", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["band", "--depth", "1", "--out", str(tmp_path / "missing" / "x.csv")]) == 4
    monkeypatch.setattr("latsplit.bands.CONVERGENCE_TOL", 0.0)
    assert main(["band", "--depth", "20", "--out", str(tmp_path / "x.csv")]) == 3


def test_schedule_equal_split(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["schedule", "--equal-split", "6", "--out", str(out)]) == 0
    rows = read_csv(out)[1:]
    assert [float(r[1]) for r in rows] == pytest.approx([1 / 6, 1 / 5, 1 / 4, 1 / 3, 1 / 2])


def test_schedule_fractions_and_single(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["schedule", "--fractions", "0.5", "0.5", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 2 and float(rows[1][2]) == pytest.approx(0.8943, abs=1e-4)
    assert main(["schedule", "--equal-split", "1", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 1
    assert "release only" in capsys.readouterr().out
    assert main(["schedule", "--fractions", "0.5", "0.7", "--out", str(out)]) == 2


def test_schedule_writes_valid_scenario(tmp_path):
    scen = tmp_path / "f2.txt"
    assert main(["schedule", "--equal-split", "3", "--out", str(tmp_path / "s.csv"), "--scenario-out", str(scen)]) == 0
    assert sc.parse_scenario(scen.read_text()).kind == "split"


def test_run_missing_and_invalid(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("name = x\nwobble = 3\ngrid.points = 1000\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "unknown key 'wobble'" in err and "power of two" in err
    assert main(["run", "--preset", "fig0", "--out", str(tmp_path / "o")]) == 2


def test_run_event_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--preset", "fig2-equal-split", "--out", str(a)]) == 0
    assert main(["run", "--preset", "fig2-equal-split", "--out", str(b)]) == 0
    for name in ("packets_event.csv", "scenario.txt", "timeline.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = (a / "manifest.txt").read_text()
    for name in ("packets_event.csv", "scenario.txt", "timeline.txt", "manifest.txt"):
        assert f"= {name}" in manifest
    assert f"scenario_sha256 = {sc.scenario_hash(sc.preset('fig2-equal-split'))}" in manifest


@pytest.mark.parametrize("name", sorted(sc.PRESETS))
def test_every_preset_runs_with_defaults(tmp_path, name):
    assert main(["run", "--preset", name, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest.txt").stat().st_size > 0


def test_run_both_writes_comparison(tmp_path):
    s = sc.synthesize_split_scenario([0.5, 0.5])
    path = tmp_path / "two.txt"
    path.write_text(sc.serialize_scenario(s))
    out = tmp_path / "o"
    assert main(["run", str(path), "--engine", "both", "--out", str(out)]) == 0
    rows = read_csv(out / "comparison.csv")
    assert rows[0] == ["item", "event", "wave"]
    assert len(rows) == 3
    for _, ev, wv in rows[1:]:
        assert float(wv) == pytest.approx(float(ev), abs=0.03)


def test_analyze_two_gaussians(tmp_path, capsys):
    x = np.linspace(-100e-6, 100e-6, 2001)
    dens = np.exp(-((x + 30e-6) ** 2) / (2 * 4e-6**2)) + np.exp(-((x - 30e-6) ** 2) / (2 * 4e-6**2))
    path = tmp_path / "d.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "density"])
        w.writerows(zip(x, dens))
    out = tmp_path / "p.csv"
    assert main(["analyze", str(path), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "packet_count = 2" in text
    assert "populations = 0.5 0.5" in text
    assert len(read_csv(out)) == 3


def test_analyze_time_series_keeps_last_frame(tmp_path, capsys):
    path = tmp_path / "d.csv"
    p = np.linspace(-5, 5, 501)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "p", "density"])
        w.writerows((0.0, pi, np.exp(-pi**2 / 0.1)) for pi in p)
        w.writerows((1.0, pi, np.exp(-(pi - 2) ** 2 / 0.1) + np.exp(-(pi + 2) ** 2 / 0.1)) for pi in p)
    assert main(["analyze", str(path)]) == 0
    text = capsys.readouterr().out
    assert "axis = momentum" in text and "packet_count = 2" in text


def test_analyze_bad_input(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["analyze", str(empty)]) == 2
    assert main(["analyze", str(tmp_path / "none.csv")]) == 4


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.split() == sorted(sc.PRESETS)
