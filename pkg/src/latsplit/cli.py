"""Command-line front end: ``latsplit {band,schedule,run,analyze,presets}``."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, bands, lz
from . import scenario as sc
from .schedule import ScheduleError
from .units import LAMBDA_LATTICE, MASS_RB87, RecoilFrame, UnitsError
from .wavesolver import DensityRecorder, SolverError

EXIT_OK, EXIT_USAGE, EXIT_ACCURACY, EXIT_IO = 0, 2, 3, 4
log = logging.getLogger("latsplit")


class RunManifest:
    """Plain-text ``key = value`` record of one ``run`` invocation."""

    def __init__(self, scenario: sc.Scenario, engine: str):
        self.scenario = scenario
        self.engine = engine
        self.started = _now()
        self.finished = None
        self.files = []

    def add(self, path: Path) -> Path:
        self.files.append(Path(path).name)
        return path

    def text(self) -> str:
        s = self.scenario
        rows = [
            ("software_version", __version__),
            ("scenario_name", s.name),
            ("scenario_sha256", sc.scenario_hash(s)),
            ("engine", self.engine),
            ("started", self.started),
            ("finished", self.finished or _now()),
            ("solver.dt_t_r", repr(s.dt)),
            ("solver.grid_points", str(s.n_points)),
            ("solver.x_min_m", repr(s.x_min)),
            ("solver.x_max_m", repr(s.x_max)),
            ("solver.t_end_s", repr(s.t_end)),
        ]
        rows += [(f"file.{i}", name) for i, name in enumerate(sorted(self.files))]
        return "".join(f"{k} = {v}\n" for k, v in rows)

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        path = out_dir / "manifest.txt"
        self.files.append(path.name)
        path.write_text(self.text())
        return path


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _frame(args) -> RecoilFrame:
    return RecoilFrame(args.frame_wavelength, args.frame_mass)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ----------------------------------------------------------------- band


def cmd_band(args) -> int:
    if args.depth < 0:
        raise bands.BandError(f"depth must be >= 0, got {args.depth}")
    bs = bands.compute_bands(args.depth, args.bands, bands.default_q_grid(args.nq), args.truncation)
    bands.write_bands_csv(bs, args.out)
    if args.depth > 0:
        for n in range(1, args.bands):
            print(f"gap {n}: {bands.band_gap(bs, n):.6g} E_r")
    return EXIT_OK


# ------------------------------------------------------------- schedule


def cmd_schedule(args) -> int:
    frame = _frame(args)
    if args.bragg is not None:
        s = sc.synthesize_bragg_scenario(args.bragg, frame=frame, depth=args.depth)
        p = lz.bragg_split(args.bragg, lz.HarmonicTrap(s.trap_omega, s.trap_center), s.schedule.segments[0].depth_start, frame)
        seg = s.schedule.segments[0]
        plan = [sc.Plateau(1, p.transmitted, seg.depth_start, seg.t_start, seg.t_end)]
    else:
        fractions = [1.0 / args.equal_split] * args.equal_split if args.equal_split else args.fractions
        if not fractions:
            raise sc.ScenarioError(["give --equal-split M, --fractions ... or --bragg N"])
        s = sc.synthesize_split_scenario(fractions, frame=frame, release_cycles=args.release_cycles)
        plan = [] if len(fractions) == 1 else sc.split_plan(fractions, frame, release_cycles=args.release_cycles)
        plan = [pl for pl in plan if pl.depth > 0]
    sc.write_schedule_csv(plan, args.out)
    if args.scenario_out:
        Path(args.scenario_out).write_text(sc.serialize_scenario(s))
    for pl in plan:
        print(f"cycle {pl.cycle_index}: P = {pl.probability:.6g}, depth = {pl.depth:.6g} E_r")
    if not plan:
        print("release only: no splitting plateaus")
    return EXIT_OK


# ------------------------------------------------------------------ run


def _load_scenario(args) -> sc.Scenario:
    if args.preset:
        s = sc.preset(args.preset)
    elif args.scenario:
        path = Path(args.scenario)
        if not path.is_file():
            raise sc.ScenarioError([f"scenario file {str(path)!r} not found"])
        s = sc.parse_scenario(path.read_text())
    else:
        raise sc.ScenarioError(["give a scenario file or --preset NAME"])
    overrides = {}
    if args.frame_wavelength != LAMBDA_LATTICE:
        overrides["wavelength"] = args.frame_wavelength
    if args.frame_mass != MASS_RB87:
        overrides["mass"] = args.frame_mass
    return replace(s, **overrides) if overrides else s


def _lz_point(depth, wavelength, mass, engine):
    return sc.lz_scan([depth], RecoilFrame(wavelength, mass), engine)[0]


def _run_lz_scan(s, out, manifest, engine, jobs):
    depths = [float(d) for d in s.meta_get("depths", str(s.meta_get("depth"))).split()]
    args = [(d, s.wavelength, s.mass, engine) for d in depths]
    if jobs > 1 and engine != "event":
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_lz_point, *zip(*args)))
    else:
        rows = [_lz_point(*a) for a in args]
    _write_rows(manifest.add(out / "lz_curve.csv"), ["depth_E_r", "gap_E_r", "p_eq1", "p_wave"], rows)
    for d, gap, pred, sim in rows:
        print(f"depth {d:g} E_r: Eq-1 {pred:.4f}" + ("" if sim is None else f", wave {sim:.4f}"))


def _event_fractions(result):
    if isinstance(result, lz.BraggPrediction):
        return [result.transmitted, result.reflected]
    return [p.fraction for p in sorted(result.released() or result.packets, key=lambda n: n.birth_time)]


def _run_event(s, out, manifest):
    result = sc.run_event(s)
    if isinstance(result, lz.BraggPrediction):
        _write_rows(manifest.add(out / "bragg_event.csv"),
                    ["order", "depth_E_r", "pulse_time", "acceleration", "transmitted", "reflected"],
                    [(result.order, result.depth, result.pulse_time, result.acceleration, result.transmitted,
                      result.reflected)])
        print(f"event: transmitted {result.transmitted:.4f}, reflected {result.reflected:.4f}")
        return result
    lz.write_packet_tree_csv(result, manifest.add(out / "packets_event.csv"))
    lines = [f"{t!r} s: {text}" for t, text in result.timeline]
    manifest.add(out / "timeline.txt").write_text("\n".join(lines) + "\n")
    fr = _event_fractions(result)
    print(f"event: {len(fr)} packets, uniformity {np.std(fr) / np.mean(fr):.3g}")
    if s.kind == "array":
        for row, members in lz.rows(result).items():
            print(f"  row {row}: " + " ".join(f"{m.fraction:.4f}" for m in members))
    return result


def _run_wave(s, out, manifest):
    rec = DensityRecorder(s.frame) if s.density_stride else None
    if s.kind == "bragg":
        m = sc.measure_bragg(s)
        _write_rows(manifest.add(out / "bragg_wave.csv"),
                    ["order", "transmitted", "reflected", "retained", "momentum_separation", "tof_separation_m",
                     "unaffected", "shifted"],
                    [(m.order, m.transmitted, m.reflected, m.retained, m.separation, m.tof_separation,
                      int(m.unaffected), int(m.shifted))])
        print(f"wave: transmitted {m.transmitted:.4f}, reflected {m.reflected:.4f}")
        if m.tof_separation is not None:
            print(f"wave: TOF separation {m.tof_separation * 1e6:.1f} um")
        return m
    run = sc.run_wave(s, recorder=rec)
    if rec is not None:
        rec.write_density(manifest.add(out / "density.csv"))
    p, dens = analysis.momentum_distribution(run.final)
    _write_rows(manifest.add(out / "momentum_final.csv"), ["p", "density"], zip(p, dens))
    ps = sc.split_packets(run)
    if run.expanded is not None:
        x = run.expanded.grid.x / s.frame.k_r
        rho = run.expanded.density() * s.frame.k_r
        _write_rows(manifest.add(out / "density_tof.csv"), ["x", "density"], zip(x, rho))
        if s.kind == "array":  # clouds share momenta; they separate in position after the flight
            ps = analysis.detect_packets(rho, x, min_separation=analysis.MIN_SEP_POSITION)
    analysis.write_packets_csv(ps, manifest.add(out / "packets_wave.csv"))
    manifest.add(out / "summary_wave.txt").write_text(analysis.summary_text(ps))
    print(f"wave: {len(ps)} packets" + (f", uniformity {analysis.uniformity(ps):.3g}" if len(ps) else ""))
    return ps


def _write_comparison(out, manifest, event, wave):
    if isinstance(event, lz.BraggPrediction):
        rows = [("transmitted", event.transmitted, wave.transmitted), ("reflected", event.reflected, wave.reflected)]
    else:
        ev = _event_fractions(event)
        wv = sorted(wave.packets, key=lambda pk: pk.centroid)
        wv = [pk.population for pk in wv]
        n = max(len(ev), len(wv))
        rows = [(i + 1, ev[i] if i < len(ev) else None, wv[i] if i < len(wv) else None) for i in range(n)]
    _write_rows(manifest.add(out / "comparison.csv"), ["item", "event", "wave"], rows)


def cmd_run(args) -> int:
    s = _load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(s, args.engine)
    manifest.add(out / "scenario.txt").write_text(sc.serialize_scenario(s))
    log.info("running %s with engine %s", s.name, args.engine)
    if s.kind == "lz-scan":
        _run_lz_scan(s, out, manifest, args.engine, args.jobs)
    else:
        event = wave = None
        if args.engine in ("event", "both"):
            event = _run_event(s, out, manifest)
        if args.engine in ("wave", "both"):
            wave = _run_wave(s, out, manifest)
        if event is not None and wave is not None and s.kind != "array":
            _write_comparison(out, manifest, event, wave)
    manifest.write(out)
    return EXIT_OK


# -------------------------------------------------------------- analyze


def _read_density_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise analysis.AnalysisError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if "t" in header:  # time series: keep the last frame
        t = data[:, header.index("t")]
        data = data[t == t.max()]
        header = [h for h in header if h != "t"]
        data = np.delete(data, rows[0].index("t"), axis=1)
    if len(header) != 2:
        raise analysis.AnalysisError(f"{path}: expected columns (coordinate, density)")
    axis = "momentum" if header[0] == "p" else "position"
    return data[:, 0], data[:, 1], axis


def cmd_analyze(args) -> int:
    path = Path(args.density_csv)
    if not path.is_file():
        raise OSError(f"{path}: no such file")
    coords, dens, axis = _read_density_csv(path)
    axis = args.axis or axis
    min_sep = args.min_separation
    if min_sep is None:
        min_sep = analysis.MIN_SEP_MOMENTUM if axis == "momentum" else analysis.MIN_SEP_POSITION
    ps = analysis.detect_packets(dens, coords, args.threshold, min_sep, axis)
    if args.out:
        analysis.write_packets_csv(ps, args.out)
    text = analysis.summary_text(ps)
    if len(ps) >= 2:
        c = np.sort(ps.centroids)
        text += "separations = " + " ".join(f"{d:.6g}" for d in np.diff(c)) + "\n"
    sys.stdout.write(text)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in sorted(sc.PRESETS):
        print(name)
    return EXIT_OK


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latsplit", description=__doc__)
    p.add_argument("--frame-wavelength", type=float, default=LAMBDA_LATTICE, help="lattice wavelength in metres")
    p.add_argument("--frame-mass", type=float, default=MASS_RB87, help="atom mass in kg")
    p.add_argument("--jobs", type=int, default=1, help="parallel simulations for parameter scans")
    p.add_argument("--verbose", "-v", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("band", help="band structure CSV")
    b.add_argument("--depth", type=float, required=True, help="lattice depth in E_r")
    b.add_argument("--bands", type=int, default=4)
    b.add_argument("--nq", type=int, default=bands.DEFAULT_NQ)
    b.add_argument("--truncation", type=int, default=bands.DEFAULT_TRUNCATION)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_band)

    s = sub.add_parser("schedule", help="synthesize a depth schedule")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--equal-split", type=int, metavar="M")
    g.add_argument("--fractions", type=float, nargs="+")
    g.add_argument("--bragg", type=int, metavar="ORDER")
    s.add_argument("--release-cycles", type=int, nargs="+")
    s.add_argument("--depth", type=float, help="Bragg pulse depth in E_r")
    s.add_argument("--out", required=True)
    s.add_argument("--scenario-out", help="also write the full scenario file")
    s.set_defaults(func=cmd_schedule)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("scenario", nargs="?")
    r.add_argument("--preset")
    r.add_argument("--engine", choices=("event", "wave", "both"), default="event")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="detect packets in a density CSV")
    a.add_argument("density_csv")
    a.add_argument("--axis", choices=("position", "momentum"))
    a.add_argument("--threshold", type=float, default=analysis.DEFAULT_THRESHOLD)
    a.add_argument("--min-separation", type=float)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    sub.add_parser("presets", help="list presets").set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (sc.ScenarioError, ScheduleError) as exc:
        for issue in exc.issues:
            print(f"error: {issue}", file=sys.stderr)
        return EXIT_USAGE
    except (bands.BandAccuracyError, SolverError) as exc:
        print(f"accuracy error: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except (bands.BandError, lz.LZError, analysis.AnalysisError, UnitsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
