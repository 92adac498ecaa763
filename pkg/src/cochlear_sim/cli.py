"""Command-line experiments: stimuli through the model, files out.

Every subcommand writes its outputs plus a JSON run manifest into
``--out-dir``.  Desk-scale defaults (N=120, 40 ms, reduced feedback gain)
keep runs in the seconds; ``--full`` switches to the published scale
(N=500, 100 ms, full feedback gain), where runs take minutes.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (the
failing step index is printed to stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .auditory import (
    DEFAULT_SPL_LADDER,
    PipelineConfig,
    cochleagram,
    ihc_envelope,
    spl_ladder_similarity,
)
from .errors import CochlearModelError, ConfigError, NumericalBlowup
from .io import read_wav, write_csv, write_manifest, write_pgm16, write_wav
from .params import (
    PhysicalConstants,
    active_coefficients,
    coefficient_positions,
)
from .reference import build_semi_discrete, integrate
from .solver import SimConfig, simulate
from .stability import stability_sweep
from .stimuli import (
    Stimulus,
    excited_band,
    io_curve,
    make_chirp,
    make_impulse,
    make_tone,
    steady_state_profile,
    transit_time,
)

MODELS = ("passive", "linear", "nonlinear", "semidiscrete")

# The active joint model needs a fine spatial grid to be stable at full
# feedback gain; desk-scale grids run with the gain turned down.
DESK_GAMMA = 0.6
DEFAULT_STABILITY_GRID = tuple(range(48000, 192001, 16000))
IOCURVE_GRID = tuple(range(0, 141, 20))


def _add_common(p):
    p.add_argument("--N", type=int, default=None,
                   help="number of elements (default 120, or 500 with --full)")
    p.add_argument("--fs", type=float, default=128000.0,
                   help="sample rate in Hz")
    p.add_argument("--model", choices=MODELS, default="nonlinear")
    p.add_argument("--out-dir", default=None,
                   help="output directory (default $COCHLEAR_OUT_DIR or .)")
    p.add_argument("--gamma", type=float, default=None,
                   help="feedback gain (default 0.6 desk scale, 1.0 full)")
    p.add_argument("--dur-ms", type=float, default=None,
                   help="stimulus duration (default 40, or 100 with --full)")
    p.add_argument("--spl", type=float, default=0.0, help="stimulus SPL, dB")
    p.add_argument("--full", action="store_true",
                   help="published scale: N=500, 100 ms, gamma=1")
    p.add_argument("--stride", type=int, default=16,
                   help="time decimation of CSV/PGM outputs")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for sweep/ladder entries")
    p.add_argument("--seedless", action="store_true",
                   help="assert determinism by printing output hashes")


def _resolve(args):
    n = args.N if args.N is not None else (500 if args.full else 120)
    gamma = args.gamma if args.gamma is not None else (
        1.0 if args.full else DESK_GAMMA)
    dur_ms = args.dur_ms if args.dur_ms is not None else (
        100.0 if args.full else 40.0)
    out_dir = Path(args.out_dir or os.environ.get("COCHLEAR_OUT_DIR", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    constants = PhysicalConstants(N=n, gamma=gamma)
    return constants, dur_ms, out_dir


def _config_snapshot(args, constants, dur_ms):
    snap = {k: v for k, v in vars(args).items() if k != "func"}
    snap["resolved"] = {
        "N": constants.N, "gamma": constants.gamma, "L": constants.L,
        "H": constants.H, "dur_ms": dur_ms, "fs": args.fs,
    }
    return snap


def _run_model(stimulus, args, constants):
    """Dispatch a stimulus to the joint solver or the reference integrator."""
    if args.model == "semidiscrete":
        coeffs = active_coefficients(
            constants, coefficient_positions(constants))
        system = build_semi_discrete(constants, coeffs)
        return integrate(system, stimulus.samples, args.fs)
    cfg = SimConfig(constants=constants, mode=args.model, fs=args.fs)
    return simulate(stimulus.samples, cfg)


def _emit_response(name, stimulus, response, args, constants, dur_ms,
                   out_dir, t0, extra=None):
    stride = max(args.stride, 1)
    bm = response.bm[::stride]
    csv_path = out_dir / f"{name}_response.csv"
    write_csv(csv_path, bm, header=f"BM displacement, rows every "
              f"{stride / response.record_fs * 1000:.6g} ms")
    pgm_path = out_dir / f"{name}_cochleagram.pgm"
    env = ihc_envelope(bm, response.record_fs / stride)
    pgm_scale = write_pgm16(pgm_path, env)
    wav_path = out_dir / f"{name}_stimulus.wav"
    write_wav(wav_path, stimulus.samples, stimulus.fs)
    manifest = out_dir / f"{name}_manifest.json"
    meta = {"pgm_scale": pgm_scale}
    if extra:
        meta.update(extra)
    write_manifest(manifest, name, _config_snapshot(args, constants, dur_ms),
                   {}, [csv_path, pgm_path, wav_path],
                   time.time() - t0, __version__, extra=meta)
    if args.seedless:
        with open(manifest) as fh:
            for rec in json.load(fh)["outputs"]:
                print(f"{rec['sha256']}  {rec['path']}")
    return [csv_path, pgm_path, wav_path, manifest]


def cmd_impulse(args):
    t0 = time.time()
    constants, dur_ms, out_dir = _resolve(args)
    stim = make_impulse(args.fs, dur_ms / 1000.0, args.spl)
    response = _run_model(stim, args, constants)
    transit = transit_time(response)
    print(f"transit time: {transit * 1000:.2f} ms")
    _emit_response("impulse", stim, response, args, constants, dur_ms,
                   out_dir, t0, extra={"transit_ms": transit * 1000})
    return 0


def cmd_tone(args):
    t0 = time.time()
    constants, dur_ms, out_dir = _resolve(args)
    stim = make_tone(args.fs, dur_ms / 1000.0, args.f, args.spl)
    response = _run_model(stim, args, constants)
    window_ms = min(30.0, dur_ms / 4.0)
    profile = steady_state_profile(response, args.f, window_ms)
    peak_mm = response.positions[int(np.argmax(profile))] * 1000
    print(f"steady-state peak at {peak_mm:.2f} mm")
    out = out_dir / "tone_profile.csv"
    write_csv(out, np.column_stack([response.positions, profile]),
              header="position_m,magnitude")
    files = _emit_response("tone", stim, response, args, constants, dur_ms,
                           out_dir, t0, extra={"peak_mm": peak_mm,
                                               "frequency": args.f})
    files.append(out)
    return 0


def cmd_chirp(args):
    t0 = time.time()
    constants, dur_ms, out_dir = _resolve(args)
    stim = make_chirp(args.fs, dur_ms / 1000.0, args.f0, args.f1, args.spl)
    # Trailing silence lets the final wavefront finish travelling to its
    # place before the excited band is measured.
    tail = np.zeros(int(round(0.02 * args.fs)))
    padded = Stimulus(np.concatenate([stim.samples, tail]), stim.fs,
                      stim.spl_db, stim.kind)
    response = _run_model(padded, args, constants)
    bm = np.abs(response.bm)
    n_win = max(int(round(0.005 * response.record_fs)), 1)
    early = response.positions[int(bm[:n_win].max(axis=0).argmax())] * 1000
    late = excited_band(response)[1] * 1000
    print(f"excited band: {early:.2f} mm (start) -> {late:.2f} mm (end)")
    _emit_response("chirp", stim, response, args, constants, dur_ms,
                   out_dir, t0,
                   extra={"start_peak_mm": early, "end_peak_mm": late})
    return 0


def cmd_stability(args):
    t0 = time.time()
    constants, dur_ms, out_dir = _resolve(args)
    grid = args.fs_grid or list(DEFAULT_STABILITY_GRID)
    mode = args.model if args.model != "semidiscrete" else "linear"
    cfg = SimConfig(constants=constants, mode=mode, fs=grid[0])
    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            reports = list(pool.map(
                lambda f: stability_sweep([f], cfg)[0], grid))
    else:
        reports = stability_sweep(grid, cfg)
    rows = [(r.fs, r.max_eig_magnitude, float(r.stable)) for r in reports]
    out = out_dir / "stability.csv"
    write_csv(out, rows, header="fs_hz,max_eig_magnitude,stable")
    for r in reports:
        state = "stable" if r.stable else "unstable"
        detail = r.error or f"radius {r.max_eig_magnitude:.4f}"
        print(f"fs={r.fs:.0f}: {state} ({detail})")
    manifest = out_dir / "stability_manifest.json"
    write_manifest(manifest, "stability",
                   _config_snapshot(args, constants, dur_ms), {}, [out],
                   time.time() - t0, __version__)
    return 0


def cmd_iocurve(args):
    t0 = time.time()
    constants, dur_ms, out_dir = _resolve(args)
    mode = args.model if args.model != "semidiscrete" else "linear"
    cfg = SimConfig(constants=constants, mode=mode, fs=args.fs)
    spls = args.levels or list(IOCURVE_GRID)
    duration = dur_ms / 1000.0
    window_ms = min(30.0, dur_ms / 4.0)
    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            points = list(pool.map(
                lambda s: io_curve(args.f, [s], cfg, duration, window_ms)[0],
                spls))
    else:
        points = io_curve(args.f, spls, cfg, duration, window_ms)
    out = out_dir / "iocurve.csv"
    write_csv(out, points, header="spl_db,output_db")
    for spl, out_db in points:
        print(f"{spl:6.1f} dB in -> {out_db:8.2f} dB out")
    manifest = out_dir / "iocurve_manifest.json"
    write_manifest(manifest, "iocurve",
                   _config_snapshot(args, constants, dur_ms), {}, [out],
                   time.time() - t0, __version__)
    return 0


def cmd_cochleagram(args):
    t0 = time.time()
    constants, dur_ms, out_dir = _resolve(args)
    audio, fs_in = read_wav(args.wav)
    mode = args.model if args.model != "semidiscrete" else "nonlinear"
    pipe = PipelineConfig(fs_model=args.fs)
    outputs = []
    extra = {"input_rate": fs_in, "resampled_to": args.fs}
    if args.spl_ladder:
        c_mean, s_mean, ladder = spl_ladder_similarity(
            audio, fs_in, pipe, constants, mode, record_stride=args.stride)
        for spl in ladder:
            cg = cochleagram(audio, fs_in, spl, pipe, constants, mode,
                             record_stride=args.stride)
            pgm = out_dir / f"cochleagram_{int(spl)}db.pgm"
            write_pgm16(pgm, cg.field)
            outputs.append(pgm)
        extra.update({"ladder": list(ladder),
                      "cochleagram_similarity": c_mean,
                      "spectrogram_similarity": s_mean})
        print(f"cochleagram similarity {c_mean:.4f} vs "
              f"spectrogram {s_mean:.4f}")
    else:
        cg = cochleagram(audio, fs_in, args.spl, pipe, constants, mode,
                         record_stride=args.stride)
        csv_path = out_dir / "cochleagram.csv"
        write_csv(csv_path, cg.field, header="IHC envelope field")
        pgm = out_dir / "cochleagram.pgm"
        scale = write_pgm16(pgm, cg.field)
        extra["pgm_scale"] = scale
        outputs += [csv_path, pgm]
    manifest = out_dir / "cochleagram_manifest.json"
    write_manifest(manifest, "cochleagram",
                   _config_snapshot(args, constants, dur_ms),
                   {"wav": args.wav}, outputs,
                   time.time() - t0, __version__, extra=extra)
    if args.seedless:
        with open(manifest) as fh:
            for rec in json.load(fh)["outputs"]:
                print(f"{rec['sha256']}  {rec['path']}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cochlear-sim",
        description="Cochlear model experiments from the command line.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("impulse", help="impulse response and transit time")
    _add_common(p)
    p.set_defaults(func=cmd_impulse)

    p = sub.add_parser("tone", help="single-tone steady-state profile")
    _add_common(p)
    p.add_argument("--f", type=float, default=3700.0, help="tone frequency")
    p.set_defaults(func=cmd_tone)

    p = sub.add_parser("chirp", help="frequency sweep response")
    _add_common(p)
    p.add_argument("--f0", type=float, default=16000.0)
    p.add_argument("--f1", type=float, default=2000.0)
    p.set_defaults(func=cmd_chirp)

    p = sub.add_parser("stability", help="spectral-radius sweep over fs")
    _add_common(p)
    p.add_argument("--fs-grid", type=float, nargs="*", default=None,
                   help="sample rates to test (default 48k..192k step 16k)")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("iocurve", help="input-output compression curve")
    _add_common(p)
    p.add_argument("--f", type=float, default=3700.0)
    p.add_argument("--levels", type=float, nargs="*", default=None,
                   help="input SPLs (default 0..140 step 20)")
    p.set_defaults(func=cmd_iocurve)

    p = sub.add_parser("cochleagram", help="WAV through the full ear pipeline")
    _add_common(p)
    p.add_argument("wav", help="mono WAV input")
    p.add_argument("--spl-ladder", action="store_true",
                   help="run the 0-120 dB ladder with a similarity report")
    p.set_defaults(func=cmd_cochleagram)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except NumericalBlowup as exc:
        print(f"numerical failure at step {exc.step}: {exc}",
              file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CochlearModelError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
