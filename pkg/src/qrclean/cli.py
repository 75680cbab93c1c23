"""Command-line interface.

One subcommand per pipeline stage (corrupt, denoise, estimate-psf,
deconvolve, threshold), the end-to-end clean command, geometry/mask
inspection, and the benchmark sweep.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .bench import (DecoderAdapter, PRESETS, bundled_decoder_command,
                    emit_phase_diagram, parse_sweep_toml, preset_spec,
                    run_sweep)
from .deconv import DeconvConfig, atv_deconvolve, estimate_lambda2
from .degrade import BlurSpec, CorruptionSpec, NoiseSpec, corrupt
from .imgops import read_image, read_kernel, write_image, write_kernel
from .pipeline import PipelineConfig, clean, known_reference
from .psf import (PsfEstimateConfig, estimate_psf_full, select_kernel_scored)
from .qrgeom import c1_region, infer_geometry, required_pattern_mask
from .threshold import threshold_per_block, threshold_per_pixel
from .tvflow import TvFlowParams, denoise


def _write_trace_csv(path: str, trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,corner_dist\n")
        for t, d in zip(trace.times, trace.corner_dist):
            fh.write(f"{t!r},{d!r}\n")


def _write_threshold_csv(path: str, report) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# chosen: {report.chosen!r}\n")
        fh.write("candidate,score\n")
        for c, s in zip(report.candidates, report.scores):
            fh.write(f"{c!r},{s!r}\n")


def _cmd_corrupt(args) -> int:
    z = read_image(args.infile)
    blur = BlurSpec.from_string(args.blur)
    noise = NoiseSpec.from_string(args.noise).with_seed(args.seed)
    write_image(args.out, corrupt(z, CorruptionSpec(blur, noise)))
    return 0


def _cmd_denoise(args) -> int:
    f = read_image(args.infile)
    z = read_image(args.clean)
    g = infer_geometry(z)
    c1 = c1_region(g)
    zref = known_reference(z, g)
    u1, trace = denoise(f, zref[c1.slices], c1, TvFlowParams())
    write_image(args.out, u1)
    if args.trace:
        _write_trace_csv(args.trace, trace)
    return 0


def _cmd_estimate_psf(args) -> int:
    u1 = read_image(args.u1)
    z = read_image(args.clean)
    g = infer_geometry(z)
    c1 = c1_region(g)
    zref = known_reference(z, g)
    cfg = PsfEstimateConfig(lambda1=args.lambda1)
    full = estimate_psf_full(u1[c1.slices], zref[c1.slices], args.lambda1)
    kernel, scored = select_kernel_scored(full, zref, u1, c1, cfg)
    write_kernel(args.out, kernel)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write("size,residual\n")
            for size, residual in scored:
                fh.write(f"{size},{residual!r}\n")
    print(f"selected kernel size {kernel.size}")
    return 0


def _cmd_deconvolve(args) -> int:
    u1 = read_image(args.infile)
    kernel = read_kernel(args.psf)
    if args.lambda2 == "auto":
        if not args.clean:
            print("error: --lambda2 auto needs --clean to calibrate against",
                  file=sys.stderr)
            return 2
        z = read_image(args.clean)
        g = infer_geometry(z)
        lam2 = estimate_lambda2(known_reference(z, g), u1, kernel, c1_region(g))
        print(f"lambda2 (auto) = {lam2!r}")
    else:
        lam2 = float(args.lambda2)
    u2 = atv_deconvolve(u1, kernel, DeconvConfig(lambda2=lam2))
    write_image(args.out, u2)
    return 0


def _cmd_threshold(args) -> int:
    u2 = read_image(args.infile)
    z = read_image(args.clean)
    g = infer_geometry(z)
    c1 = c1_region(g)
    zref = known_reference(z, g)
    if args.mode == "pixel":
        u3, report = threshold_per_pixel(u2, zref, c1)
    else:
        u3, report = threshold_per_block(u2, zref, c1, g)
    write_image(args.out, u3)
    if args.report:
        _write_threshold_csv(args.report, report)
    return 0


def _cmd_clean(args) -> int:
    f = read_image(args.infile)
    z = read_image(args.clean)
    g = infer_geometry(z)
    cfg = PipelineConfig(variant=args.variant, lambda1=args.lambda1)
    result = clean(f, z, g, cfg)
    write_image(args.out, result.u3_final)
    if args.artifacts:
        os.makedirs(args.artifacts, exist_ok=True)
        write_image(os.path.join(args.artifacts, "u1.png"), result.u1)
        if result.u2 is not None:
            write_image(os.path.join(args.artifacts, "u2.png"), result.u2)
        if result.psf is not None:
            write_kernel(os.path.join(args.artifacts, "psf.pgm"), result.psf)
        _write_trace_csv(os.path.join(args.artifacts, "trace.csv"),
                         result.trace)
        _write_threshold_csv(os.path.join(args.artifacts, "thr.csv"),
                             result.threshold)
    for stage, seconds in result.timings.items():
        print(f"{stage}: {seconds:.2f}s")
    return 0


def _cmd_qr_geom(args) -> int:
    z = read_image(args.clean)
    g = infer_geometry(z)
    print(f"modules {g.modules} (version {g.version}), "
          f"module {g.module_px}px, quiet {g.quiet_px}px, "
          f"extent {g.extent}px")
    if args.dump_mask:
        mask = required_pattern_mask(g)
        write_image(args.dump_mask + "_known.pgm",
                    mask.known.astype(np.float64))
        write_image(args.dump_mask + "_values.pgm", mask.values)
    return 0


def _cmd_sweep(args) -> int:
    if bool(args.spec) == bool(args.preset):
        print("error: give exactly one of --spec or --preset", file=sys.stderr)
        return 2
    if args.spec:
        spec = parse_sweep_toml(args.spec)
    else:
        if not args.codes:
            print("error: --preset needs --codes", file=sys.stderr)
            return 2
        spec = preset_spec(args.preset, args.codes, args.payloads)
    adapter = DecoderAdapter(args.decoder, timeout=args.timeout)
    diagrams = run_sweep(spec, spec.pipeline_config(), adapter,
                         master_seed=args.seed, workers=args.workers)
    for pd in diagrams:
        out_dir = (args.out if len(diagrams) == 1
                   else os.path.join(args.out, pd.code_id))
        paths = emit_phase_diagram(pd, out_dir)
        print(f"{pd.code_id}: wrote {paths['cells']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrclean",
        description="Restore blurred, noisy QR codes via TV regularization.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corrupt", help="blur and add noise to a clean code")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--blur", default="none",
                   help="gaussian:SIZE,SIGMA | motion:LENGTH[,ANGLE] | none")
    p.add_argument("--noise", default="none",
                   help="gauss:STD | uni:WIDTH | sp:DENSITY | speckle:VAR | none")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_corrupt)

    p = sub.add_parser("denoise", help="weighted TV flow with corner stopping")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="CSV of (t, corner_dist) samples")
    p.set_defaults(fn=_cmd_denoise)

    p = sub.add_parser("estimate-psf",
                       help="estimate the blur kernel from the known corner")
    p.add_argument("--u1", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--lambda1", type=float, default=10000.0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="CSV of (size, residual) candidates")
    p.set_defaults(fn=_cmd_estimate_psf)

    p = sub.add_parser("deconvolve", help="split-Bregman TV deconvolution")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--lambda2", default="auto",
                   help="fidelity weight, or 'auto' (needs --clean)")
    p.add_argument("--clean", help="clean code for auto lambda2 calibration")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_deconvolve)

    p = sub.add_parser("threshold", help="corner-calibrated binarization")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--mode", choices=("pixel", "block"), default="pixel")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="CSV of candidate thresholds and scores")
    p.set_defaults(fn=_cmd_threshold)

    p = sub.add_parser("clean", help="run the full restoration pipeline")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--variant", default="FPSF",
                   help="D | UPSF | FPSF (case-insensitive)")
    p.add_argument("--lambda1", type=float, default=10000.0)
    p.add_argument("--out", required=True)
    p.add_argument("--artifacts",
                   help="directory for u1/u2/psf/trace/threshold dumps")
    p.set_defaults(fn=_cmd_clean)

    p = sub.add_parser("qr-geom", help="inspect geometry and dump masks")
    p.add_argument("--clean", required=True)
    p.add_argument("--dump-mask", help="path prefix for known/values PGMs")
    p.set_defaults(fn=_cmd_qr_geom)

    p = sub.add_parser("sweep", help="readability phase-diagram benchmark")
    p.add_argument("--spec", help="TOML sweep description")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--codes", nargs="+", help="clean code images (presets)")
    p.add_argument("--payloads", nargs="+",
                   help="expected payload per code (presets)")
    p.add_argument("--decoder", default=bundled_decoder_command(),
                   help="decoder command template containing {path}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
