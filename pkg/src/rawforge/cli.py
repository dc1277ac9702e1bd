"""``rawforge`` command line interface.

Exit codes: 0 success, 1 usage error, 2 data or I/O error. Logs go to stderr;
data goes to stdout or ``--out``. ``RAWFORGE_THREADS`` sets the default for
``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset, flowlab, metrics
from .dng import CfaPattern, load_profile, profile_to_json, read_dng
from .errors import RawForgeError
from .image import ImagePlane, State
from .imageio import atomic_write, quantize, read_normalized, read_raw, write_png
from .isp import Demosaic, PipelineConfig, Stage, run_pipeline
from .photofinish import sample_params
from .rawrender import NoiseSpec, render_raw, synthesize_noise
from .rawrender import mosaic as mosaic_image
from .seeding import split_seed

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _write_text(text: str, out) -> None:
    if out:
        with atomic_write(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_rows(rows: list[dict], as_json: bool, out=None) -> None:
    if as_json:
        text = json.dumps(rows if len(rows) != 1 else rows[0], indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    _write_text(text, out)


def _write_plane(path, img: ImagePlane, bit_depth: int | None = None) -> None:
    if bit_depth is None:
        bit_depth = 8 if img.state == State.ENCODED_SRGB else 16
    write_png(path, quantize(img.data, bit_depth))


def _read_plane(path, state3: State, state1: State) -> ImagePlane:
    arr = read_normalized(path)
    return ImagePlane(arr, state1 if arr.ndim == 2 else state3)


# ---------------------------------------------------------------------------
# subcommands


def cmd_profile_extract(args) -> int:
    _write_text(profile_to_json(read_dng(args.dng)), args.out)
    return EXIT_OK


def cmd_isp_run(args) -> int:
    profile = load_profile(args.profile)
    cfg = PipelineConfig(terminal_stage=Stage(args.terminal), demosaic=Demosaic(args.demosaic),
                         wb_gains=tuple(args.wb) if args.wb else None, cct=args.cct)
    img = run_pipeline(read_raw(args.raw), profile, cfg)
    _write_plane(args.out, img)
    return EXIT_OK


def cmd_variants_render(args) -> int:
    profile = load_profile(args.profile)
    raw = read_raw(args.raw)
    scene_id = args.scene_id or Path(args.raw).stem
    out = Path(args.out)
    rows = []
    for k in range(args.n):
        params = sample_params(split_seed(args.seed, scene_id, k))
        path = out / f"{scene_id}_variant_{k:03d}.png"
        write_png(path, dataset.render_variant_file(raw, profile, params, args.size))
        rows.append({"schema": dataset.MANIFEST_SCHEMA, "scene_id": scene_id, "variant_index": k,
                     **params.to_dict(), "path": path.name})
    with atomic_write(out / f"{scene_id}_params.jsonl", "w") as fh:
        fh.writelines(json.dumps(r) + "\n" for r in rows)
    return EXIT_OK


def cmd_dataset_build(args) -> int:
    profile = load_profile(args.profile)
    scenes = [(Path(p).stem, read_raw(p)) for p in args.raw]
    dataset.build_dataset(scenes, profile, args.n, args.seed, args.out, size=args.size,
                          threads=args.threads)
    return EXIT_OK


def cmd_xyz2raw(args) -> int:
    profile = load_profile(args.profile)
    arr = read_normalized(args.xyz)
    if arr.ndim != 3:
        raise RawForgeError(f"{args.xyz}: XYZ input must be a 3-channel image")
    noise = None
    if args.noise_s > 0:
        noise = NoiseSpec.from_profile(profile, s=args.noise_s, seed=args.seed)
    cfa = CfaPattern(args.cfa) if args.cfa else None
    out = render_raw(ImagePlane(arr, State.XYZ), profile, args.cct, noise=noise, cfa_out=cfa)
    _write_plane(args.out, out, args.bit_depth)
    return EXIT_OK


def cmd_noise_add(args) -> int:
    img = _read_plane(args.input, State.CAMERA_RAW, State.MOSAIC_RAW)
    profile = load_profile(args.profile) if args.profile else None
    alpha = args.alpha if args.alpha is not None else (profile.noise_alpha if profile else None)
    beta = args.beta if args.beta is not None else (profile.noise_beta if profile else None)
    if alpha is None or beta is None:
        raise UsageError("give --alpha/--beta or a --profile with noise coefficients")
    cfa = CfaPattern(args.cfa) if args.cfa else (profile.cfa if profile else None)
    out = synthesize_noise(img, NoiseSpec(alpha, beta, args.s, args.seed), cfa)
    _write_plane(args.out, out, args.bit_depth)
    return EXIT_OK


def cmd_mosaic(args) -> int:
    img = _read_plane(args.input, State.CAMERA_RAW, State.MOSAIC_RAW)
    _write_plane(args.out, mosaic_image(img, CfaPattern(args.cfa)), args.bit_depth)
    return EXIT_OK


def _load_pair(args):
    return read_normalized(args.a), read_normalized(args.b)


def cmd_metrics_psnr(args) -> int:
    value = metrics.psnr(*_load_pair(args))
    _emit_rows([{"a": args.a, "b": args.b, "psnr_db": metrics.format_db(value)}], args.json, args.out)
    return EXIT_OK


def cmd_metrics_ssim(args) -> int:
    value = metrics.ssim(*_load_pair(args))
    _emit_rows([{"a": args.a, "b": args.b, "ssim": value}], args.json, args.out)
    return EXIT_OK


def cmd_metrics_compactness(args) -> int:
    feats = []
    for path in args.images:
        arr = read_normalized(path)
        state = State.MOSAIC_RAW if arr.ndim == 2 else State.ENCODED_SRGB
        feats.append(metrics.feature_vector(ImagePlane(arr, state), args.size))
    report = metrics.pca_compactness(np.stack(feats), args.k, args.label)
    _emit_rows([report.to_dict()], args.json, args.out)
    return EXIT_OK


def cmd_flow_demo(args) -> int:
    try:
        steps = [int(s) for s in args.steps.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--steps must be a comma-separated list of integers, got {args.steps!r}") from None
    rows = flowlab.recovery_table(args.dim, args.pairs, steps, args.seed)
    _emit_rows(rows, args.json, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _threads(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("--threads must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rawforge", description="Software ISP, XYZ->raw rendering and dataset tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    parser.add_argument("--threads", type=_threads, default=None,
                        help="worker threads (default: $RAWFORGE_THREADS or all cores)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def leaf(group, name, func, help_text):
        p = group.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    def nested(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        g = p.add_subparsers(dest=f"{name}_command", metavar="ACTION", parser_class=_Parser)
        g.required = True
        return g

    cfa_names = [c.value for c in CfaPattern]

    g = nested("profile", "camera profile tools")
    p = leaf(g, "extract", cmd_profile_extract, "extract a JSON camera profile from a DNG")
    p.add_argument("dng")
    p.add_argument("--out", help="output JSON path (default: stdout)")

    g = nested("isp", "forward ISP")
    p = leaf(g, "run", cmd_isp_run, "run the ISP on a raw mosaic up to a terminal stage")
    p.add_argument("--raw", required=True, help="16-bit single-channel PNG or PGM")
    p.add_argument("--profile", required=True, help="JSON camera profile")
    p.add_argument("--terminal", choices=[s.value for s in Stage], default=Stage.GAMMA.value)
    p.add_argument("--demosaic", choices=[d.value for d in Demosaic], default=Demosaic.EDGE_AWARE.value)
    p.add_argument("--wb", type=float, nargs=3, metavar=("R", "G", "B"), help="override WB gains")
    p.add_argument("--cct", type=float, help="CCT for forward-matrix interpolation")
    p.add_argument("--out", required=True)

    g = nested("variants", "photo-finished sRGB variants")
    p = leaf(g, "render", cmd_variants_render, "render N photo-finished variants of one raw")
    p.add_argument("--raw", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene-id", help="default: raw file stem")
    p.add_argument("--size", type=int, help="center-crop and resize to SIZE x SIZE")
    p.add_argument("--out", required=True, help="output directory")

    g = nested("dataset", "many-to-one dataset construction")
    p = leaf(g, "build", cmd_dataset_build, "write XYZ anchors, sRGB variants and a manifest")
    p.add_argument("--raw", required=True, action="append", help="raw mosaic; repeat for more scenes")
    p.add_argument("--profile", required=True)
    p.add_argument("--n", type=int, required=True, help="variants per scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, help="center-crop and resize to SIZE x SIZE (e.g. 1024)")
    p.add_argument("--out", required=True, help="dataset root")
    p.add_argument("--threads", type=_threads, default=argparse.SUPPRESS, help="worker threads")

    p = sub.add_parser("xyz2raw", help="render an XYZ image into camera raw",
                       description="render an XYZ image into camera raw")
    p.set_defaults(func=cmd_xyz2raw)
    p.add_argument("--xyz", required=True, help="16-bit RGB PNG holding XYZ in [0, 1]")
    p.add_argument("--profile", required=True)
    p.add_argument("--cct", type=float, required=True)
    p.add_argument("--noise-s", type=float, default=0.0, help="noise strength s (0 = off)")
    p.add_argument("--cfa", choices=cfa_names, help="re-mosaic with this pattern")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    g = nested("noise", "sensor noise synthesis")
    p = leaf(g, "add", cmd_noise_add, "add heteroscedastic Gaussian noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--profile", help="take alpha/beta/CFA from this profile")
    p.add_argument("--alpha", type=float, nargs=3)
    p.add_argument("--beta", type=float, nargs=3)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--cfa", choices=cfa_names, help="CFA of a single-channel input")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mosaic", help="re-mosaic a 3-channel raw image",
                       description="re-mosaic a 3-channel raw image")
    p.set_defaults(func=cmd_mosaic)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--cfa", choices=cfa_names, required=True)
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)
    p.add_argument("--out", required=True)

    g = nested("metrics", "evaluation metrics")
    for name, func in (("psnr", cmd_metrics_psnr), ("ssim", cmd_metrics_ssim)):
        p = leaf(g, name, func, f"{name.upper()} between two images")
        p.add_argument("a")
        p.add_argument("b")
        p.add_argument("--json", action="store_true")
        p.add_argument("--out")
    p = leaf(g, "compactness", cmd_metrics_compactness, "PCA mean distance to centroid")
    p.add_argument("images", nargs="+")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--size", type=int, default=32, help="feature downsample size")
    p.add_argument("--label", default="")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")

    g = nested("flow", "rectified-flow laboratory")
    p = leaf(g, "demo", cmd_flow_demo, "Euler recovery error vs step count (CSV)")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--steps", default="1,4,32")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads is None:
        try:
            args.threads = dataset.default_threads()
        except RawForgeError as exc:
            sys.stderr.write(f"rawforge: error: {exc}\n")
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"rawforge: error: {exc}\n")
        return EXIT_USAGE
    except (RawForgeError, OSError) as exc:
        sys.stderr.write(f"rawforge: error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
