"""Command line: ``rectijac compare|validate|gen|bench``.

Exit codes: 0 success, 1 internal error, 2 input error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from .bench import SUITES, BenchSpec, format_table, run_suite, to_json
from .datagen import GenSpec, write_corpus
from .migration import MigrationPolicy
from .parser import ParseError, SourceFormat, load_polygon_file, pair_directories
from .pipeline import PipelineConfig, PipelineError, default_workers, run_pipeline, run_sequential
from .pixelbox import PixelBoxConfig

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2

log = logging.getLogger("rectijac")


class InputError(Exception):
    """Bad user input: missing paths, unreadable or invalid files."""


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v < 1:
            raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
        return v
    return conv


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    g.add_argument("--group-size", type=_positive(int), default=64, metavar="N", help="workers per pair (n)")
    g.add_argument("--threshold", type=_positive(int), default=None, metavar="T", help="pixelization threshold, default n*n/2")
    g.add_argument("--fanout", type=int, default=None, metavar="F", help="sub-boxes per partition, default n")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--workers", type=_positive(int), default=None, help="parser workers and batch pool width (env RECTIJAC_WORKERS)")
    g.add_argument("--buffer-cap", type=_positive(int), default=64, metavar="N", help="capacity of each stage buffer")
    g.add_argument("--migration", choices=("on", "off"), default="off")
    g.add_argument("--steal-count", type=_positive(int), default=1, metavar="N")
    g.add_argument("--batch-throttle", type=float, default=1.0, metavar="X", help="slow the batch pool down by this factor")
    g.add_argument("--parse-throttle", type=float, default=1.0, metavar="X", help="slow parsing down by this factor")


def _pixelbox_config(args) -> PixelBoxConfig:
    if args.fanout is not None and args.fanout < 2:
        raise InputError("--fanout must be >= 2")
    return PixelBoxConfig(args.group_size, args.threshold, args.fanout)


def _pipeline_config(args, fmt=None) -> PipelineConfig:
    if args.batch_throttle < 1.0 or args.parse_throttle < 1.0:
        raise InputError("throttle factors must be >= 1")
    return PipelineConfig(
        pixelbox=_pixelbox_config(args),
        workers=args.workers or default_workers(),
        buffer_capacity=args.buffer_cap,
        migration=MigrationPolicy(args.migration == "on", args.steal_count),
        batch_throttle=args.batch_throttle,
        parse_throttle=args.parse_throttle,
        fmt=fmt,
    )


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_compare(args) -> int:
    dir_a, dir_b = Path(args.set_a), Path(args.set_b)
    for d in (dir_a, dir_b):
        if not d.is_dir():
            raise InputError(f"not a directory: {d}")
    pairs, unpaired = pair_directories(dir_a, dir_b)
    for u in unpaired:
        log.warning("no counterpart for %s; excluded", u)
    if not pairs:
        raise InputError("no pairable .poly files")
    fmt = None if args.format == "auto" else args.format
    cfg = _pipeline_config(args, fmt)
    run = run_sequential if args.no_pipeline else run_pipeline
    try:
        rep = run(pairs, cfg, set_a=str(dir_a), set_b=str(dir_b), unpaired=unpaired)
    except PipelineError as exc:
        if isinstance(exc.cause, (ParseError, OSError)):
            raise InputError(str(exc)) from exc
        raise
    _write(rep.to_json(deterministic=args.deterministic), args.report)
    if args.report:
        j = rep.jaccard
        log.info("J = %s over %d intersecting pairs", "absent" if j is None else f"{j:.6f}", rep.intersecting)
    return EXIT_OK


def cmd_validate(args) -> int:
    target = Path(args.path)
    if target.is_dir():
        files = sorted(target.glob("*.poly"))
        if not files:
            log.warning("no .poly files in %s", target)
            return EXIT_OK
    elif target.is_file():
        files = [target]
    else:
        raise InputError(f"no such file or directory: {target}")
    fmt = None if args.format == "auto" else args.format
    bad = 0
    for f in files:
        try:
            pf = load_polygon_file(f, fmt)
        except ParseError as exc:
            bad += 1
            print(f"{f}: error: {exc}")
        else:
            print(f"{f}: ok ({len(pf)} polygons, {pf.source_format.value})")
    return EXIT_INPUT if bad else EXIT_OK


def cmd_gen(args) -> int:
    spec = GenSpec(
        seed=args.seed,
        tiles=args.tiles,
        polygons_per_tile=args.polygons_per_tile,
        mean_area=args.mean_area,
        area_stddev=args.area_stddev,
        scale_factor=args.scale,
        perturbation=args.perturbation,
        drop=args.drop,
        image=args.image,
    )
    fmt = "csv" if args.format == "auto" else args.format
    m = write_corpus(spec, args.out, fmt)
    print(f"wrote {len(m['tiles'])} tile pairs to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = BenchSpec(
        seed=args.seed,
        pairs=args.pairs,
        scales=tuple(args.scales),
        t_scale=args.t_scale,
        tiles=args.tiles,
        polygons_per_tile=args.polygons_per_tile,
        tile_scale=args.tile_scale,
        repeats=args.repeats,
        throttle=args.throttle,
    )
    cfg = _pipeline_config(args)
    if args.suite == "fig11" and args.buffer_cap == 64:
        # Small buffers let the full and empty triggers fire at desk scale.
        cfg = dataclasses.replace(cfg, buffer_capacity=4)
    result = run_suite(args.suite, spec, cfg)
    sys.stdout.write(format_table(result))
    if args.report:
        Path(args.report).write_text(to_json(result))
    else:
        sys.stdout.write(to_json(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rectijac", description="Jaccard cross-comparison of rectilinear polygon sets.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    formats = ["auto"] + [f.value for f in SourceFormat]

    c = sub.add_parser("compare", help="compare two directories of tile files")
    c.add_argument("set_a")
    c.add_argument("set_b")
    c.add_argument("--format", choices=formats, default="auto")
    c.add_argument("--no-pipeline", action="store_true", help="run the stages one tile at a time")
    c.add_argument("--report", metavar="PATH", help="write the JSON report here instead of stdout")
    c.add_argument("--deterministic", action="store_true", help="omit timing and migration counters")
    _add_engine_flags(c)
    _add_pipeline_flags(c)
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="parse and validate polygon files")
    v.add_argument("path", help="a .poly file or a directory of them")
    v.add_argument("--format", choices=formats, default="auto")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("gen", help="write a synthetic corpus")
    g.add_argument("out")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tiles", type=_positive(int), default=4)
    g.add_argument("--polygons-per-tile", type=int, default=100)
    g.add_argument("--mean-area", type=float, default=150.0)
    g.add_argument("--area-stddev", type=float, default=100.0)
    g.add_argument("--scale", type=int, default=1, choices=range(1, 6))
    g.add_argument("--perturbation", type=float, default=0.3)
    g.add_argument("--drop", type=float, default=0.0)
    g.add_argument("--image", default="synthetic")
    g.add_argument("--format", choices=formats, default="csv")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", choices=SUITES)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--pairs", type=_positive(int), default=10_000, help="minimum candidate pairs (fig8, fig10)")
    b.add_argument("--scales", type=int, nargs="+", default=[1, 2, 3, 4, 5], choices=range(1, 6))
    b.add_argument("--t-scale", type=int, default=5, choices=range(1, 6), help="scale factor for the T sweep")
    b.add_argument("--tiles", type=_positive(int), default=200)
    b.add_argument("--polygons-per-tile", type=_positive(int), default=50)
    b.add_argument("--tile-scale", type=int, default=3, choices=range(1, 6))
    b.add_argument("--repeats", type=_positive(int), default=3)
    b.add_argument("--throttle", type=float, default=4.0, help="slowdown for the throttled fig11 regimes")
    b.add_argument("--report", metavar="PATH", help="write the JSON result here")
    _add_engine_flags(b)
    _add_pipeline_flags(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (InputError, ParseError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
