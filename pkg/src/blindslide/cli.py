"""Headless operations: serve, synthesize, mask, stats, export, import.

Exit codes: 0 success, 1 runtime failure (I/O, unreadable slide),
2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import screening, stats
from .annostore import AnnotationStore, SchemaVersionError, StoreError
from .pyramid import PyramidError, SyntheticSpec, generate_synthetic_slide, open_slide
from .service import ConfigError, ServiceConfig, serve

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindslide",
        description="Blinded multi-rater slide annotation: server and batch tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the annotation API server")
    p_serve.add_argument("--config", required=True, help="service config JSON")

    p_synth = sub.add_parser("synth", help="generate a synthetic slide container")
    p_synth.add_argument("--spec", required=True, help="synthetic spec JSON")
    p_synth.add_argument("--out", required=True, help="output container directory")

    p_mask = sub.add_parser("mask", help="compute and export the tissue mask")
    p_mask.add_argument("--slide", required=True, help="slide container directory")
    p_mask.add_argument("--out", required=True, help="output bitmap (.png or .pbm)")
    p_mask.add_argument("--se-radius", type=int, default=screening.DEFAULT_SE_RADIUS)
    p_mask.add_argument("--cell-size", type=int, default=screening.DEFAULT_CELL_SIZE)
    p_mask.add_argument(
        "--occupancy-min", type=float, default=screening.DEFAULT_OCCUPANCY_MIN
    )
    p_mask.add_argument("--plan-out", help="also export the screening plan JSON")
    p_mask.add_argument(
        "--report", action="store_true", help="print tissue fraction and kept-cell count"
    )
    p_mask.add_argument("--json", action="store_true", help="machine-readable report")

    p_stats = sub.add_parser("stats", help="agreement and timing reports")
    p_stats.add_argument("--db", required=True, help="annotation database JSON")
    group = p_stats.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--kappa", nargs=2, type=int, metavar=("A", "B"), help="rater person ids"
    )
    group.add_argument("--timing", type=int, metavar="PERSON", help="person id")
    p_stats.add_argument("--slide", type=int, help="restrict kappa to one slide")
    p_stats.add_argument("--gap-cutoff", type=float, default=stats.DEFAULT_GAP_CUTOFF_S)
    p_stats.add_argument(
        "--pass",
        dest="which",
        choices=(stats.FIRST_PASS, stats.SECOND_PASS),
        default=stats.FIRST_PASS,
        help="timing over own (first) or foreign (second) annotations",
    )
    p_stats.add_argument("--json", action="store_true", help="machine-readable output")

    p_export = sub.add_parser("export", help="write the database in exchange format")
    p_export.add_argument("--db", required=True)
    p_export.add_argument("--out", required=True)

    p_import = sub.add_parser("import", help="load an exchange file into a database")
    p_import.add_argument("--db", required=True)
    p_import.add_argument("--in", dest="infile", required=True)
    p_import.add_argument(
        "--merge",
        action="store_true",
        help="union with the existing database instead of replacing it",
    )
    return parser


def cmd_serve(args) -> int:
    if not Path(args.config).is_file():
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = ServiceConfig.load(args.config)
        serve(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SystemExit as exc:  # uvicorn exits this way on bind failure
        return exc.code if isinstance(exc.code, int) else EXIT_RUNTIME
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text("utf-8"))
        spec = SyntheticSpec.from_dict(data)
    except (OSError, ValueError) as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        generate_synthetic_slide(spec, args.out)
    except OSError as exc:
        print(f"error: cannot write container: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {spec.width}x{spec.height} container to {args.out}")
    return EXIT_OK


def cmd_mask(args) -> int:
    try:
        slide = open_slide(args.slide)
        mask = screening.compute_tissue_mask(slide, se_radius=args.se_radius)
        mask.to_image().save(args.out)
    except (PyramidError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    plan = screening.build_screening_plan(
        mask, cell_size=args.cell_size, occupancy_min=args.occupancy_min
    )
    if args.plan_out:
        plan.export_json(args.plan_out)
    if args.report:
        if args.json:
            print(
                json.dumps(
                    {
                        "tissue_fraction": mask.tissue_fraction,
                        "threshold": mask.otsu.threshold,
                        "degenerate": mask.otsu.degenerate,
                        "cell_size": args.cell_size,
                        "kept_cells": len(plan.cells),
                    }
                )
            )
        else:
            print(f"tissue fraction: {mask.tissue_fraction:.4f}")
            print(f"threshold: {mask.otsu.threshold}" + (" (degenerate)" if mask.otsu.degenerate else ""))
            print(f"kept cells ({args.cell_size} px grid): {len(plan.cells)}")
    return EXIT_OK


def _print_kappa(store, person_a, person_b, slide_id, as_json) -> None:
    matrix = stats.confusion_matrix(store, person_a, person_b, slide_id=slide_id)
    payload = matrix.to_json_dict()
    if matrix.n == 0:
        payload.update({"p_o": None, "p_e": None, "kappa": None})
    else:
        try:
            result = stats.cohens_kappa(matrix)
            payload.update({"p_o": result.p_o, "p_e": result.p_e, "kappa": result.kappa})
        except stats.KappaUndefinedError:
            payload.update({"p_o": 1.0, "p_e": 1.0, "kappa": None})
    if as_json:
        print(json.dumps(payload))
        return
    names = [store.classes[cid].name for cid in matrix.class_ids]
    width = max((len(n) for n in names), default=8) + 2
    print("confusion matrix (rows: rater %d, cols: rater %d)" % (person_a, person_b))
    print(" " * width + "".join(f"{n:>{width}}" for n in names))
    for name, row in zip(names, matrix.counts.tolist()):
        print(f"{name:>{width}}" + "".join(f"{c:>{width}}" for c in row))
    print(f"n = {payload['n']}")
    if payload["kappa"] is None:
        print("kappa undefined (no doubly-labeled annotations or p_e = 1)")
    else:
        print(f"p_o = {payload['p_o']:.5f}")
        print(f"p_e = {payload['p_e']:.5f}")
        print(f"kappa = {payload['kappa']:.5f}")


def _print_timing(store, person, cutoff, which, as_json) -> None:
    timing = stats.annotation_timing(store, person, gap_cutoff_s=cutoff, which=which)
    payload = {
        "person_id": timing.person_id,
        "pass": timing.which,
        "n_events": timing.n_events,
        "mean_s": timing.mean_s,
        "median_s": timing.median_s,
        "gap_cutoff_s": timing.gap_cutoff_s,
    }
    if as_json:
        print(json.dumps(payload))
        return
    print(f"timing for person {person} ({which} pass, cutoff {cutoff:g} s)")
    if timing.n_events == 0:
        print("not enough events")
    else:
        print(f"events = {timing.n_events}")
        print(f"mean   = {timing.mean_s:.3f} s")
        print(f"median = {timing.median_s:.3f} s")


def cmd_stats(args) -> int:
    try:
        store = AnnotationStore.load(args.db)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load database: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.kappa:
            person_a, person_b = args.kappa
            if args.slide is not None and args.slide not in store.slides:
                raise KeyError(f"unknown slide id {args.slide}")
            _print_kappa(store, person_a, person_b, args.slide, args.json)
        else:
            _print_timing(store, args.timing, args.gap_cutoff, args.which, args.json)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        store = AnnotationStore.load(args.db)
        store.save(args.out)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_import(args) -> int:
    try:
        incoming = AnnotationStore.load(args.infile)
    except SchemaVersionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: cannot read {args.infile}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        if args.merge and Path(args.db).is_file():
            store = AnnotationStore.load(args.db)
            store.merge_from(incoming)
        else:
            store = incoming
        store.save(args.db)
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    "serve": cmd_serve,
    "synth": cmd_synth,
    "mask": cmd_mask,
    "stats": cmd_stats,
    "export": cmd_export,
    "import": cmd_import,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
