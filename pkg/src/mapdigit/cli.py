"""``mapdigit`` command-line entry point.

Exit codes: 0 success, 1 validation error (bad config, job, input file or
unpaired evaluation files), 2 execution failure, 3 georeferencing rejected
by every gate.  Logs go to stderr; reports are written as JSON files and a
one-line summary is printed to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import PipelineConfig, load_config, load_job
from .errors import (
    GatingRejectedError,
    MapDigitError,
    RasterError,
    SchemaError,
    ValidationError,
)
from .io import load_layout, load_raster, save_gcps, write_json
from .orchestrator import ArtifactStore, JobValidationError, TaskContext, TaskSpec, TaskStatus, run_job

logger = logging.getLogger("mapdigit")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_EXECUTION = 2
EXIT_GATING = 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, GatingRejectedError):
        return EXIT_GATING
    if isinstance(exc, (ValidationError, SchemaError, JobValidationError, RasterError)):
        return EXIT_VALIDATION
    return EXIT_EXECUTION


def _config(args, fallback_dir: Optional[Path] = None) -> PipelineConfig:
    if args.config is not None:
        return load_config(args.config)
    cfg = PipelineConfig(base_dir=(fallback_dir or Path.cwd()).resolve())
    cfg.output_dir = cfg.base_dir / "artifacts"
    return cfg


def _summary(doc) -> None:
    print(json.dumps(doc, sort_keys=True, default=str))


def _call_task(module: str, params: dict, out_dir: Path, config: PipelineConfig, inputs=None) -> dict:
    """Run one registered task body outside a job (thin command wrappers)."""
    from . import tasks  # noqa: F401  registers the modules
    from .orchestrator import default_registry

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = TaskSpec(module, module, params)
    ctx = TaskContext(spec, inputs or {}, out_dir, None, 1,
                      {"config": config, "job_dir": Path.cwd()})
    return default_registry[module](ctx)


# --- commands -----------------------------------------------------------------

def cmd_run(args) -> int:
    from . import tasks  # noqa: F401

    job_path = Path(args.job)
    cfg = _config(args, job_path.parent)
    graph = load_job(job_path, cfg)
    out = Path(args.output_dir) if args.output_dir else cfg.output_dir
    store = ArtifactStore(out / graph.name)
    report = run_job(graph, args.workers or cfg.workers, store, use_cache=not args.no_cache,
                     shared={"config": cfg, "job_dir": job_path.parent.resolve()})
    report_path = out / graph.name / "job_report.json"
    write_json(report.to_dict(), report_path)
    _summary({"job": graph.name, "status": report.status, "report": str(report_path)})
    if report.succeeded:
        return EXIT_OK
    failed = [s for s in report.states.values() if s.status == TaskStatus.FAILED]
    if failed and report.aborted is None and all(
            (s.error or "").startswith(GatingRejectedError.__name__) for s in failed):
        return EXIT_GATING
    return EXIT_EXECUTION


def cmd_georef(args) -> int:
    from .layout import segment_layout
    from .pipeline import run_georef

    cfg = _config(args)
    raster = load_raster(args.map)
    if args.layout:
        layout = load_layout(args.layout)
    else:
        layout = segment_layout(raster, cfg.client("model"))
    labels = None
    if args.labels:
        from .io import read_json

        labels = read_json(args.labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gcps, report = run_georef(raster, layout, cfg, args.mode, labels, args.window, args.buffer_km)
    report_path = out / "georef_report.json"
    report["status"] = "accepted" if gcps is not None else "rejected"
    write_json(report, report_path)
    if gcps is None:
        logger.error("georeferencing rejected; see %s", report_path)
        _summary({"status": "rejected", "report": str(report_path)})
        return EXIT_GATING
    save_gcps(gcps, out / "gcps.json")
    _summary({"status": "accepted", "method": report["method"], "gcps": str(out / "gcps.json")})
    return EXIT_OK


def cmd_eval(args) -> int:
    from .pipeline import evaluate_dirs

    doc = evaluate_dirs(args.pred_dir, args.gt_dir, args.kind)
    out = Path(args.out) if args.out else Path(args.pred_dir) / f"eval_{args.kind}.json"
    write_json(doc, out)
    _summary({"kind": args.kind, "report": str(out), "aggregate": doc["aggregate"]})
    return EXIT_OK


def cmd_layout(args) -> int:
    cfg = _config(args)
    result = _call_task("layout", {"map": str(Path(args.map).resolve()), "use_client": not args.fallback},
                        Path(args.out), cfg)
    _summary(result)
    return EXIT_OK


def cmd_crop(args) -> int:
    params = {"map": str(Path(args.map).resolve()), "patch_size": args.patch_size, "stride": args.stride,
              "write_images": args.images}
    _summary(_call_task("crop", params, Path(args.out), _config(args)))
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args)
    inputs = {}
    if args.layout:
        inputs["layout"] = {"layout": str(Path(args.layout).resolve())}
    if args.gcps:
        inputs["georef"] = {"gcps": str(Path(args.gcps).resolve())}
    if args.kind == "lines":
        params = {"raw_lines": str(Path(args.input).resolve())}
    else:
        params = {"map": str(Path(args.input).resolve())}
    if args.patch_size:
        params["patch_size"] = args.patch_size
    module = {"polygons": "extract_polygons", "lines": "extract_lines", "points": "extract_points"}[args.kind]
    params.update(cfg.params.get(module, {}))
    _summary(_call_task(module, params, Path(args.out), cfg, inputs))
    return EXIT_OK


def _shard(text: Optional[str], total: int):
    if text is None:
        return None
    try:
        i, n = (int(v) for v in text.split("/"))
    except ValueError as exc:
        raise ValidationError(f"--shard must look like i/n, got {text!r}") from exc
    if not 0 <= i < n:
        raise ValidationError("--shard needs 0 <= i < n")
    return range(i, total, n)


def cmd_synth(args) -> int:
    from .synth import GenConfig, default_templates, generate_dataset, load_templates, make_basemaps

    cfg = _config(args)
    raster = load_raster(args.map)
    layout = load_layout(args.layout)
    catalog = args.templates or cfg.template_catalog
    templates = load_templates(catalog) if catalog else default_templates()
    gen = GenConfig(total_patches=args.total, patch_size=args.patch_size,
                    per_class_target=args.per_class_target,
                    seed=cfg.seed if args.seed is None else args.seed)
    manifest = generate_dataset(make_basemaps(raster, layout), templates, gen, args.out,
                                indices=_shard(args.shard, gen.total_patches),
                                workers=args.workers or cfg.workers)
    _summary({"out": str(args.out), "patches": manifest["patches"],
              "per_class_patch_counts": manifest["per_class_patch_counts"]})
    return EXIT_OK


def cmd_fixture(args) -> int:
    from .fixtures import write_fixture

    root = write_fixture(args.out)
    _summary({"fixture": str(root), "job": str(root / "job.yaml"), "config": str(root / "config.yaml")})
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mapdigit", description="Geologic map digitization pipeline.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="pipeline config file (YAML or JSON)")
        return sp

    sp = with_config(sub.add_parser("run", help="run a job file"))
    sp.add_argument("job")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--output-dir")
    sp.add_argument("--no-cache", action="store_true")
    sp.set_defaults(fn=cmd_run)

    sp = with_config(sub.add_parser("georef", help="georeference one map"))
    sp.add_argument("map")
    sp.add_argument("--layout", help="layout JSON; default asks the model client")
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--text-only", dest="mode", action="store_const", const="text")
    mode.add_argument("--visual-only", dest="mode", action="store_const", const="visual")
    mode.add_argument("--auto", dest="mode", action="store_const", const="auto")
    sp.set_defaults(mode="auto")
    sp.add_argument("--labels", help="coordinate label records replacing the model's reading")
    sp.add_argument("--window", type=int, default=1000)
    sp.add_argument("--buffer-km", type=float, default=10.0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_georef)

    sp = sub.add_parser("eval", help="score predictions against ground truth")
    sp.add_argument("pred_dir")
    sp.add_argument("gt_dir")
    sp.add_argument("--kind", required=True, choices=["polygon", "line", "point", "georef", "layout"])
    sp.add_argument("--out", help="report path (default <pred_dir>/eval_<kind>.json)")
    sp.set_defaults(fn=cmd_eval)

    sp = with_config(sub.add_parser("layout", help="segment a map sheet"))
    sp.add_argument("map")
    sp.add_argument("--fallback", action="store_true", help="ignore the model client")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_layout)

    sp = with_config(sub.add_parser("crop", help="tile a map into patches"))
    sp.add_argument("map")
    sp.add_argument("--patch-size", type=int, default=1000)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--images", action="store_true", help="also write patch PNGs")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_crop)

    sp = with_config(sub.add_parser("extract", help="run a feature-extraction baseline"))
    sp.add_argument("kind", choices=["polygons", "lines", "points"])
    sp.add_argument("input", help="map image, or the raw line-graph file for lines")
    sp.add_argument("--layout")
    sp.add_argument("--gcps", help="GCP file; adds a georeferenced GeoJSON copy")
    sp.add_argument("--patch-size", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_extract)

    sp = with_config(sub.add_parser("synth", help="generate a synthetic point-symbol dataset"))
    sp.add_argument("map")
    sp.add_argument("--layout", required=True)
    sp.add_argument("--templates", help="template catalog CSV (default: built-in glyphs)")
    sp.add_argument("--total", type=int, default=10_000)
    sp.add_argument("--patch-size", type=int, default=1000)
    sp.add_argument("--per-class-target", type=int, default=3000)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--shard", help="i/n: write every n-th patch starting at i")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("fixture", help="write the bundled synthetic map and job")
    sp.add_argument("out")
    sp.set_defaults(fn=cmd_fixture)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; here 2 means execution failure
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (MapDigitError, OSError) as exc:
        code = exit_code_for(exc)
        logger.error("%s: %s", type(exc).__name__, exc)
        return code


if __name__ == "__main__":
    sys.exit(main())
