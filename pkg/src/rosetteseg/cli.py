"""Command-line driver: generate / segment / eval / render."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .errors import (
    ConfigError,
    InternalConsistencyError,
    RosetteSegError,
    SchemaError,
    SpecInfeasibleError,
)
from .metrics import evaluate
from .model import PipelineConfig
from .pipeline import run_pipeline
from .render import render_metrics_figure, render_overlay
from .sceneio import SCHEMA_VERSION, atomic_write_text, canonical_dumps, load_result, load_scene
from .synthetic import SceneSpec, generate_scene, write_scene

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_INTERNAL_ERROR = 3


def _parse_override(text: str) -> tuple:
    if "=" not in text:
        raise ConfigError(f"--set expects KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load_config(path: Optional[str], overrides: List[str]) -> PipelineConfig:
    data: Dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for item in overrides or []:
        key, value = _parse_override(item)
        data[key] = value
    return PipelineConfig.from_dict(data)


def cmd_generate(args: argparse.Namespace) -> int:
    spec = SceneSpec(
        image_size=args.image_size,
        plants=args.plants,
        center_separation_eps=args.separation,
        eps=args.eps,
        duplicate_prob=args.duplicates,
        boundary_prob=args.boundary,
        attention_noise=args.noise,
        seed=args.seed,
    )
    scene_doc, attention, gt_doc = generate_scene(spec)
    write_scene(Path(args.out), scene_doc, attention, gt_doc)
    print(f"wrote scene with {len(scene_doc['candidates'])} candidates to {args.out}")
    return EXIT_OK


def _scene_file(path: str) -> Path:
    p = Path(path)
    return p / "scene.json" if p.is_dir() else p


def cmd_segment(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config, args.set)
    scene_path = _scene_file(args.scene)
    scene = load_scene(scene_path)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result_path = out_dir / "result.json"
    output = run_pipeline(scene, cfg, scene_path=str(scene_path), out_path=str(result_path))
    atomic_write_text(result_path, canonical_dumps(output.result))
    atomic_write_text(out_dir / "manifest.json", canonical_dumps(output.manifest))
    counts = output.manifest["counts"]
    print(f"{counts['candidates']} candidates -> {counts['leaves']} leaves "
          f"-> {counts['plants']} plants")
    return EXIT_OK


def _check_dims(pred, gt) -> None:
    dims = {(m.mask.width, m.mask.height)
            for m in list(pred.leaves) + list(pred.plants) + list(gt.leaves) + list(gt.plants)}
    if len(dims) > 1:
        raise SchemaError(f"prediction/ground-truth mask dimensions differ: {sorted(dims)}")


def cmd_eval(args: argparse.Namespace) -> int:
    pred = load_result(Path(args.pred))
    gt = load_result(Path(args.gt))
    _check_dims(pred, gt)
    report = evaluate(
        pred_plants={0: [_as_scored(p) for p in pred.plants]},
        gt_plants={0: [p.mask for p in gt.plants]},
        pred_leaves={0: list(pred.leaves)},
        gt_leaves={0: [lf.mask for lf in gt.leaves]},
    )
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(report_path, canonical_dumps(report.to_dict()))
    csv_path = report_path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name in ("prec50", "rec50", "ap50", "pq_plant", "pq_leaf"):
            writer.writerow([name, getattr(report, name)])
        for level in ("plant", "leaf"):
            rep = getattr(report, level)
            for key in ("tp", "fp", "fn"):
                writer.writerow([f"{level}_{key}", getattr(rep, key)])
    render_metrics_figure(report, report_path.with_name(report_path.stem + "_metrics.png"))
    print(f"prec50={report.prec50:.4f} rec50={report.rec50:.4f} ap50={report.ap50:.4f} "
          f"pq_plant={report.pq_plant:.4f} pq_leaf={report.pq_leaf:.4f}")
    return EXIT_OK


def _as_scored(plant):
    from .model import LeafInstance

    return LeafInstance(id=plant.id, mask=plant.mask, score=1.0)


def cmd_render(args: argparse.Namespace) -> int:
    scene = load_scene(_scene_file(args.scene))
    result = load_result(Path(args.result))
    render_overlay(scene.meta, result, Path(args.out))
    print(f"wrote overlay to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rosetteseg",
        description="Hierarchical leaf/plant segmentation pipeline for rosette crops",
    )
    parser.add_argument("--version", action="version",
                        version=f"rosetteseg {__version__} (schema {SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="emit a synthetic scene with ground truth")
    g.add_argument("--out", required=True)
    g.add_argument("--plants", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--image-size", type=int, default=1000)
    g.add_argument("--eps", type=float, default=40.0)
    g.add_argument("--separation", type=float, default=4.0,
                   help="minimum plant center separation, in units of eps")
    g.add_argument("--duplicates", type=float, default=0.0,
                   help="probability of injecting a duplicate mask per leaf")
    g.add_argument("--boundary", type=float, default=0.0,
                   help="probability of emitting window-cut boundary masks")
    g.add_argument("--noise", type=float, default=0.0,
                   help="attention noise sigma")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("segment", help="run the pipeline on a scene")
    s.add_argument("--scene", required=True, help="scene.json or a directory containing it")
    s.add_argument("--config", default=None, help="pipeline config JSON")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_segment)

    e = sub.add_parser("eval", help="score a prediction against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--report", required=True,
                   help="report JSON path; a CSV and a metrics figure are written beside it")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render", help="draw a plant-tinted overlay with stem markers")
    r.add_argument("--scene", required=True)
    r.add_argument("--result", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InternalConsistencyError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR
    except (SchemaError, ConfigError, SpecInfeasibleError, RosetteSegError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
