import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import AdapterConfig
from .errors import AdapterError
from .extract import extract_scene

EXIT_OK = 0
EXIT_ERROR = 2


def _load_config(path: Optional[str]) -> AdapterConfig:
    if not path:
        return AdapterConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AdapterError(f"cannot read config {path}: {exc}") from exc
    return AdapterConfig.from_dict(data)


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    scene_doc = extract_scene(Path(args.image), cfg, Path(args.out))
    n_att = sum(1 for c in scene_doc["candidates"]
                if c["class_scores"][cfg.leaf_prompt] > c["class_scores"][cfg.soil_prompt])
    print(f"wrote {len(scene_doc['candidates'])} candidates "
          f"({n_att} with attention) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rosetteseg-adapter",
        description="Produce rosetteseg interchange files from a raw image",
    )
    parser.add_argument("--version", action="version",
                        version=f"rosetteseg-adapter {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    e = sub.add_parser("extract", help="extract candidates and attention grids")
    e.add_argument("--image", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--config", default=None, help="adapter config JSON")
    e.set_defaults(func=cmd_extract)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AdapterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
