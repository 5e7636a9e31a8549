"""Command-line entry point.

Exit codes: 0 success, 2 usage or input error, 3 constraint violation or
infeasible layout, 4 oracle failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from advlayout import fileio
from advlayout.compositor import RegionMap, TextureCanvas, compose, render_preview
from advlayout.errors import (
    AdvLayoutError,
    InvalidArgumentError,
    LayoutInfeasibleError,
    OptimizationAborted,
    OracleError,
)
from advlayout.fitness import fitness
from advlayout.layout import Mask, SearchConfig
from advlayout.metrics import (
    EvalRecord,
    format_percentage,
    group_by_heading,
    p_at_05,
    records_to_csv,
)
from advlayout.oracle import ExternalOracle, SyntheticCoverageOracle, spawn_external
from advlayout.protocol import ViewSpec
from advlayout.search import (
    OptimizationResult,
    history_csv,
    load_checkpoint,
    optimize,
    resume,
    save_checkpoint,
)
from advlayout.stickers import load_pool

log = logging.getLogger("advlayout")

EXIT_USAGE = 2
EXIT_CONSTRAINT = 3
EXIT_ORACLE = 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Parsed config file: search parameters plus input paths and oracle section."""

    search: SearchConfig
    base_texture: Path | None
    mask: Path | None
    pool: Path | None
    views: Path | None
    region_map: Path | None
    oracle: dict

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError(f"config {path} must be a JSON object")
        root = path.parent

        def rel(key: str) -> Path | None:
            value = doc.get(key)
            return None if value is None else (root / value)

        known = {"search", "base_texture", "mask", "pool", "views", "region_map", "oracle"}
        unknown = set(doc) - known
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        try:
            search = SearchConfig.from_dict(doc.get("search", {}))
        except (InvalidArgumentError, TypeError) as exc:
            raise UsageError(str(exc)) from exc
        return cls(
            search=search,
            base_texture=rel("base_texture"),
            mask=rel("mask"),
            pool=rel("pool"),
            views=rel("views"),
            region_map=rel("region_map"),
            oracle=doc.get("oracle", {}),
        )


def _need(value, what: str):
    if value is None:
        raise UsageError(f"missing {what}")
    return value


def build_oracle(spec: str | None, run: RunConfig | None, base: TextureCanvas | None):
    """``synthetic`` builds the coverage oracle from the config; ``cmd:...`` spawns a child."""
    oracle_cfg = run.oracle if run else {}
    if spec is None:
        if "command" in oracle_cfg:
            spec = "cmd:" + shlex.join(oracle_cfg["command"])
        elif "synthetic" in oracle_cfg:
            spec = "synthetic"
        else:
            raise UsageError("no oracle given (use --oracle synthetic or --oracle cmd:...)")
    if spec == "synthetic":
        syn = oracle_cfg.get("synthetic")
        if syn is None or base is None:
            raise UsageError("synthetic oracle needs a config with oracle.synthetic and a base texture")
        try:
            regions = {int(k): tuple(v) for k, v in syn["regions"].items()}
            return SyntheticCoverageOracle(base, regions, float(syn["phi"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad synthetic oracle section: {exc}") from exc
    if spec.startswith("cmd:"):
        argv = shlex.split(spec[4:])
        if not argv:
            raise UsageError("empty oracle command")
        return spawn_external(argv, float(oracle_cfg.get("timeout", 30.0)))
    raise UsageError(f"unknown oracle spec {spec!r}")


def _close(oracle) -> None:
    if isinstance(oracle, ExternalOracle):
        oracle.close()


def _load_inputs(run: RunConfig):
    base = fileio.load_texture(_need(run.base_texture, "base_texture in config"))
    mask = fileio.load_mask(run.mask) if run.mask else Mask.full(base.width, base.height)
    pool = load_pool(_need(run.pool, "pool in config"))
    views = fileio.load_views(_need(run.views, "views in config"))
    region_map = fileio.load_region_map(run.region_map) if run.region_map else None
    return base, mask, pool, views, region_map


def write_outputs(out: Path, result: OptimizationResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_texture(out / "best_texture.png", result.best_texture)
    fileio.save_layout(out / "layout.json", result.best_layout, result.best_placements)
    (out / "history.csv").write_text(history_csv(result.history))
    summary = {
        "config": result.config.to_dict(),
        "base_fitness": result.base_fitness,
        "best_fitness": result.best_fitness,
        "iterations_used": result.iterations_used,
        "terminated_by": result.terminated_by,
        "best_texture_sha256": result.best_digest,
        "circles": len(result.best_layout),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    save_checkpoint(out / "checkpoint.json", result)


def _report(result: OptimizationResult) -> None:
    print(
        f"best fitness {result.best_fitness} (base {result.base_fitness}) after "
        f"{result.iterations_used} iterations, terminated by {result.terminated_by}"
    )


def cmd_optimize(args) -> int:
    run = RunConfig.load(args.config)
    if args.seed is not None:
        run.search.seed = args.seed
    if args.itr_max is not None:
        run.search.itr_max = args.itr_max
    try:
        run.search.validate()
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    base, mask, pool, views, region_map = _load_inputs(run)
    oracle = build_oracle(args.oracle, run, base)
    try:
        result = optimize(run.search, oracle, base, mask, pool, views, region_map)
    except OptimizationAborted as exc:
        if exc.best_so_far is not None:
            write_outputs(Path(args.out), exc.best_so_far)
        raise
    finally:
        _close(oracle)
    write_outputs(Path(args.out), result)
    _report(result)
    return 0


def cmd_resume(args) -> int:
    run = RunConfig.load(args.config)
    checkpoint = load_checkpoint(args.checkpoint)
    base, mask, pool, views, region_map = _load_inputs(run)
    oracle = build_oracle(args.oracle, run, base)
    try:
        result = resume(checkpoint, args.extra, oracle, base, mask, pool, views, region_map)
    finally:
        _close(oracle)
    write_outputs(Path(args.out), result)
    _report(result)
    return 0


def cmd_evaluate(args) -> int:
    run = RunConfig.load(args.config) if args.config else None
    texture = fileio.load_texture(args.texture)
    views: Sequence[ViewSpec] = fileio.load_views(args.views)
    base = texture
    if run is not None and run.base_texture is not None:
        base = fileio.load_texture(run.base_texture)
    tau = args.tau if args.tau is not None else (run.search.tau if run else 0.5)
    target = args.target_class if args.target_class is not None else (
        run.search.target_class if run else 0
    )
    oracle = build_oracle(args.oracle, run, base)
    try:
        report = fitness(oracle, texture, views, tau, target)
    finally:
        _close(oracle)
    records = [
        EvalRecord(v.id, v.yaw_degrees, det, res.objectness, res.class_id)
        for v, res, det in zip(views, report.per_view, report.detected)
    ]
    score = p_at_05(records, tau, target)
    table = group_by_heading(records, tau, target)
    print(f"fitness = {report.fitness} of {len(views)} views detected")
    print(f"P@0.5 = {format_percentage(score)}")
    print(table.format())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "records.csv").write_text(records_to_csv(records))
        summary = {
            "fitness": report.fitness,
            "views": len(views),
            "p_at_05": round(score, 2),
            "directions": {h: {"count": n, "p_at_05": round(p, 2)} for h, n, p in table.rows()},
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return 0


def cmd_compose(args) -> int:
    layout, placements = fileio.load_layout(args.layout)
    if any(p.sticker_id is None for p in placements):
        raise UsageError("every circle in the layout needs a sticker_id to compose")
    base = fileio.load_texture(args.base)
    pool = load_pool(args.pool)
    fileio.save_texture(args.out, compose(base, placements, pool))
    return 0


def cmd_check_layout(args) -> int:
    layout, _ = fileio.load_layout(args.layout)
    mask = fileio.load_mask(args.mask)
    bounds = None
    if args.n_min is not None or args.n_max is not None:
        bounds = (args.n_min or 1, args.n_max if args.n_max is not None else 10**9)
    problems = layout.violations(mask, bounds)
    for p in problems:
        print(p)
    if problems:
        return EXIT_CONSTRAINT
    print(f"layout ok: {len(layout)} circles")
    return 0


def cmd_preview(args) -> int:
    layout, placements = fileio.load_layout(args.layout)
    mask = fileio.load_mask(args.mask)
    fileio.save_texture(args.out, render_preview(layout, mask, placements))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advlayout", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the layout search")
    p.add_argument("--config", required=True)
    p.add_argument("--oracle", help="'synthetic' or 'cmd:<command line>'")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--itr-max", type=int)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("resume", help="continue a search from its checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--extra", type=int, required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--oracle")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("evaluate", help="one fitness pass with P@0.5 and heading table")
    p.add_argument("--texture", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--oracle")
    p.add_argument("--config")
    p.add_argument("--tau", type=float)
    p.add_argument("--target-class", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compose", help="paste a layout's stickers onto a base texture")
    p.add_argument("--layout", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("check-layout", help="validate overlap and mask constraints")
    p.add_argument("--layout", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.set_defaults(func=cmd_check_layout)

    p = sub.add_parser("preview", help="draw circles and inscribed squares over the mask")
    p.add_argument("--layout", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preview)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LayoutInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (OracleError, OptimizationAborted) as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (InvalidArgumentError, AdvLayoutError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
