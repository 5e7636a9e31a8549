"""Random search over circle layouts, keeping the texture that fools the most views."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from advlayout.compositor import (
    Placement,
    RegionMap,
    TextureCanvas,
    _paste_into,
    compose,
    orientation_for,
)
from advlayout.errors import (
    CorruptCheckpointError,
    EvaluationError,
    InvalidArgumentError,
    LayoutInfeasibleError,
    OptimizationAborted,
)
from advlayout.fitness import FitnessEvaluator
from advlayout.layout import Layout, Mask, SearchConfig, init_layout, make_rng
from advlayout.oracle import FitnessOracle
from advlayout.protocol import ViewSpec
from advlayout.stickers import (
    StickerPool,
    TextureState,
    random_transform,
    select_important,
    select_random,
)

log = logging.getLogger(__name__)

# consecutive unplaceable layouts tolerated before the config is declared infeasible
LAYOUT_REDRAWS = 10
BUDGET = "budget"
TOTAL_EVASION = "total-evasion"


@dataclass
class OptimizationResult:
    config: SearchConfig
    best_texture: TextureCanvas
    best_layout: Layout
    best_placements: list[Placement]
    best_fitness: int
    base_fitness: int
    iterations_used: int
    history: list[tuple[int, int, int]]
    terminated_by: str | None
    rng_state: dict = field(repr=False, default_factory=dict)
    best_digest: str = ""

    def __post_init__(self) -> None:
        if not self.best_digest:
            self.best_digest = self.best_texture.digest()


def _assign_random(
    layout: Layout,
    base: TextureCanvas,
    pool: StickerPool,
    rng: np.random.Generator,
    region_map: RegionMap | None,
) -> tuple[list[Placement], TextureCanvas]:
    placements = []
    for c in layout.circles:
        sticker = select_random(pool, rng)
        placements.append(Placement(c, sticker.id, orientation_for((c.cx, c.cy), region_map)))
    return placements, compose(base, placements, pool)


def _assign_important(
    layout: Layout,
    base: TextureCanvas,
    pool: StickerPool,
    rng: np.random.Generator,
    region_map: RegionMap | None,
    evaluator: FitnessEvaluator,
) -> tuple[list[Placement], TextureCanvas]:
    texture = base.copy()
    placements = []
    for c in layout.circles:
        current = TextureState(texture, evaluator(texture).fitness)
        base_rotation = orientation_for((c.cx, c.cy), region_map)
        sticker, _ = select_important(evaluator, current, c, pool, base_rotation)
        # the random transform is drawn only after the sticker is chosen
        placement = Placement(c, sticker.id, base_rotation + random_transform(rng))
        _paste_into(texture.pixels, placement, sticker)
        placements.append(placement)
    return placements, texture


def _propose(config, mask, rng, base, pool, region_map, evaluator):
    failures = 0
    while True:
        try:
            layout = init_layout(config, mask, rng)
            break
        except LayoutInfeasibleError:
            failures += 1
            if failures >= LAYOUT_REDRAWS:
                raise
            log.debug("layout draw %d failed, redrawing", failures)
    if config.selection == "important-aware":
        placements, texture = _assign_important(layout, base, pool, rng, region_map, evaluator)
    else:
        placements, texture = _assign_random(layout, base, pool, rng, region_map)
    return layout, placements, texture


def _check_inputs(config, base, mask, pool, views) -> None:
    config.validate()
    if (mask.width, mask.height) != (base.width, base.height):
        raise InvalidArgumentError("mask and base texture sizes differ")
    if not len(pool):
        raise InvalidArgumentError("sticker pool is empty")
    if not views:
        raise InvalidArgumentError("view list is empty")


def _make_evaluator(config: SearchConfig, oracle: FitnessOracle, views) -> FitnessEvaluator:
    return FitnessEvaluator(
        oracle,
        views,
        config.tau,
        config.target_class,
        cache=config.cache_fitness,
        retries=config.oracle_retries,
        backoff=config.retry_backoff,
    )


def _run(
    state: OptimizationResult,
    rng: np.random.Generator,
    until: int,
    evaluator: FitnessEvaluator,
    base: TextureCanvas,
    mask: Mask,
    pool: StickerPool,
    region_map: RegionMap | None,
) -> OptimizationResult:
    config = state.config
    for itr in range(state.iterations_used + 1, until + 1):
        try:
            layout, placements, texture = _propose(
                config, mask, rng, base, pool, region_map, evaluator
            )
            report = evaluator(texture)
        except EvaluationError as exc:
            state.rng_state = rng.bit_generator.state
            state.best_digest = state.best_texture.digest()
            raise OptimizationAborted(f"oracle failed at iteration {itr}: {exc}", state) from exc
        if report.fitness <= state.best_fitness:
            state.best_fitness = report.fitness
            state.best_texture = texture
            state.best_layout = layout
            state.best_placements = placements
        state.history.append((itr, report.fitness, state.best_fitness))
        state.iterations_used = itr
        if state.best_fitness == 0:
            state.terminated_by = TOTAL_EVASION
            break
    else:
        state.terminated_by = BUDGET
    state.rng_state = rng.bit_generator.state
    state.best_digest = state.best_texture.digest()
    log.info(
        "search stopped after %d iterations (%s), best fitness %d",
        state.iterations_used, state.terminated_by, state.best_fitness,
    )
    return state


def optimize(
    config: SearchConfig,
    oracle: FitnessOracle,
    base_texture: TextureCanvas,
    mask: Mask,
    pool: StickerPool,
    views: Sequence[ViewSpec],
    region_map: RegionMap | None = None,
) -> OptimizationResult:
    """Random search for the sticker layout that minimizes the number of detected views.

    Every iteration draws a fresh layout, fills it with stickers according to
    ``config.selection`` and keeps the candidate when its fitness is no worse
    than the incumbent. Stops after ``config.itr_max`` iterations or as soon
    as no view detects the object.
    """
    _check_inputs(config, base_texture, mask, pool, views)
    rng = make_rng(config.seed)
    evaluator = _make_evaluator(config, oracle, views)
    try:
        base_fitness = evaluator(base_texture).fitness
    except EvaluationError as exc:
        raise OptimizationAborted(f"oracle failed on the base texture: {exc}") from exc
    state = OptimizationResult(
        config=copy.deepcopy(config),
        best_texture=base_texture.copy(),
        best_layout=Layout((), config.gamma),
        best_placements=[],
        best_fitness=base_fitness,
        base_fitness=base_fitness,
        iterations_used=0,
        history=[],
        terminated_by=None,
    )
    if base_fitness == 0:
        state.terminated_by = TOTAL_EVASION
        state.rng_state = rng.bit_generator.state
        return state
    return _run(state, rng, config.itr_max, evaluator, base_texture, mask, pool, region_map)


def resume(
    checkpoint: OptimizationResult,
    extra_iterations: int,
    oracle: FitnessOracle,
    base_texture: TextureCanvas,
    mask: Mask,
    pool: StickerPool,
    views: Sequence[ViewSpec],
    region_map: RegionMap | None = None,
) -> OptimizationResult:
    """Continue a finished run for ``extra_iterations`` more iterations.

    The outcome equals a single uninterrupted run with the combined budget.
    """
    if extra_iterations < 0:
        raise InvalidArgumentError("extra_iterations must be non-negative")
    if checkpoint.best_texture.digest() != checkpoint.best_digest:
        raise CorruptCheckpointError("best texture does not match its recorded digest")
    if not checkpoint.rng_state:
        raise CorruptCheckpointError("checkpoint carries no rng state")
    state = copy.deepcopy(checkpoint)
    state.config = replace(state.config, itr_max=state.config.itr_max + extra_iterations)
    if state.terminated_by == TOTAL_EVASION or extra_iterations == 0:
        return state
    _check_inputs(state.config, base_texture, mask, pool, views)
    rng = make_rng(0)
    rng.bit_generator.state = copy.deepcopy(state.rng_state)
    evaluator = _make_evaluator(state.config, oracle, views)
    return _run(state, rng, state.config.itr_max, evaluator, base_texture, mask, pool, region_map)


def history_csv(history: Sequence[tuple[int, int, int]]) -> str:
    lines = ["iteration,candidate_fitness,best_fitness"]
    lines += [f"{i},{c},{b}" for i, c, b in history]
    return "\n".join(lines) + "\n"


def parse_history_csv(text: str) -> list[tuple[int, int, int]]:
    rows = text.strip().splitlines()
    if not rows or rows[0] != "iteration,candidate_fitness,best_fitness":
        raise InvalidArgumentError("not a history CSV")
    return [tuple(int(v) for v in row.split(",")) for row in rows[1:]]


def save_checkpoint(path: str | Path, result: OptimizationResult) -> Path:
    """JSON checkpoint with the best texture stored next to it as a PNG named by digest."""
    from advlayout.fileio import layout_to_dict, save_texture

    path = Path(path)
    png = path.with_name(f"{path.stem}-{result.best_digest[:16]}.png")
    save_texture(png, result.best_texture)
    doc = {
        "format": "advlayout-checkpoint",
        "version": 1,
        "config": result.config.to_dict(),
        "rng_state": result.rng_state,
        "best_layout": layout_to_dict(result.best_layout, result.best_placements),
        "best_fitness": result.best_fitness,
        "base_fitness": result.base_fitness,
        "iterations_used": result.iterations_used,
        "terminated_by": result.terminated_by,
        "history": [list(row) for row in result.history],
        "best_texture": {"file": png.name, "digest": result.best_digest},
    }
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return png


def load_checkpoint(path: str | Path) -> OptimizationResult:
    from advlayout.fileio import layout_from_dict, load_texture

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        if doc.get("format") != "advlayout-checkpoint":
            raise CorruptCheckpointError(f"{path} is not a checkpoint")
        layout, placements = layout_from_dict(doc["best_layout"])
        tex_info = doc["best_texture"]
        texture = load_texture(path.with_name(tex_info["file"]))
        result = OptimizationResult(
            config=SearchConfig.from_dict(doc["config"]),
            best_texture=texture,
            best_layout=layout,
            best_placements=placements,
            best_fitness=int(doc["best_fitness"]),
            base_fitness=int(doc["base_fitness"]),
            iterations_used=int(doc["iterations_used"]),
            history=[tuple(int(v) for v in row) for row in doc["history"]],
            terminated_by=doc["terminated_by"],
            rng_state=doc["rng_state"],
            best_digest=str(tex_info["digest"]),
        )
    except CorruptCheckpointError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if texture.digest() != result.best_digest:
        raise CorruptCheckpointError("best texture does not match its recorded digest")
    return result
