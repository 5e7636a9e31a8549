"""Fitness: how many views still detect the target object."""

from __future__ import annotations

import logging
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Sequence

from advlayout.compositor import TextureCanvas
from advlayout.errors import EvaluationError, InvalidArgumentError, OracleError
from advlayout.oracle import FitnessOracle, ViewResult, ViewSpec

log = logging.getLogger(__name__)


def is_detected(result: ViewResult, tau: float, target_class: int) -> bool:
    # strictly above the threshold counts as a detection
    return result.class_id == target_class and result.objectness > tau


@dataclass(frozen=True)
class FitnessReport:
    fitness: int
    per_view: tuple[ViewResult, ...]
    detected: tuple[bool, ...]
    texture_digest: str


def _check_results(views: Sequence[ViewSpec], results: Sequence[ViewResult]) -> None:
    if len(results) != len(views):
        missing = views[len(results)].id if len(results) < len(views) else None
        raise EvaluationError(
            f"oracle returned {len(results)} results for {len(views)} views", missing
        )
    for view, res in zip(views, results):
        if res.view_id != view.id:
            raise EvaluationError(f"oracle answered view {res.view_id} out of order", view.id)


def fitness(
    oracle: FitnessOracle,
    texture: TextureCanvas,
    views: Sequence[ViewSpec],
    tau: float,
    target_class: int,
    digest: str | None = None,
) -> FitnessReport:
    """Single oracle pass; a view counts when class matches and objectness > tau."""
    if not views:
        raise InvalidArgumentError("fitness needs at least one view")
    try:
        results = list(oracle.evaluate(texture, views, target_class))
    except EvaluationError:
        raise
    except OracleError as exc:
        raise EvaluationError(f"oracle failed: {exc}", views[0].id) from exc
    _check_results(views, results)
    detected = tuple(is_detected(r, tau, target_class) for r in results)
    return FitnessReport(
        fitness=sum(detected),
        per_view=tuple(results),
        detected=detected,
        texture_digest=digest or texture.fingerprint(),
    )


class FitnessEvaluator:
    """Bundles an oracle with its view set, retry policy and a content-keyed cache."""

    def __init__(
        self,
        oracle: FitnessOracle,
        views: Sequence[ViewSpec],
        tau: float = 0.5,
        target_class: int = 0,
        *,
        cache: bool = True,
        retries: int = 3,
        backoff: float = 0.5,
        cache_size: int = 65536,
    ):
        if not views:
            raise InvalidArgumentError("fitness needs at least one view")
        self.oracle = oracle
        self.views = tuple(views)
        self.tau = tau
        self.target_class = target_class
        self.cache_enabled = cache
        self.retries = retries if getattr(oracle, "retryable", False) else 1
        self.backoff = backoff
        self.cache_size = cache_size
        self._cache: OrderedDict[str, FitnessReport] = OrderedDict()
        self.oracle_calls = 0
        self.cache_hits = 0

    def __call__(self, texture: TextureCanvas) -> FitnessReport:
        key = texture.fingerprint()
        if self.cache_enabled:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                self.cache_hits += 1
                return hit
        report = self._evaluate(texture, key)
        if self.cache_enabled:
            self._cache[key] = report
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return report

    def _evaluate(self, texture: TextureCanvas, key: str) -> FitnessReport:
        for attempt in range(self.retries):
            self.oracle_calls += 1
            try:
                return fitness(
                    self.oracle, texture, self.views, self.tau, self.target_class, key
                )
            except EvaluationError as exc:
                if attempt + 1 == self.retries:
                    raise
                log.warning("oracle attempt %d failed: %s", attempt + 1, exc)
                time.sleep(self.backoff * 2 ** attempt)
                restart = getattr(self.oracle, "restart", None)
                if restart is not None:
                    try:
                        restart()
                    except OracleError as err:
                        log.warning("oracle restart failed: %s", err)
        raise AssertionError("unreachable")
