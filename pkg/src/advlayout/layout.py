"""Circle layouts: overlap and mask constraints, constrained random initialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from advlayout.errors import InvalidArgumentError, LayoutInfeasibleError

SELECTION_MODES = ("random", "important-aware")


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self) -> None:
        if not (self.r > 0) or not math.isfinite(self.r):
            raise InvalidArgumentError(f"circle radius must be positive, got {self.r}")

    @property
    def area(self) -> float:
        return math.pi * self.r * self.r


@dataclass(frozen=True)
class Layout:
    circles: tuple[Circle, ...] = ()
    gamma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "circles", tuple(self.circles))

    def __len__(self) -> int:
        return len(self.circles)

    def __iter__(self):
        return iter(self.circles)

    def violations(self, mask: "Mask", n_bounds: tuple[int, int] | None = None) -> list[str]:
        """Human-readable list of broken invariants; empty when the layout is valid."""
        problems = []
        for i, c in enumerate(self.circles):
            if not (0 <= c.cx < mask.width and 0 <= c.cy < mask.height):
                problems.append(f"circle {i} center ({c.cx}, {c.cy}) outside texture")
            elif not mask.allowed(c.cx, c.cy):
                problems.append(f"circle {i} center ({c.cx}, {c.cy}) on forbidden mask pixel")
        for i in range(len(self.circles)):
            for j in range(i + 1, len(self.circles)):
                a, b = self.circles[i], self.circles[j]
                d = math.hypot(a.cx - b.cx, a.cy - b.cy)
                if d < self.gamma * (a.r + b.r):
                    problems.append(
                        f"overlap between circles {i} and {j}: "
                        f"distance {d:.6g} < {self.gamma:g}*({a.r:.6g}+{b.r:.6g})"
                    )
        if n_bounds is not None:
            lo, hi = n_bounds
            if not lo <= len(self.circles) <= hi:
                problems.append(f"circle count {len(self.circles)} outside [{lo}, {hi}]")
        return problems


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary paintable region; True marks pixels where a circle center may go."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=bool)
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise InvalidArgumentError(f"mask must be a non-empty 2-D grid, got shape {grid.shape}")
        grid = np.ascontiguousarray(grid)
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)

    @classmethod
    def full(cls, width: int, height: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_gray(cls, gray: np.ndarray) -> "Mask":
        """Threshold an 8-bit grayscale raster: values >= 128 are allowed."""
        return cls(np.asarray(gray) >= 128)

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def allowed_count(self) -> int:
        return int(self.grid.sum())

    def pixel_of(self, x: float, y: float) -> tuple[int, int]:
        # round half up, clamped to the grid
        ix = min(max(int(math.floor(x + 0.5)), 0), self.width - 1)
        iy = min(max(int(math.floor(y + 0.5)), 0), self.height - 1)
        return ix, iy

    def allowed(self, x: float, y: float) -> bool:
        ix, iy = self.pixel_of(x, y)
        return bool(self.grid[iy, ix])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.grid, other.grid)

    def cell_slack(self, cell: int) -> np.ndarray:
        """Per-cell +inf if a center inside the cell can round onto an allowed pixel, else -inf."""
        cache = self.__dict__.setdefault("_cell_cache", {})
        if cell not in cache:
            w, h = self.width, self.height
            x0 = np.arange(0, w, cell, dtype=float)
            y0 = np.arange(0, h, cell, dtype=float)
            lo_x = np.floor(x0 + 0.5).astype(np.intp)
            hi_x = np.minimum(np.floor(np.minimum(x0 + cell, w) + 0.5).astype(np.intp), w - 1)
            lo_y = np.floor(y0 + 0.5).astype(np.intp)
            hi_y = np.minimum(np.floor(np.minimum(y0 + cell, h) + 0.5).astype(np.intp), h - 1)
            csum = np.zeros((h + 1, w + 1), dtype=np.int64)
            csum[1:, 1:] = self.grid.cumsum(0).cumsum(1)
            counts = (
                csum[hi_y[:, None] + 1, hi_x[None, :] + 1]
                - csum[lo_y[:, None], hi_x[None, :] + 1]
                - csum[hi_y[:, None] + 1, lo_x[None, :]]
                + csum[lo_y[:, None], lo_x[None, :]]
            )
            slack = np.where(counts > 0, np.inf, -np.inf)
            slack.flags.writeable = False
            cache[cell] = slack
        return cache[cell]


@dataclass
class SearchConfig:
    n_min: int = 5
    n_max: int = 15
    a_min: float = 0.001
    a_max: float = 0.1
    gamma: float = 1.0
    tau: float = 0.5
    itr_max: int = 10000
    target_class: int = 0
    seed: int = 0
    max_resamples: int = 1000
    selection: str = "random"
    oracle_retries: int = 3
    retry_backoff: float = 0.5
    cache_fitness: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        problems = []
        if not isinstance(self.n_min, int) or self.n_min < 1:
            problems.append("n_min must be an integer >= 1")
        if not isinstance(self.n_max, int) or self.n_max < self.n_min:
            problems.append("n_max must be an integer >= n_min")
        if not (0 < self.a_min <= self.a_max <= 0.1):
            problems.append("area ratios must satisfy 0 < a_min <= a_max <= 0.1")
        if not self.gamma > 0:
            problems.append("gamma must be positive")
        if not 0 < self.tau < 1:
            problems.append("tau must lie in (0, 1)")
        if not isinstance(self.itr_max, int) or self.itr_max < 1:
            problems.append("itr_max must be an integer >= 1")
        if not isinstance(self.max_resamples, int) or self.max_resamples < 1:
            problems.append("max_resamples must be an integer >= 1")
        if self.selection not in SELECTION_MODES:
            problems.append(f"selection must be one of {SELECTION_MODES}")
        if not isinstance(self.oracle_retries, int) or self.oracle_retries < 1:
            problems.append("oracle_retries must be an integer >= 1")
        if self.retry_backoff < 0:
            problems.append("retry_backoff must be non-negative")
        if problems:
            raise InvalidArgumentError("invalid search config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "SearchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def radius_from_ratio(texture_area: float, a: float) -> float:
    """Radius of a circle for area ratio ``a`` of a texture, ``sqrt(A * a)``.

    The formula is kept as-is: the resulting circle covers ``pi * a`` of the
    texture rather than ``a``.
    """
    if not (texture_area > 0) or not (a > 0):
        raise InvalidArgumentError(
            f"texture area and ratio must be positive, got {texture_area}, {a}"
        )
    return math.sqrt(texture_area * a)


def _clear_of(cx: float, cy: float, r: float, recorded: Iterable[Circle], gamma: float) -> bool:
    for c in recorded:
        # equality is admissible: distance >= gamma * (r_i + r_j)
        if math.hypot(cx - c.cx, cy - c.cy) < gamma * (r + c.r):
            return False
    return True


def check_circle(
    candidate: Circle,
    recorded: Layout | Sequence[Circle],
    mask: Mask,
    gamma: float,
) -> bool:
    """Center-in-mask test plus pairwise overlap test against every recorded circle."""
    if not (0 <= candidate.cx < mask.width and 0 <= candidate.cy < mask.height):
        raise InvalidArgumentError(
            f"candidate center ({candidate.cx}, {candidate.cy}) outside "
            f"{mask.width}x{mask.height} texture"
        )
    if not mask.allowed(candidate.cx, candidate.cy):
        return False
    circles = recorded.circles if isinstance(recorded, Layout) else recorded
    return _clear_of(candidate.cx, candidate.cy, candidate.r, circles, gamma)


def _admissible(
    centers: np.ndarray, grid: np.ndarray, placed: list, r: float, gamma: float
) -> np.ndarray:
    """Indices of candidate centers on allowed pixels and clear of every placed circle."""
    height, width = grid.shape
    ix = np.minimum((centers[:, 0] + 0.5).astype(np.intp), width - 1)
    iy = np.minimum((centers[:, 1] + 0.5).astype(np.intp), height - 1)
    hits = np.flatnonzero(grid[iy, ix])
    if hits.size and placed:
        cand = centers[hits]
        clear = np.ones(hits.size, dtype=bool)
        for px, py, pr in placed:
            clear &= np.hypot(cand[:, 0] - px, cand[:, 1] - py) >= gamma * (r + pr)
        hits = hits[clear]
    return hits


def make_rng(seed: int) -> np.random.Generator:
    """The single PCG64 stream every sampling step draws from."""
    return np.random.Generator(np.random.PCG64(seed))


def _skip(rng: np.random.Generator, draws: int) -> None:
    """Jump past ``draws`` 64-bit outputs exactly as if they had been consumed."""
    bg = rng.bit_generator
    before = bg.state
    bg.advance(draws)
    if before.get("has_uint32"):
        # advance() drops the buffered 32-bit half-word; sampling would have kept it
        after = bg.state
        after["has_uint32"], after["uinteger"] = before["has_uint32"], before["uinteger"]
        bg.state = after


class _FreeSpace:
    """Coarse certificate of where another circle could still be centered.

    For every cell, ``slack`` is the largest gamma*r for which some point of
    the cell might still clear every placed circle; mask-forbidden cells
    have slack -inf. A block of candidates with gamma*r above the maximum
    slack cannot produce a hit, so it can be skipped without sampling.
    """

    def __init__(self, mask: Mask, gamma: float, cell: int = 16):
        w, h = mask.width, mask.height
        self.gamma = gamma
        self.x0 = np.arange(0, w, cell, dtype=float)
        self.y0 = np.arange(0, h, cell, dtype=float)
        self.x1 = np.minimum(self.x0 + cell, w)
        self.y1 = np.minimum(self.y0 + cell, h)
        self.slack = mask.cell_slack(cell).copy()

    def add(self, cx: float, cy: float, r: float) -> None:
        fx = np.maximum(np.abs(self.x0 - cx), np.abs(self.x1 - cx))
        fy = np.maximum(np.abs(self.y0 - cy), np.abs(self.y1 - cy))
        far = np.hypot(fx[None, :], fy[:, None])
        # margin keeps the certificate conservative under rounding
        np.minimum(self.slack, far - self.gamma * r + 1e-6, out=self.slack)

    def hopeless(self, r: float) -> bool:
        return self.gamma * r > self.slack.max()


def init_layout(
    config: SearchConfig, mask: Mask, rng: np.random.Generator, *, prune: bool = True
) -> Layout:
    """Draw a random layout satisfying the overlap and mask constraints.

    Draw order on ``rng``: the circle count, then for each circle its area
    ratio followed by a block of ``max_resamples`` candidate centers (x, y
    interleaved). The first admissible center of the block is kept; if none
    is admissible a fresh ratio and block are drawn. The layout gives up
    after ``n * max_resamples**2`` center candidates.

    ``prune`` skips blocks that provably contain no admissible center by
    advancing the stream past them; the result is identical either way.
    """
    if mask.allowed_count == 0:
        raise LayoutInfeasibleError(0, 0)
    width, height = mask.width, mask.height
    area = float(width * height)
    grid = mask.grid
    gamma = config.gamma
    block = config.max_resamples
    scale = np.array([width, height], dtype=float)
    top = np.array([np.nextafter(width, 0.0), np.nextafter(height, 0.0)])
    free = _FreeSpace(mask, gamma) if prune else None
    n = int(rng.integers(config.n_min, config.n_max, endpoint=True))
    budget = n * block ** 2
    attempts = 0
    circles: list[Circle] = []
    placed: list[tuple[float, float, float]] = []
    for index in range(n):
        while True:
            if attempts >= budget:
                raise LayoutInfeasibleError(index, attempts)
            a = float(rng.uniform(config.a_min, config.a_max))
            r = radius_from_ratio(area, a)
            take = min(block, budget - attempts)
            attempts += take
            if free is not None and free.hopeless(r):
                _skip(rng, 2 * take)
                continue
            centers = np.minimum(rng.random((take, 2)) * scale, top)
            # most successful blocks hit early, so test a short prefix first
            hits = _admissible(centers[:32], grid, placed, r, gamma)
            if not hits.size and take > 32:
                hits = _admissible(centers[32:], grid, placed, r, gamma) + 32
            if hits.size:
                cx, cy = (float(v) for v in centers[hits[0]])
                circles.append(Circle(cx, cy, r))
                placed.append((cx, cy, r))
                if free is not None:
                    free.add(cx, cy, r)
                break
    return Layout(tuple(circles), gamma)


def circle_pixel_mask(circle: Circle, width: int, height: int) -> np.ndarray:
    """Pixels (centers at integer coordinates) within distance r of the circle center."""
    ys, xs = np.ogrid[:height, :width]
    return (xs - circle.cx) ** 2 + (ys - circle.cy) ** 2 <= circle.r ** 2


def layout_stats(layout: Layout, mask: Mask) -> dict:
    covered = np.zeros(mask.grid.shape, dtype=bool)
    for c in layout.circles:
        covered |= circle_pixel_mask(c, mask.width, mask.height)
    allowed = mask.allowed_count
    fraction = float((covered & mask.grid).sum()) / allowed if allowed else 0.0
    return {
        "count": len(layout.circles),
        "total_circle_area": float(sum(c.area for c in layout.circles)),
        "covered_mask_fraction": fraction,
    }
