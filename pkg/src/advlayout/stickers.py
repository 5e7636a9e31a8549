"""Sticker pool and the two selection strategies: uniform random and important-aware."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from advlayout.compositor import Placement, TextureCanvas, _paste_into
from advlayout.errors import (
    DuplicateStickerError,
    EmptyPoolError,
    InvalidArgumentError,
    MissingStickerError,
    StickerDecodeError,
)
from advlayout.fitness import FitnessEvaluator
from advlayout.layout import Circle

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")
MAX_TRANSFORM_DEGREES = 30.0


@dataclass(eq=False)
class Sticker:
    id: str
    image: np.ndarray
    alpha: np.ndarray | None = None
    _scaled: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
            raise InvalidArgumentError(f"sticker {self.id!r} must be (H, W, 3), got {img.shape}")
        self.image = np.ascontiguousarray(img, dtype=np.uint8)
        if self.alpha is not None:
            alpha = np.asarray(self.alpha, dtype=np.uint8)
            if alpha.shape != img.shape[:2]:
                raise InvalidArgumentError(f"sticker {self.id!r} alpha shape mismatch")
            self.alpha = None if (alpha == 255).all() else np.ascontiguousarray(alpha)
        # zero alpha stays zero under bilinear scaling, so pasting is a no-op
        self.invisible = self.alpha is not None and not self.alpha.any()

    @classmethod
    def solid(cls, sticker_id: str, color: Sequence[int], size: int = 8, alpha: int = 255) -> "Sticker":
        img = np.empty((size, size, 3), dtype=np.uint8)
        img[:] = np.asarray(color, dtype=np.uint8)
        return cls(sticker_id, img, np.full((size, size), alpha, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.image.shape[1]

    @property
    def height(self) -> int:
        return self.image.shape[0]

    def scaled(self, size: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Bilinear resize to size x size; aspect ratio is not preserved."""
        if size not in self._scaled:
            if (self.height, self.width) == (size, size):
                rgb, alpha = self.image, self.alpha
            else:
                rgb = np.asarray(
                    Image.fromarray(self.image, "RGB").resize((size, size), Image.BILINEAR)
                )
                alpha = None
                if self.alpha is not None:
                    alpha = np.asarray(
                        Image.fromarray(self.alpha, "L").resize((size, size), Image.BILINEAR)
                    )
            self._scaled[size] = (rgb, alpha)
        return self._scaled[size]


class StickerPool:
    """Stickers ordered by id; iteration order is the deterministic tie-break order."""

    def __init__(self, stickers: Iterable[Sticker]):
        items = sorted(stickers, key=lambda s: s.id)
        ids = [s.id for s in items]
        for a, b in zip(ids, ids[1:]):
            if a == b:
                raise DuplicateStickerError(f"duplicate sticker id {a!r}")
        self.stickers: tuple[Sticker, ...] = tuple(items)
        self._by_id = {s.id: s for s in items}

    def __len__(self) -> int:
        return len(self.stickers)

    def __iter__(self):
        return iter(self.stickers)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.stickers]

    def get(self, sticker_id: str | None) -> Sticker:
        try:
            return self._by_id[sticker_id]
        except KeyError:
            raise MissingStickerError(sticker_id) from None


def load_sticker(path: Path) -> Sticker:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("RGBA", "LA", "PA") or "transparency" in img.info:
                rgba = np.asarray(img.convert("RGBA"))
                return Sticker(path.stem, rgba[..., :3], rgba[..., 3])
            return Sticker(path.stem, np.asarray(img.convert("RGB")))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise StickerDecodeError(path, str(exc)) from exc


def load_pool(directory: str | Path) -> StickerPool:
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyPoolError(f"sticker directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise EmptyPoolError(f"no sticker images in {directory}")
    return StickerPool(load_sticker(p) for p in files)


def select_random(pool: StickerPool, rng: np.random.Generator) -> Sticker:
    if not len(pool):
        raise EmptyPoolError("cannot select from an empty pool")
    return pool.stickers[int(rng.integers(len(pool)))]


def random_transform(rng: np.random.Generator) -> float:
    """Extra rotation: half the time uniform in [-30, 30] degrees, otherwise none."""
    if rng.random() <= 0.5:
        return float(rng.uniform(-MAX_TRANSFORM_DEGREES, MAX_TRANSFORM_DEGREES))
    return 0.0


@dataclass
class TextureState:
    """A texture together with its already-known fitness."""

    texture: TextureCanvas
    fitness: int


def compute_gain(
    evaluator: FitnessEvaluator,
    current: TextureState,
    circle: Circle,
    sticker: Sticker,
    rotation_degrees: float = 0.0,
) -> int:
    """Drop in fitness obtained by pasting ``sticker`` into ``circle`` on the current texture."""
    candidate = current.texture.copy()
    _paste_into(candidate.pixels, Placement(circle, sticker.id, rotation_degrees), sticker)
    return current.fitness - evaluator(candidate).fitness


def select_important(
    evaluator: FitnessEvaluator,
    current: TextureState,
    circle: Circle,
    pool: StickerPool,
    rotation_degrees: float = 0.0,
) -> tuple[Sticker, int]:
    """Sticker with the largest gain for this circle; ties go to the lowest id."""
    if not len(pool):
        raise EmptyPoolError("cannot select from an empty pool")
    best, best_gain = None, None
    for sticker in pool:
        gain = compute_gain(evaluator, current, circle, sticker, rotation_degrees)
        if best_gain is None or gain > best_gain:
            best, best_gain = sticker, gain
    return best, best_gain
