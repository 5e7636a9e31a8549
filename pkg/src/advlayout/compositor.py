"""Pasting stickers into a base UV texture along a circle layout."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
from PIL import Image, ImageDraw

from advlayout.errors import InvalidArgumentError, MissingStickerError
from advlayout.layout import Circle, Layout, Mask

if TYPE_CHECKING:
    from advlayout.stickers import Sticker, StickerPool

SQRT2 = math.sqrt(2.0)
REGION_LABELS = ("left", "right", "other")


@dataclass(eq=False)
class TextureCanvas:
    """RGB texture, ``pixels`` is a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidArgumentError(f"texture must be (H, W, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise InvalidArgumentError(f"texture must be uint8, got {px.dtype}")
        self.pixels = np.ascontiguousarray(px)

    @classmethod
    def blank(cls, width: int, height: int, color: Sequence[int] = (0, 0, 0)) -> "TextureCanvas":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = np.asarray(color, dtype=np.uint8)
        return cls(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def area(self) -> int:
        return self.width * self.height

    def copy(self) -> "TextureCanvas":
        return TextureCanvas(self.pixels.copy())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}:".encode())
        h.update(self.pixels.tobytes())
        return h.hexdigest()

    def fingerprint(self) -> str:
        """Fast content key for in-memory caches; ``digest`` is the persistent hash."""
        h1, h2 = _multiply_sum_hash(self.pixels)
        return f"{self.width}x{self.height}:{h1:016x}{h2:016x}"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TextureCanvas) and np.array_equal(self.pixels, other.pixels)


_HASH_KEYS: dict[int, np.ndarray] = {}


def _multiply_sum_hash(pixels: np.ndarray) -> tuple[int, int]:
    raw = pixels.reshape(-1)
    pad = (-raw.size) % 8
    if pad:
        raw = np.concatenate([raw, np.zeros(pad, dtype=np.uint8)])
    words = raw.view(np.uint64)
    keys = _HASH_KEYS.get(words.size)
    if keys is None:
        gen = np.random.Generator(np.random.PCG64(0x5EED5EED))
        keys = gen.integers(0, 2**64, size=(2, words.size), dtype=np.uint64, endpoint=False) | np.uint64(1)
        _HASH_KEYS[words.size] = keys
    # uint64 arithmetic wraps modulo 2**64
    return int(np.dot(words, keys[0])), int(np.dot(words, keys[1]))


@dataclass(frozen=True)
class Placement:
    circle: Circle
    sticker_id: str | None
    rotation_degrees: float = 0.0


@dataclass(frozen=True)
class Region:
    label: str
    x: float
    y: float
    w: float
    h: float

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


@dataclass(frozen=True)
class RegionMap:
    """Labeled, pairwise-disjoint rectangles in texture pixel coordinates."""

    regions: tuple[Region, ...] = ()

    def __post_init__(self) -> None:
        regions = tuple(self.regions)
        object.__setattr__(self, "regions", regions)
        for reg in regions:
            if reg.label not in REGION_LABELS:
                raise InvalidArgumentError(f"unknown region label {reg.label!r}")
            if reg.w <= 0 or reg.h <= 0:
                raise InvalidArgumentError(f"region {reg} has empty extent")
        for i, a in enumerate(regions):
            for b in regions[i + 1:]:
                if (
                    a.x < b.x + b.w and b.x < a.x + a.w
                    and a.y < b.y + b.h and b.y < a.y + a.h
                ):
                    raise InvalidArgumentError(f"regions overlap: {a} and {b}")

    def label_at(self, x: float, y: float) -> str:
        for reg in self.regions:
            if reg.contains(x, y):
                return reg.label
        return "other"


def inscribed_square(circle: Circle) -> tuple[tuple[float, float], float]:
    """Center and side of the largest axis-aligned square inside ``circle``."""
    return (circle.cx, circle.cy), SQRT2 * circle.r


def orientation_for(center: tuple[float, float], region_map: RegionMap | None) -> float:
    """Base sticker rotation in degrees; positive is counterclockwise on screen."""
    if region_map is None:
        return 0.0
    label = region_map.label_at(*center)
    if label == "left":
        return -90.0
    if label == "right":
        return 90.0
    return 0.0


def _cos_sin(degrees: float) -> tuple[float, float]:
    theta = math.fmod(degrees, 360.0)
    if theta < 0:
        theta += 360.0
    exact = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if theta in exact:
        return exact[theta]
    rad = math.radians(theta)
    return math.cos(rad), math.sin(rad)


def footprint(
    placement: Placement, width: int, height: int
) -> tuple[slice, slice, np.ndarray, np.ndarray, np.ndarray] | None:
    """Destination window, inside-mask and source indices for one placement.

    Pixel (x, y) has its center at integer coordinates. It belongs to the
    footprint when its offset from the circle center, rotated back by the
    placement angle, lies in the half-open square [-side/2, side/2)^2.
    """
    c = placement.circle
    (cx, cy), side = inscribed_square(c)
    size = max(1, int(round(side)))
    x0 = max(0, int(math.floor(cx - c.r)) - 1)
    x1 = min(width, int(math.ceil(cx + c.r)) + 2)
    y0 = max(0, int(math.floor(cy - c.r)) - 1)
    y1 = min(height, int(math.ceil(cy + c.r)) + 2)
    if x0 >= x1 or y0 >= y1:
        return None
    cos, sin = _cos_sin(placement.rotation_degrees)
    dx = (np.arange(x0, x1, dtype=float) - cx)[None, :]
    dy = (np.arange(y0, y1, dtype=float) - cy)[:, None]
    u = dx * cos - dy * sin
    v = dx * sin + dy * cos
    half = side / 2.0
    inside = (u >= -half) & (u < half) & (v >= -half) & (v < half)
    iu = np.clip(np.floor((u + half) * (size / side)).astype(np.intp), 0, size - 1)
    iv = np.clip(np.floor((v + half) * (size / side)).astype(np.intp), 0, size - 1)
    return slice(y0, y1), slice(x0, x1), inside, iv, iu


def _axis(d: np.ndarray, half: float, scale: float, size: int) -> tuple[slice, np.ndarray]:
    inside = np.flatnonzero((d >= -half) & (d < half))
    if not inside.size:
        return slice(0, 0), inside
    lo, hi = int(inside[0]), int(inside[-1]) + 1
    idx = np.clip(np.floor((d[lo:hi] + half) * scale).astype(np.intp), 0, size - 1)
    return slice(lo, hi), idx


def _axis_aligned_source(placement: Placement, width: int, height: int, rgb, alpha):
    """Dense-block variant of ``footprint`` for rotations by multiples of 90 degrees.

    Returns the destination window slices and the matching source blocks;
    the pixel selection is identical to the general path.
    """
    c = placement.circle
    side = SQRT2 * c.r
    size = rgb.shape[0]
    half, scale = side / 2.0, size / side
    x0 = max(0, int(math.floor(c.cx - c.r)) - 1)
    x1 = min(width, int(math.ceil(c.cx + c.r)) + 2)
    y0 = max(0, int(math.floor(c.cy - c.r)) - 1)
    y1 = min(height, int(math.ceil(c.cy + c.r)) + 2)
    if x0 >= x1 or y0 >= y1:
        return None
    dx = np.arange(x0, x1, dtype=float) - c.cx
    dy = np.arange(y0, y1, dtype=float) - c.cy
    cos, sin = _cos_sin(placement.rotation_degrees)
    if sin == 0.0:
        # u = cos*dx, v = cos*dy
        cols, iu = _axis(cos * dx, half, scale, size)
        rows, iv = _axis(cos * dy, half, scale, size)

        def pick(img):
            return img.take(iv, axis=0).take(iu, axis=1)
    else:
        # u = -sin*dy, v = sin*dx: rows follow u, columns follow v
        rows, iu = _axis(-sin * dy, half, scale, size)
        cols, iv = _axis(sin * dx, half, scale, size)

        def pick(img):
            return img.take(iu, axis=1).take(iv, axis=0).swapaxes(0, 1)
    if rows.stop == rows.start or cols.stop == cols.start:
        return None
    rows = slice(y0 + rows.start, y0 + rows.stop)
    cols = slice(x0 + cols.start, x0 + cols.stop)
    return rows, cols, pick(rgb), None if alpha is None else pick(alpha)


def _paste_into(
    pixels: np.ndarray, placement: Placement, sticker: "Sticker", *, fast: bool = True
) -> None:
    if placement.sticker_id != sticker.id:
        raise MissingStickerError(placement.sticker_id)
    if sticker.invisible:
        return
    size = max(1, int(round(inscribed_square(placement.circle)[1])))
    rgb, alpha = sticker.scaled(size)
    h, w = pixels.shape[:2]
    cos, sin = _cos_sin(placement.rotation_degrees)
    if fast and (cos == 0.0 or sin == 0.0):
        block = _axis_aligned_source(placement, w, h, rgb, alpha)
        if block is None:
            return
        rows, cols, src, a = block
        if a is None:
            pixels[rows, cols] = src
        else:
            window = pixels[rows, cols]
            # 255 * 255 + 127 still fits in uint16
            a = a.astype(np.uint16)[..., None]
            window[...] = (a * src + (255 - a) * window + 127) // 255
        return
    fp = footprint(placement, w, h)
    if fp is None:
        return
    rows, cols, inside, iv, iu = fp
    window = pixels[rows, cols]
    src = rgb[iv, iu]
    if alpha is None:
        window[inside] = src[inside]
        return
    a = alpha[iv, iu].astype(np.uint16)[..., None]
    blended = (a * src + (255 - a) * window + 127) // 255
    window[inside] = blended[inside].astype(np.uint8)


def paste_sticker(
    canvas: TextureCanvas, placement: Placement, sticker: "Sticker | None"
) -> TextureCanvas:
    """Return a copy of ``canvas`` with ``sticker`` pasted at ``placement``."""
    if sticker is None:
        raise MissingStickerError(placement.sticker_id)
    c = placement.circle
    if not (0 <= c.cx < canvas.width and 0 <= c.cy < canvas.height):
        raise InvalidArgumentError(f"placement center ({c.cx}, {c.cy}) outside canvas")
    out = canvas.copy()
    _paste_into(out.pixels, placement, sticker)
    return out


def compose(
    base: TextureCanvas, placements: Iterable[Placement], pool: "StickerPool"
) -> TextureCanvas:
    """Apply placements in order to a fresh copy of ``base``."""
    out = base.copy()
    for placement in placements:
        _paste_into(out.pixels, placement, pool.get(placement.sticker_id))
    return out


def render_preview(
    layout: Layout, mask: Mask, placements: Sequence[Placement] = ()
) -> TextureCanvas:
    """Mask in grayscale with circles outlined in red and inscribed squares in blue."""
    gray = np.where(mask.grid, 255, 0).astype(np.uint8)
    img = Image.fromarray(np.repeat(gray[:, :, None], 3, axis=2), "RGB")
    draw = ImageDraw.Draw(img)
    rotation = {p.circle: p.rotation_degrees for p in placements}
    for c in layout.circles:
        half = SQRT2 * c.r / 2.0
        cos, sin = _cos_sin(rotation.get(c, 0.0))
        corners = []
        for u, v in ((-half, -half), (half, -half), (half, half), (-half, half)):
            # inverse of the footprint mapping
            corners.append((c.cx + u * cos + v * sin, c.cy - u * sin + v * cos))
        draw.polygon(corners, outline=(0, 0, 255))
    for c in layout.circles:
        draw.ellipse((c.cx - c.r, c.cy - c.r, c.cx + c.r, c.cy + c.r), outline=(255, 0, 0))
    return TextureCanvas(np.asarray(img, dtype=np.uint8))
