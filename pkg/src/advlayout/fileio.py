"""Reading and writing the on-disk formats: PNG rasters, layout files, region maps, view lists."""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from advlayout.compositor import Placement, Region, RegionMap, TextureCanvas
from advlayout.errors import InvalidArgumentError
from advlayout.layout import Circle, Layout, Mask
from advlayout.protocol import ViewSpec

PathLike = str | os.PathLike


def encode_png(canvas: TextureCanvas) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(canvas.pixels, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> TextureCanvas:
    with Image.open(io.BytesIO(data)) as img:
        return TextureCanvas(np.asarray(img.convert("RGB"), dtype=np.uint8))


def save_texture(path: PathLike, canvas: TextureCanvas) -> None:
    Path(path).write_bytes(encode_png(canvas))


def load_texture(path: PathLike) -> TextureCanvas:
    with Image.open(path) as img:
        return TextureCanvas(np.asarray(img.convert("RGB"), dtype=np.uint8))


def load_mask(path: PathLike) -> Mask:
    with Image.open(path) as img:
        return Mask.from_gray(np.asarray(img.convert("L")))


def save_mask(path: PathLike, mask: Mask) -> None:
    Image.fromarray(np.where(mask.grid, 255, 0).astype(np.uint8), "L").save(path, format="PNG")


def layout_to_dict(layout: Layout, placements: Sequence[Placement] | None = None) -> dict:
    if placements is not None and len(placements) != len(layout.circles):
        raise InvalidArgumentError("placements must pair one-to-one with circles")
    records = []
    for i, c in enumerate(layout.circles):
        p = placements[i] if placements is not None else None
        records.append({
            "cx": c.cx,
            "cy": c.cy,
            "r": c.r,
            "sticker_id": p.sticker_id if p else None,
            "rotation_degrees": p.rotation_degrees if p else 0.0,
        })
    return {"gamma": layout.gamma, "circles": records}


def layout_from_dict(data: dict) -> tuple[Layout, list[Placement]]:
    try:
        gamma = float(data["gamma"])
        circles, placements = [], []
        for rec in data["circles"]:
            c = Circle(float(rec["cx"]), float(rec["cy"]), float(rec["r"]))
            circles.append(c)
            sid = rec.get("sticker_id")
            placements.append(
                Placement(c, None if sid is None else str(sid), float(rec.get("rotation_degrees", 0.0)))
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"malformed layout: {exc}") from exc
    return Layout(tuple(circles), gamma), placements


def save_layout(path: PathLike, layout: Layout, placements: Sequence[Placement] | None = None) -> None:
    # json writes floats with repr, i.e. full round-trip precision
    Path(path).write_text(json.dumps(layout_to_dict(layout, placements), indent=2) + "\n")


def load_layout(path: PathLike) -> tuple[Layout, list[Placement]]:
    try:
        data = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise InvalidArgumentError(f"layout file {path} is not valid JSON: {exc}") from exc
    return layout_from_dict(data)


def load_region_map(path: PathLike) -> RegionMap:
    """JSON document ``{"regions": [{"label", "x", "y", "w", "h"}, ...]}``."""
    try:
        data = json.loads(Path(path).read_text())
        regions = tuple(
            Region(str(r["label"]), float(r["x"]), float(r["y"]), float(r["w"]), float(r["h"]))
            for r in data["regions"]
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed region map {path}: {exc}") from exc
    return RegionMap(regions)


def save_region_map(path: PathLike, region_map: RegionMap) -> None:
    data = {"regions": [
        {"label": r.label, "x": r.x, "y": r.y, "w": r.w, "h": r.h} for r in region_map.regions
    ]}
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_views(path: PathLike) -> list[ViewSpec]:
    """CSV with header ``id,yaw_degrees,tag``."""
    views = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "yaw_degrees"} <= set(reader.fieldnames):
            raise InvalidArgumentError(f"views file {path} needs id,yaw_degrees[,tag] columns")
        for row in reader:
            try:
                views.append(ViewSpec(int(row["id"]), float(row["yaw_degrees"]), row.get("tag") or ""))
            except ValueError as exc:
                raise InvalidArgumentError(f"bad view row {row}: {exc}") from exc
    ids = [v.id for v in views]
    if len(set(ids)) != len(ids):
        raise InvalidArgumentError(f"duplicate view ids in {path}")
    if not views:
        raise InvalidArgumentError(f"views file {path} is empty")
    return views


def save_views(path: PathLike, views: Sequence[ViewSpec]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "yaw_degrees", "tag"])
        for v in views:
            writer.writerow([v.id, repr(float(v.yaw_degrees)), v.tag])


def sweep_views(count: int, tag: str = "yaw") -> list[ViewSpec]:
    """``count`` views evenly spaced over a full turn, starting at yaw 0."""
    return [ViewSpec(i, i * 360.0 / count, tag) for i in range(count)]
