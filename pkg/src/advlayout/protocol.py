"""Newline-delimited JSON messages exchanged with an external oracle process.

Every message is one JSON object on one line. ``encode`` emits a canonical
form (fixed key order, compact separators), so decoding and re-encoding a
canonical line reproduces it byte for byte. Unknown fields are ignored on
decode.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Union

from advlayout.errors import InvalidArgumentError, ProtocolError

PROTOCOL_VERSION = 1
TEXTURE_MODES = ("path", "inline")


@dataclass(frozen=True)
class ViewSpec:
    id: int
    yaw_degrees: float
    tag: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.yaw_degrees < 360:
            raise InvalidArgumentError(f"yaw must lie in [0, 360), got {self.yaw_degrees}")


@dataclass(frozen=True)
class ViewResult:
    """Raw detector output for one view; detection is decided by the caller."""

    view_id: int
    objectness: float
    class_id: int
    bbox: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class Hello:
    version: int
    name: str | None = None
    texture_mode: str | None = None


@dataclass(frozen=True)
class EvalRequest:
    request_id: int | str
    texture: str
    views: tuple[ViewSpec, ...]
    target_class: int


@dataclass(frozen=True)
class EvalResponse:
    request_id: int | str
    results: tuple[ViewResult, ...]


@dataclass(frozen=True)
class ErrorMessage:
    request_id: int | str | None
    message: str


Message = Union[Hello, EvalRequest, EvalResponse, ErrorMessage]


def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def encode(msg: Message) -> str:
    """Canonical single-line encoding, without the trailing newline."""
    if isinstance(msg, Hello):
        obj: dict[str, Any] = {"type": "hello", "version": msg.version}
        if msg.name is not None:
            obj["name"] = msg.name
        if msg.texture_mode is not None:
            obj["texture_mode"] = msg.texture_mode
    elif isinstance(msg, EvalRequest):
        obj = {
            "type": "eval_request",
            "request_id": msg.request_id,
            "texture": msg.texture,
            "views": [
                {"id": v.id, "yaw_degrees": float(v.yaw_degrees), "tag": v.tag}
                for v in msg.views
            ],
            "target_class": msg.target_class,
        }
    elif isinstance(msg, EvalResponse):
        results = []
        for r in msg.results:
            item: dict[str, Any] = {
                "view_id": r.view_id,
                "objectness": float(r.objectness),
                "class_id": r.class_id,
            }
            if r.bbox is not None:
                item["bbox"] = [float(v) for v in r.bbox]
            results.append(item)
        obj = {"type": "eval_response", "request_id": msg.request_id, "results": results}
    elif isinstance(msg, ErrorMessage):
        obj = {"type": "error", "request_id": msg.request_id, "message": msg.message}
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    return _dumps(obj)


class _Fields:
    """Typed field access that turns every mismatch into a ProtocolError."""

    def __init__(self, obj: dict, raw: str, where: str = ""):
        self.obj = obj
        self.raw = raw
        self.where = where

    def fail(self, what: str) -> ProtocolError:
        return ProtocolError(f"malformed message: {self.where}{what}", raw=self.raw)

    def get(self, key: str, kinds: tuple, optional: bool = False) -> Any:
        if key not in self.obj:
            if optional:
                return None
            raise self.fail(f"missing field {key!r}")
        value = self.obj[key]
        if value is None and optional:
            return None
        # bool is an int subclass, never accept it as a number
        if isinstance(value, bool) and bool not in kinds:
            raise self.fail(f"field {key!r} has wrong type")
        if not isinstance(value, kinds):
            raise self.fail(f"field {key!r} has wrong type")
        return value

    def number(self, key: str) -> float:
        value = float(self.get(key, (int, float)))
        if not math.isfinite(value):
            raise self.fail(f"field {key!r} is not finite")
        return value

    def request_id(self, optional: bool = False) -> int | str | None:
        return self.get("request_id", (int, str), optional=optional)


def _decode_view(item: Any, raw: str, i: int) -> ViewSpec:
    if not isinstance(item, dict):
        raise ProtocolError(f"malformed message: views[{i}] is not an object", raw=raw)
    f = _Fields(item, raw, f"views[{i}]: ")
    try:
        return ViewSpec(f.get("id", (int,)), f.number("yaw_degrees"), f.get("tag", (str,)))
    except InvalidArgumentError as exc:
        raise f.fail(str(exc)) from None


def _decode_result(item: Any, raw: str, i: int) -> ViewResult:
    if not isinstance(item, dict):
        raise ProtocolError(f"malformed message: results[{i}] is not an object", raw=raw)
    f = _Fields(item, raw, f"results[{i}]: ")
    objectness = f.number("objectness")
    if not 0.0 <= objectness <= 1.0:
        raise f.fail("objectness outside [0, 1]")
    bbox = f.get("bbox", (list,), optional=True)
    if bbox is not None:
        if len(bbox) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox
        ):
            raise f.fail("bbox must be four numbers")
        bbox = tuple(float(v) for v in bbox)
    return ViewResult(f.get("view_id", (int,)), objectness, f.get("class_id", (int,)), bbox)


def decode(line: str | bytes) -> Message:
    """Parse one line; raises ProtocolError carrying the raw payload."""
    raw = line.decode("utf-8", errors="replace") if isinstance(line, bytes) else line
    text = raw.rstrip("\r\n")
    try:
        obj = json.loads(text)
    except ValueError:
        raise ProtocolError("malformed message: not valid JSON", raw=raw) from None
    if not isinstance(obj, dict):
        raise ProtocolError("malformed message: not a JSON object", raw=raw)
    f = _Fields(obj, raw)
    kind = f.get("type", (str,))
    if kind == "hello":
        mode = f.get("texture_mode", (str,), optional=True)
        if mode is not None and mode not in TEXTURE_MODES:
            raise f.fail(f"unknown texture_mode {mode!r}")
        return Hello(f.get("version", (int,)), f.get("name", (str,), optional=True), mode)
    if kind == "eval_request":
        views = f.get("views", (list,))
        return EvalRequest(
            f.request_id(),
            f.get("texture", (str,)),
            tuple(_decode_view(v, raw, i) for i, v in enumerate(views)),
            f.get("target_class", (int,)),
        )
    if kind == "eval_response":
        results = f.get("results", (list,))
        return EvalResponse(
            f.request_id(), tuple(_decode_result(r, raw, i) for i, r in enumerate(results))
        )
    if kind == "error":
        return ErrorMessage(f.request_id(optional=True), f.get("message", (str,)))
    raise f.fail(f"unknown message type {kind!r}")
