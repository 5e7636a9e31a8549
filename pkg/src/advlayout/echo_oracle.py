"""Scripted oracle child process speaking the wire protocol.

Answers every eval_request with results read from a JSON script::

    {"results": [{"view_id": 0, "objectness": 0.9, "class_id": 2}, ...]}

Views missing from the script get objectness 0.0 and class_id -1. The
remaining flags inject failures for testing the engine side.

    python -m advlayout.echo_oracle --script results.json
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
import time
from pathlib import Path

from advlayout.errors import ProtocolError
from advlayout.protocol import (
    PROTOCOL_VERSION,
    ErrorMessage,
    EvalRequest,
    EvalResponse,
    Hello,
    ViewResult,
    decode,
    encode,
)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def emit(msg) -> None:
    sys.stdout.write(encode(msg) + "\n")
    sys.stdout.flush()


def load_script(path: str | None) -> dict[int, ViewResult]:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    out = {}
    for item in data.get("results", []):
        bbox = item.get("bbox")
        out[int(item["view_id"])] = ViewResult(
            int(item["view_id"]),
            float(item["objectness"]),
            int(item["class_id"]),
            None if bbox is None else tuple(float(v) for v in bbox),
        )
    return out


def texture_bytes(req: EvalRequest, mode: str) -> bytes:
    if mode == "inline":
        return base64.b64decode(req.texture)
    return Path(req.texture).read_bytes()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--script", help="JSON file with scripted results")
    parser.add_argument("--name", default="echo")
    parser.add_argument("--version", type=int, default=PROTOCOL_VERSION)
    parser.add_argument("--texture-mode", choices=("path", "inline"), default="path")
    parser.add_argument("--silent", action="store_true", help="never send hello")
    parser.add_argument("--die-after", type=int, default=None,
                        help="exit without replying to request number N (1-based)")
    parser.add_argument("--fail-every", type=int, default=None,
                        help="reply with an error message to every Nth request")
    parser.add_argument("--garbage", action="store_true", help="reply with a non-JSON line")
    parser.add_argument("--wrong-id", action="store_true", help="echo a different request_id")
    args = parser.parse_args(argv)

    script = load_script(args.script)
    if args.silent:
        time.sleep(3600)
        return 0

    first = sys.stdin.readline()
    if not first:
        return 1
    try:
        decode(first)
    except ProtocolError:
        return 1
    emit(Hello(args.version, args.name, args.texture_mode))

    count = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            msg = decode(line)
        except ProtocolError as exc:
            emit(ErrorMessage(None, str(exc)))
            continue
        if not isinstance(msg, EvalRequest):
            emit(ErrorMessage(None, f"unexpected {type(msg).__name__}"))
            continue
        count += 1
        if args.die_after is not None and count >= args.die_after:
            return 3
        if args.fail_every and count % args.fail_every == 0:
            emit(ErrorMessage(msg.request_id, "scripted failure"))
            continue
        if args.garbage:
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        try:
            data = texture_bytes(msg, args.texture_mode)
        except (OSError, ValueError) as exc:
            emit(ErrorMessage(msg.request_id, f"cannot read texture: {exc}"))
            continue
        if not data.startswith(PNG_SIGNATURE):
            emit(ErrorMessage(msg.request_id, "texture is not a PNG"))
            continue
        results = tuple(
            script.get(v.id, ViewResult(v.id, 0.0, -1)) for v in msg.views
        )
        rid = f"{msg.request_id}-x" if args.wrong_id else msg.request_id
        emit(EvalResponse(rid, results))
    return 0


if __name__ == "__main__":
    sys.exit(main())
