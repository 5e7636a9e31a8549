"""The black-box boundary: oracle contract, synthetic oracles, external-process oracle."""

from __future__ import annotations

import base64
import itertools
import logging
import queue
import shutil
import subprocess
import tempfile
import threading
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from advlayout.compositor import TextureCanvas
from advlayout.errors import (
    InvalidArgumentError,
    OracleIncompatibleError,
    OracleIOError,
    OracleStartupError,
)
from advlayout.protocol import (
    PROTOCOL_VERSION,
    ErrorMessage,
    EvalRequest,
    EvalResponse,
    Hello,
    ViewResult,
    ViewSpec,
    decode,
    encode,
)

log = logging.getLogger(__name__)

Rect = tuple[int, int, int, int]


@runtime_checkable
class FitnessOracle(Protocol):
    """Maps a texture to one raw detector result per requested view, in order."""

    thread_safe: bool
    retryable: bool

    def evaluate(
        self, texture: TextureCanvas, views: Sequence[ViewSpec], target_class: int = 0
    ) -> list[ViewResult]:
        ...


def synthetic_objectness(coverage_fraction: float, phi: float) -> float:
    if not phi > 0:
        raise InvalidArgumentError(f"phi must be positive, got {phi}")
    return max(0.0, 1.0 - coverage_fraction / phi)


class SyntheticCoverageOracle:
    """Each view watches one rectangle of the texture.

    Coverage is the fraction of the rectangle's pixels that differ from the
    base texture; objectness falls linearly from 1 to 0 as coverage goes
    from 0 to ``phi``. The reported class is always the requested target.
    """

    thread_safe = True
    retryable = False

    def __init__(self, base: TextureCanvas, regions: Mapping[int, Rect], phi: float):
        if not 0 < phi <= 1:
            raise InvalidArgumentError(f"phi must lie in (0, 1], got {phi}")
        for vid, (x, y, w, h) in regions.items():
            if w < 1 or h < 1 or x < 0 or y < 0 or x + w > base.width or y + h > base.height:
                raise InvalidArgumentError(f"region of view {vid} not inside the texture")
        self.base = base.copy()
        self.regions = {int(k): tuple(int(v) for v in rect) for k, rect in regions.items()}
        self.phi = phi

    def region_of(self, view: ViewSpec) -> Rect:
        try:
            return self.regions[view.id]
        except KeyError:
            raise InvalidArgumentError(f"no region for view {view.id}") from None

    def coverage(self, texture: TextureCanvas, view: ViewSpec) -> float:
        x, y, w, h = self.region_of(view)
        a = texture.pixels[y:y + h, x:x + w]
        b = self.base.pixels[y:y + h, x:x + w]
        d = a != b
        # OR the channel planes; much faster than any() over a length-3 axis
        return float(np.count_nonzero(d[..., 0] | d[..., 1] | d[..., 2])) / (w * h)

    def evaluate(
        self, texture: TextureCanvas, views: Sequence[ViewSpec], target_class: int = 0
    ) -> list[ViewResult]:
        if (texture.width, texture.height) != (self.base.width, self.base.height):
            raise InvalidArgumentError("texture size differs from the oracle's base texture")
        return [
            ViewResult(v.id, synthetic_objectness(self.coverage(texture, v), self.phi), target_class)
            for v in views
        ]


def grid_regions(
    width: int, height: int, rows: int, cols: int, size: int
) -> dict[int, Rect]:
    """``rows * cols`` disjoint size x size squares, each centered in its grid cell."""
    cell_w, cell_h = width // cols, height // rows
    if size > cell_w or size > cell_h:
        raise InvalidArgumentError("regions do not fit their grid cells")
    regions = {}
    for i in range(rows * cols):
        r, c = divmod(i, cols)
        regions[i] = (c * cell_w + (cell_w - size) // 2, r * cell_h + (cell_h - size) // 2, size, size)
    return regions


class ScriptedOracle:
    """In-process loopback that answers every request from a fixed script."""

    thread_safe = True
    retryable = False

    def __init__(self, results: Mapping[int, ViewResult] | Sequence[ViewResult]):
        if isinstance(results, Mapping):
            self.results = dict(results)
        else:
            self.results = {r.view_id: r for r in results}
        self.calls = 0

    def evaluate(
        self, texture: TextureCanvas, views: Sequence[ViewSpec], target_class: int = 0
    ) -> list[ViewResult]:
        self.calls += 1
        try:
            return [self.results[v.id] for v in views]
        except KeyError as exc:
            raise OracleIOError(f"no scripted result for view {exc.args[0]}") from None


class ExternalOracle:
    """Talks to a child process over stdin/stdout, one request in flight at a time."""

    thread_safe = False
    retryable = True

    def __init__(self, command: Sequence[str], timeout: float = 30.0):
        if not command:
            raise InvalidArgumentError("empty oracle command")
        self.command = list(command)
        self.timeout = timeout
        self.name: str | None = None
        self.texture_mode = "path"
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._ids = itertools.count(1)
        self._tmpdir: str | None = None
        self._lock = threading.Lock()

    def __enter__(self) -> "ExternalOracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def start(self) -> "ExternalOracle":
        try:
            proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise OracleStartupError(f"cannot start oracle {self.command}: {exc}") from exc
        self._proc = proc
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(proc, self._lines), daemon=True).start()
        try:
            self._send(Hello(PROTOCOL_VERSION, "advlayout"))
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise OracleStartupError(f"no hello from oracle within {self.timeout}s") from None
        except OracleIOError as exc:
            self.close()
            raise OracleStartupError(f"oracle closed its input during handshake: {exc}") from exc
        if line is None:
            code = proc.wait()
            self.close()
            raise OracleStartupError(f"oracle exited during handshake (code {code})")
        try:
            msg = decode(line)
        except OracleIOError as exc:
            self.close()
            raise OracleStartupError(f"bad handshake: {exc}") from exc
        if not isinstance(msg, Hello):
            self.close()
            raise OracleStartupError(f"expected hello, got {line.strip()!r}")
        if msg.version != PROTOCOL_VERSION:
            self.close()
            raise OracleIncompatibleError(PROTOCOL_VERSION, msg.version)
        self.name = msg.name
        self.texture_mode = msg.texture_mode or "path"
        if self._tmpdir is None and self.texture_mode == "path":
            self._tmpdir = tempfile.mkdtemp(prefix="advlayout-oracle-")
        return self

    def restart(self) -> None:
        self._stop_process()
        self.start()

    def close(self) -> None:
        self._stop_process()
        if self._tmpdir is not None:
            shutil.rmtree(self._tmpdir, ignore_errors=True)
            self._tmpdir = None

    def _stop_process(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    @staticmethod
    def _pump(proc: subprocess.Popen, lines: queue.Queue) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    def _send(self, msg) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        try:
            self._proc.stdin.write(encode(msg) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise OracleIOError(f"cannot write to oracle: {exc}") from exc

    def _texture_payload(self, texture: TextureCanvas, request_id: int) -> str:
        from advlayout.fileio import encode_png

        data = encode_png(texture)
        if self.texture_mode == "inline":
            return base64.b64encode(data).decode("ascii")
        assert self._tmpdir is not None
        path = Path(self._tmpdir) / f"texture-{request_id}.png"
        path.write_bytes(data)
        return str(path)

    def evaluate(
        self, texture: TextureCanvas, views: Sequence[ViewSpec], target_class: int = 0
    ) -> list[ViewResult]:
        with self._lock:
            if not self.alive:
                raise OracleIOError("oracle process is not running")
            rid = next(self._ids)
            payload = self._texture_payload(texture, rid)
            try:
                self._send(EvalRequest(rid, payload, tuple(views), target_class))
                try:
                    line = self._lines.get(timeout=self.timeout)
                except queue.Empty:
                    self._stop_process()
                    raise OracleIOError(f"no reply to request {rid} within {self.timeout}s") from None
                if line is None:
                    code = self._proc.wait() if self._proc else None
                    self._stop_process()
                    raise OracleIOError("oracle exited mid-evaluate", raw=f"exit code {code}")
                msg = decode(line)
            finally:
                if self.texture_mode == "path":
                    Path(payload).unlink(missing_ok=True)
            if isinstance(msg, ErrorMessage):
                raise OracleIOError(f"oracle reported an error: {msg.message}", raw=line)
            if not isinstance(msg, EvalResponse):
                raise OracleIOError("expected eval_response", raw=line)
            if msg.request_id != rid:
                raise OracleIOError(f"request_id mismatch, sent {rid}", raw=line)
            got = [r.view_id for r in msg.results]
            if got != [v.id for v in views]:
                raise OracleIOError("results do not match requested views", raw=line)
            return list(msg.results)


def spawn_external(command: Sequence[str], timeout: float = 30.0) -> ExternalOracle:
    """Start an oracle child process and complete the hello handshake."""
    return ExternalOracle(command, timeout).start()
