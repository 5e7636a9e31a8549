import json
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from advlayout.compositor import Placement, TextureCanvas, paste_sticker
from advlayout.errors import (
    InvalidArgumentError,
    OracleIncompatibleError,
    OracleIOError,
    OracleStartupError,
)
from advlayout.layout import Circle
from advlayout.oracle import (
    FitnessOracle,
    ScriptedOracle,
    SyntheticCoverageOracle,
    ViewResult,
    ViewSpec,
    grid_regions,
    spawn_external,
    synthetic_objectness,
)
from advlayout.stickers import Sticker

from synthetic_setup import coverage_scene

ECHO = [sys.executable, "-m", "advlayout.echo_oracle"]


def changed_fraction(texture, base, rect):
    # independent scalar scan of differing pixels
    x, y, w, h = rect
    diff = 0
    for j in range(y, y + h):
        for i in range(x, x + w):
            if tuple(texture.pixels[j, i]) != tuple(base.pixels[j, i]):
                diff += 1
    return diff / (w * h)


class TestSyntheticObjectness:
    @pytest.mark.parametrize("cov,phi,expected", [(0, 0.3, 1.0), (0.3, 0.3, 0.0), (0.15, 0.3, 0.5), (1.0, 0.3, 0.0)])
    def test_values(self, cov, phi, expected):
        assert synthetic_objectness(cov, phi) == pytest.approx(expected, abs=1e-15)

    def test_bad_phi(self):
        with pytest.raises(InvalidArgumentError):
            synthetic_objectness(0.1, 0.0)


class TestSyntheticCoverageOracle:
    def test_is_a_fitness_oracle(self):
        _, oracle, _ = coverage_scene()
        assert isinstance(oracle, FitnessOracle)
        assert oracle.thread_safe and not oracle.retryable

    def test_grid_regions_disjoint_and_centered(self):
        regions = grid_regions(512, 512, 4, 4, 64)
        assert len(regions) == 16
        assert regions[0] == (32, 32, 64, 64) and regions[15] == (416, 416, 64, 64)
        seen = np.zeros((512, 512), dtype=int)
        for x, y, w, h in regions.values():
            seen[y:y + h, x:x + w] += 1
        assert seen.max() == 1 and seen.sum() == 16 * 64 * 64

    def test_base_texture_fully_detected(self):
        base, oracle, views = coverage_scene()
        out = oracle.evaluate(base, views, 3)
        assert [r.view_id for r in out] == [v.id for v in views]
        assert all(r.objectness == 1.0 and r.class_id == 3 for r in out)

    def test_fully_covered_region_fooled(self):
        base, oracle, views = coverage_scene()
        tex = base.copy()
        tex.pixels[32:96, 32:96] = (0, 0, 0)
        out = oracle.evaluate(tex, views)
        assert out[0].objectness == 0.0
        assert all(r.objectness == 1.0 for r in out[1:])

    def test_coverage_matches_scalar_scan(self):
        base, oracle, views = coverage_scene()
        tex = paste_sticker(base, Placement(Circle(100, 70, 30), "s", 20.0), Sticker.solid("s", (0, 0, 0), 5))
        for v in views[:6]:
            assert oracle.coverage(tex, v) == changed_fraction(tex, base, oracle.region_of(v))

    def test_one_channel_change_counts(self):
        base, oracle, views = coverage_scene()
        tex = base.copy()
        tex.pixels[32, 32, 2] += 1
        assert oracle.coverage(tex, views[0]) == 1 / 4096

    def test_size_mismatch_rejected(self):
        _, oracle, views = coverage_scene()
        with pytest.raises(InvalidArgumentError):
            oracle.evaluate(TextureCanvas.blank(10, 10), views)

    def test_regions_must_fit(self):
        with pytest.raises(InvalidArgumentError):
            SyntheticCoverageOracle(TextureCanvas.blank(10, 10), {0: (5, 5, 6, 2)}, 0.3)

    def test_unknown_view(self):
        base, oracle, _ = coverage_scene()
        with pytest.raises(InvalidArgumentError):
            oracle.evaluate(base, [ViewSpec(99, 0.0)])

    def test_base_copy_is_private(self):
        base, oracle, views = coverage_scene()
        base.pixels[:] = 0
        assert oracle.evaluate(TextureCanvas.blank(512, 512, (128, 128, 128)), views)[0].objectness == 1.0

    @given(st.lists(st.tuples(st.integers(0, 63), st.integers(0, 63)), min_size=1, max_size=40))
    def test_painting_never_raises_objectness(self, pixels):
        base, oracle, views = coverage_scene()
        tex = base.copy()
        prev = oracle.evaluate(tex, views[:1])[0].objectness
        for dx, dy in pixels:
            tex.pixels[32 + dy, 32 + dx] = (1, 2, 3)
            now = oracle.evaluate(tex, views[:1])[0].objectness
            assert now <= prev
            prev = now

    def test_pure(self):
        base, oracle, views = coverage_scene()
        tex = base.copy()
        tex.pixels[40:60, 40:200] = 7
        assert oracle.evaluate(tex, views) == oracle.evaluate(tex, views)


class TestScriptedOracle:
    def test_verbatim(self):
        script = [ViewResult(0, 0.7, 2, (1.0, 2.0, 3.0, 4.0)), ViewResult(1, 0.1, 5)]
        oracle = ScriptedOracle(script)
        views = [ViewSpec(1, 10.0), ViewSpec(0, 0.0)]
        assert oracle.evaluate(TextureCanvas.blank(2, 2), views) == [script[1], script[0]]

    def test_missing_view(self):
        with pytest.raises(OracleIOError):
            ScriptedOracle([]).evaluate(TextureCanvas.blank(2, 2), [ViewSpec(0, 0.0)])


@pytest.fixture
def script_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"results": [
        {"view_id": 0, "objectness": 0.9, "class_id": 2, "bbox": [1, 2, 30, 40]},
        {"view_id": 1, "objectness": 0.25, "class_id": 2},
    ]}))
    return str(path)


VIEWS = [ViewSpec(0, 0.0, "front"), ViewSpec(1, 90.0), ViewSpec(2, 180.0)]


class TestExternalOracle:
    @pytest.mark.parametrize("mode", ["path", "inline"])
    def test_echo_round_trip(self, script_file, mode):
        with spawn_external(ECHO + ["--script", script_file, "--texture-mode", mode], timeout=20) as oracle:
            assert oracle.name == "echo" and oracle.texture_mode == mode
            out = oracle.evaluate(TextureCanvas.blank(8, 8), VIEWS, 2)
            assert out == [
                ViewResult(0, 0.9, 2, (1.0, 2.0, 30.0, 40.0)),
                ViewResult(1, 0.25, 2),
                ViewResult(2, 0.0, -1),
            ]
            # a second request reuses the same child
            assert oracle.evaluate(TextureCanvas.blank(8, 8), VIEWS[:1], 2)[0].objectness == 0.9

    def test_version_mismatch(self):
        with pytest.raises(OracleIncompatibleError):
            spawn_external(ECHO + ["--version", "2"], timeout=20)

    def test_handshake_timeout(self):
        with pytest.raises(OracleStartupError):
            spawn_external(ECHO + ["--silent"], timeout=0.5)

    def test_missing_executable(self, tmp_path):
        with pytest.raises(OracleStartupError):
            spawn_external([str(tmp_path / "no-such-oracle")], timeout=1)

    def test_child_exits_mid_evaluate(self):
        with spawn_external(ECHO + ["--die-after", "1"], timeout=20) as oracle:
            with pytest.raises(OracleIOError) as info:
                oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)
            assert "exited" in str(info.value)
            assert not oracle.alive
            with pytest.raises(OracleIOError):
                oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)

    def test_restart_after_death(self, script_file):
        with spawn_external(ECHO + ["--script", script_file, "--die-after", "2"], timeout=20) as oracle:
            oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)
            with pytest.raises(OracleIOError):
                oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)
            oracle.restart()
            assert oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)[0].objectness == 0.9

    def test_error_reply_surfaces_raw(self):
        with spawn_external(ECHO + ["--fail-every", "1"], timeout=20) as oracle:
            with pytest.raises(OracleIOError) as info:
                oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)
            assert "scripted failure" in info.value.raw

    def test_garbage_reply(self):
        with spawn_external(ECHO + ["--garbage"], timeout=20) as oracle:
            with pytest.raises(OracleIOError) as info:
                oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)
            assert info.value.raw.startswith("this is not json")

    def test_request_id_must_echo(self):
        with spawn_external(ECHO + ["--wrong-id"], timeout=20) as oracle:
            with pytest.raises(OracleIOError) as info:
                oracle.evaluate(TextureCanvas.blank(4, 4), VIEWS)
            assert "request_id" in str(info.value)
