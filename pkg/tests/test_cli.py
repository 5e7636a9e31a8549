import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from advlayout import cli
from advlayout.compositor import Placement, TextureCanvas, compose
from advlayout.fileio import (
    load_texture,
    save_layout,
    save_mask,
    save_texture,
    save_views,
    sweep_views,
)
from advlayout.layout import Circle, Layout, Mask
from advlayout.metrics import records_from_csv
from advlayout.oracle import grid_regions
from advlayout.search import parse_history_csv
from advlayout.stickers import load_pool

from synthetic_setup import coverage_scene


@pytest.fixture
def workspace(tmp_path):
    base, _, views = coverage_scene(size=128, region=16)
    save_texture(tmp_path / "base.png", base)
    save_mask(tmp_path / "mask.png", Mask.full(128, 128))
    save_views(tmp_path / "views.csv", views)
    pool_dir = tmp_path / "pool"
    pool_dir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(5):
        Image.fromarray(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)).save(pool_dir / f"s{i}.png")
    config = {
        "search": {"itr_max": 30, "seed": 1, "n_max": 10},
        "base_texture": "base.png",
        "mask": "mask.png",
        "pool": "pool",
        "views": "views.csv",
        "oracle": {"synthetic": {
            "phi": 0.3,
            "regions": {str(k): list(v) for k, v in grid_regions(128, 128, 4, 4, 16).items()},
        }},
    }
    (tmp_path / "config.json").write_text(json.dumps(config))
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestOptimize:
    def test_writes_outputs(self, workspace, capsys):
        out = workspace / "out"
        assert run("optimize", "--config", workspace / "config.json", "--oracle", "synthetic", "--out", out) == 0
        for name in ("best_texture.png", "layout.json", "history.csv", "summary.json", "checkpoint.json"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        history = parse_history_csv((out / "history.csv").read_text())
        assert summary["iterations_used"] == len(history)
        assert summary["best_fitness"] == history[-1][2]
        assert summary["config"]["seed"] == 1
        assert "best fitness" in capsys.readouterr().out

    def test_deterministic_outputs(self, workspace):
        for name in ("a", "b"):
            run("optimize", "--config", workspace / "config.json", "--oracle", "synthetic", "--out", workspace / name)
        for name in ("best_texture.png", "history.csv", "layout.json", "summary.json"):
            assert (workspace / "a" / name).read_bytes() == (workspace / "b" / name).read_bytes()

    def test_seed_flag_overrides_config(self, workspace):
        run("optimize", "--config", workspace / "config.json", "--oracle", "synthetic",
            "--out", workspace / "o", "--seed", "77", "--itr-max", "3")
        summary = json.loads((workspace / "o" / "summary.json").read_text())
        assert summary["config"]["seed"] == 77 and summary["config"]["itr_max"] == 3

    def test_oracle_from_config_section(self, workspace):
        assert run("optimize", "--config", workspace / "config.json", "--out", workspace / "o", "--itr-max", "2") == 0

    def test_resume_matches_single_run(self, workspace):
        cfg = workspace / "config.json"
        run("optimize", "--config", cfg, "--oracle", "synthetic", "--out", workspace / "full", "--itr-max", "12")
        run("optimize", "--config", cfg, "--oracle", "synthetic", "--out", workspace / "half", "--itr-max", "5")
        assert run("resume", "--checkpoint", workspace / "half" / "checkpoint.json", "--extra", "7",
                   "--config", cfg, "--oracle", "synthetic", "--out", workspace / "cont") == 0
        for name in ("best_texture.png", "history.csv"):
            assert (workspace / "full" / name).read_bytes() == (workspace / "cont" / name).read_bytes()

    def test_infeasible_exit_3(self, workspace):
        grid = np.zeros((128, 128), dtype=bool)
        grid[5, 5] = True
        save_mask(workspace / "mask.png", Mask(grid))
        cfg = json.loads((workspace / "config.json").read_text())
        cfg["search"].update(n_min=2, n_max=2, max_resamples=10)
        (workspace / "config.json").write_text(json.dumps(cfg))
        assert run("optimize", "--config", workspace / "config.json", "--oracle", "synthetic", "--out", workspace / "o") == 3

    def test_oracle_failure_exit_4(self, workspace):
        oracle = f"cmd:{sys.executable} -m advlayout.echo_oracle --die-after 1"
        assert run("optimize", "--config", workspace / "config.json", "--oracle", oracle, "--out", workspace / "o") == 4

    def test_usage_errors_exit_2(self, workspace, capsys):
        assert run("optimize", "--config", workspace / "missing.json", "--oracle", "synthetic", "--out", workspace / "o") == 2
        assert run("optimize", "--config", workspace / "config.json", "--oracle", "telepathy", "--out", workspace / "o") == 2
        cfg = json.loads((workspace / "config.json").read_text())
        cfg["search"]["n_min"] = 0
        (workspace / "bad.json").write_text(json.dumps(cfg))
        assert run("optimize", "--config", workspace / "bad.json", "--oracle", "synthetic", "--out", workspace / "o") == 2
        assert "error" in capsys.readouterr().err
        with pytest.raises(SystemExit) as info:
            run("optimize", "--bogus")
        assert info.value.code == 2


class TestEvaluate:
    def test_echo_oracle_88_of_176(self, tmp_path, capsys):
        views = sweep_views(176)
        save_views(tmp_path / "views.csv", views)
        save_texture(tmp_path / "t.png", TextureCanvas.blank(16, 16))
        (tmp_path / "script.json").write_text(json.dumps({"results": [
            {"view_id": v.id, "objectness": 0.9 if v.id % 2 == 0 else 0.2, "class_id": 0} for v in views
        ]}))
        oracle = f"cmd:{sys.executable} -m advlayout.echo_oracle --script {tmp_path / 'script.json'}"
        code = run("evaluate", "--texture", tmp_path / "t.png", "--views", tmp_path / "views.csv",
                   "--oracle", oracle, "--out", tmp_path / "ev")
        assert code == 0
        out = capsys.readouterr().out
        assert "P@0.5 = 50.00" in out.splitlines()
        records = records_from_csv((tmp_path / "ev" / "records.csv").read_text())
        assert len(records) == 176 and sum(r.detected for r in records) == 88
        summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
        assert summary["p_at_05"] == 50.0
        assert {d["count"] for d in summary["directions"].values()} == {22}

    def test_synthetic_on_base(self, workspace, capsys):
        assert run("evaluate", "--texture", workspace / "base.png", "--views", workspace / "views.csv",
                   "--config", workspace / "config.json", "--oracle", "synthetic") == 0
        assert "P@0.5 = 100.00" in capsys.readouterr().out

    def test_synthetic_needs_config(self, workspace):
        assert run("evaluate", "--texture", workspace / "base.png", "--views", workspace / "views.csv",
                   "--oracle", "synthetic") == 2


class TestLayoutCommands:
    def test_compose_deterministic_and_faithful(self, workspace):
        c1, c2 = Circle(30, 30, 20), Circle(90, 90, 25)
        save_layout(workspace / "l.json", Layout((c1, c2)), [Placement(c1, "s1", 0.0), Placement(c2, "s3", 33.0)])
        for name in ("a.png", "b.png"):
            assert run("compose", "--layout", workspace / "l.json", "--base", workspace / "base.png",
                       "--pool", workspace / "pool", "--out", workspace / name) == 0
        assert (workspace / "a.png").read_bytes() == (workspace / "b.png").read_bytes()
        expected = compose(load_texture(workspace / "base.png"),
                           [Placement(c1, "s1", 0.0), Placement(c2, "s3", 33.0)], load_pool(workspace / "pool"))
        assert load_texture(workspace / "a.png") == expected

    def test_compose_needs_sticker_ids(self, workspace):
        save_layout(workspace / "l.json", Layout((Circle(30, 30, 20),)))
        assert run("compose", "--layout", workspace / "l.json", "--base", workspace / "base.png",
                   "--pool", workspace / "pool", "--out", workspace / "a.png") == 2

    def test_compose_unknown_sticker(self, workspace):
        c = Circle(30, 30, 20)
        save_layout(workspace / "l.json", Layout((c,)), [Placement(c, "nope", 0.0)])
        assert run("compose", "--layout", workspace / "l.json", "--base", workspace / "base.png",
                   "--pool", workspace / "pool", "--out", workspace / "a.png") == 2

    def test_check_layout_overlap(self, workspace, capsys):
        save_layout(workspace / "l.json", Layout((Circle(10, 10, 5), Circle(19, 10, 5), Circle(60, 60, 4))))
        assert run("check-layout", "--layout", workspace / "l.json", "--mask", workspace / "mask.png") == 3
        out = capsys.readouterr().out
        assert "circles 0 and 1" in out and "2" not in out.split("circles 0 and 1")[0]

    def test_check_layout_forbidden_center_and_count(self, workspace, capsys):
        grid = np.ones((128, 128), dtype=bool)
        grid[10, 10] = False
        save_mask(workspace / "m.png", Mask(grid))
        save_layout(workspace / "l.json", Layout((Circle(10.2, 9.9, 3),)))
        assert run("check-layout", "--layout", workspace / "l.json", "--mask", workspace / "m.png",
                   "--n-min", "2") == 3
        out = capsys.readouterr().out
        assert "forbidden" in out and "count 1" in out

    def test_check_layout_ok(self, workspace, capsys):
        save_layout(workspace / "l.json", Layout((Circle(10, 10, 5), Circle(20, 10, 5))))
        assert run("check-layout", "--layout", workspace / "l.json", "--mask", workspace / "mask.png") == 0
        assert "layout ok" in capsys.readouterr().out

    def test_preview(self, workspace):
        save_layout(workspace / "l.json", Layout((Circle(40, 40, 20),)))
        assert run("preview", "--layout", workspace / "l.json", "--mask", workspace / "mask.png",
                   "--out", workspace / "p.png") == 0
        img = load_texture(workspace / "p.png")
        assert (img.width, img.height) == (128, 128)


def test_module_entry_point(workspace):
    save_layout(workspace / "l.json", Layout((Circle(10, 10, 5), Circle(14, 10, 5))))
    proc = subprocess.run(
        [sys.executable, "-m", "advlayout.cli", "check-layout", "--layout", str(workspace / "l.json"),
         "--mask", str(workspace / "mask.png")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 3 and "overlap between circles 0 and 1" in proc.stdout
