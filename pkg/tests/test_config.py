"""Run-config schema: defaults, strict keys, echo determinism."""

import numpy as np
import pytest

from rvrectify.config import ConfigError, RunConfig, load_config


class TestRunConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.seed == 0
        assert cfg.get("projection", "height") == 64
        assert cfg.get("train", "nu") == 0.5
        assert cfg.get("metrics", "bev_extent") == 40.0

    def test_load_and_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("[run]\nseed = 7\n\n[projection]\nheight = 32\n"
                        "width = 256\n")
        cfg = RunConfig.load(path)
        assert cfg.seed == 7
        proj = cfg.projection()
        assert (proj.height, proj.width) == (32, 256)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[projection]\nheigth = 32\n")
        with pytest.raises(ConfigError):
            RunConfig.load(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[projektion]\nheight = 32\n")
        with pytest.raises(ConfigError):
            RunConfig.load(path)

    def test_unparseable_value_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[projection]\nheight = many\n")
        with pytest.raises(ConfigError):
            RunConfig.load(path)

    def test_echo_round_trips(self, tmp_path):
        cfg = load_config(None)
        cfg.set("run", "seed", 13)
        out = tmp_path / "echo.cfg"
        cfg.echo(out)
        again = RunConfig.load(out)
        assert again.values == cfg.values
        # echo of the echo is byte-identical
        out2 = tmp_path / "echo2.cfg"
        again.echo(out2)
        assert out.read_bytes() == out2.read_bytes()

    def test_elevation_table_file(self, tmp_path):
        table = np.deg2rad(np.linspace(3.0, -12.0, 8))
        table_path = tmp_path / "elev.txt"
        np.savetxt(table_path, table)
        cfg = load_config(None)
        cfg.set("projection", "elev_table_file", str(table_path))
        cfg.set("projection", "width", 64)
        proj = cfg.projection()
        assert not proj.uniform
        assert proj.height == 8
        np.testing.assert_allclose(proj.elevation_table, table)

    def test_factories_consistent_with_values(self):
        cfg = load_config(None)
        spec = cfg.corruption()
        assert spec.wavy.amplitude == 0.15
        assert spec.bias.depth_shift_range == (3.0, 8.0)
        scene = cfg.scene(3)
        assert scene.seed == 3
        hyper = cfg.train()
        assert hyper.hidden == 16
