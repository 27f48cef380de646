"""Tests for config utilities."""

from __future__ import annotations

import pytest

from superpixel_lime.utils.config import ensure_dirs, load_config


class TestLoadConfig:
    def test_yaml(self, tmp_path):
        f = tmp_path / "experiment.yaml"
        f.write_text("lime:\n  n: 4000\n  bandwidth: 100\nrepetitions: 10\n")
        assert load_config(f) == {"lime": {"n": 4000, "bandwidth": 100}, "repetitions": 10}

    def test_json(self, tmp_path):
        f = tmp_path / "experiment.json"
        f.write_text('{"grid": {"rows": 4, "cols": 4}}')
        assert load_config(f) == {"grid": {"rows": 4, "cols": 4}}

    def test_empty_file(self, tmp_path):
        f = tmp_path / "empty.yaml"
        f.write_text("")
        assert load_config(f) == {}

    def test_non_mapping(self, tmp_path):
        f = tmp_path / "list.yaml"
        f.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError, match="mapping"):
            load_config(f)

    def test_malformed_yaml(self, tmp_path):
        f = tmp_path / "broken.yaml"
        f.write_text("lime: [unclosed\n")
        with pytest.raises(ValueError, match="broken.yaml"):
            load_config(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nonexistent.yaml")


class TestEnsureDirs:
    def test_creates_extra(self, tmp_path):
        target = tmp_path / "a" / "b"
        ensure_dirs(target)
        assert target.is_dir()
