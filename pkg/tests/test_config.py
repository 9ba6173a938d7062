import pytest

from uniembed.config import RunConfig, parse_config, parse_config_text, with_overrides
from uniembed.errors import ConfigError


def test_empty_is_defaults():
    assert parse_config_text("") == RunConfig()
    assert parse_config_text("# only a comment\n\n") == RunConfig()


def test_alpha_reaches_triplet_margin():
    cfg = parse_config_text("alpha = 0.35  # margin\n")
    assert cfg.triplet_config().alpha == 0.35


def test_type_error_names_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("seed = 3\nalpha = banana\n")
    assert info.value.line == 2
    assert info.value.key == "alpha"


def test_unknown_key():
    with pytest.raises(ConfigError, match="frobnicate"):
        parse_config_text("frobnicate = 1\n")


def test_lists_and_booleans():
    cfg = parse_config_text("hidden_dims = 8, 4\nconflict_verticals =\nnormalize_output = off\nvertical_order = v2,v0\n")
    assert cfg.hidden_dims == (8, 4)
    assert cfg.conflict_verticals == ()
    assert cfg.normalize_output is False
    assert cfg.vertical_order == ("v2", "v0")
    assert cfg.net_config().hidden_dims == (8, 4)


def test_missing_equals_and_missing_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        parse_config_text("\nalpha 0.2\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.cfg")


def test_overrides():
    cfg = with_overrides(RunConfig(), ["steps=10", "ks = 1,3"])
    assert cfg.steps == 10 and cfg.ks == (1, 3)
    with pytest.raises(ConfigError):
        with_overrides(cfg, ["steps"])
