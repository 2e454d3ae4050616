import pytest

from stereoavoid.config import ConfigError, PipelineConfig, parse_config


def test_defaults_are_census_setup():
    cfg = parse_config()
    assert (cfg.cost, cfg.d_max, cfg.p1, cfg.p2, cfg.radius, cfg.median_k) == ("census", 60, 8, 32, 2, 5)
    assert cfg.paths == 4 and cfg.lr_tol == 1


def test_sad_swaps_penalties():
    cfg = parse_config({"cost": "sad"})
    assert (cfg.p1, cfg.p2) == (200, 800)


def test_explicit_penalties_win():
    cfg = parse_config({"cost": "sad", "p1": 10, "p2": 20})
    assert (cfg.p1, cfg.p2) == (10, 20)


def test_dmax_zero_is_usage_error():
    with pytest.raises(ConfigError) as e:
        parse_config({"dmax": 0})
    assert e.value.key == "d_max"


def test_file_then_overrides(tmp_path):
    p = tmp_path / "pipe.cfg"
    p.write_text("# stereo setup\ncost = sad\ndmax = 32\np1 = 100  # softer\np2 = 400\n")
    cfg = parse_config(None, p)
    assert (cfg.cost, cfg.d_max, cfg.p1, cfg.p2) == ("sad", 32, 100, 400)
    cfg = parse_config({"d_max": 16, "p1": None}, p)
    assert cfg.d_max == 16 and cfg.p1 == 100


def test_file_cost_switch_keeps_file_penalties_out(tmp_path):
    p = tmp_path / "pipe.cfg"
    p.write_text("cost = sad\n")
    cfg = parse_config({"cost": "census"}, p)
    assert (cfg.p1, cfg.p2) == (8, 32)


def test_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("gamma = 3\n")
    with pytest.raises(ConfigError) as e:
        parse_config(None, p)
    assert e.value.key == "gamma"


def test_malformed_line(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("cost census\n")
    with pytest.raises(ConfigError):
        parse_config(None, p)


@pytest.mark.parametrize("overrides,key", [
    ({"p1": 40}, "p1"),
    ({"paths": 6}, "paths"),
    ({"engine": "gpu"}, "engine"),
    ({"engine": "streaming", "paths": 8}, "paths"),
    ({"median_k": 4}, "median_k"),
    ({"cost": "ncc"}, "cost"),
    ({"d_max": "many"}, "d_max"),
    ({"rect_left": "a.rmap"}, "rect_left"),
])
def test_invalid_values_name_their_key(overrides, key):
    with pytest.raises(ConfigError) as e:
        parse_config(overrides)
    assert e.value.key == key


def test_describe_lists_everything():
    text = PipelineConfig().describe()
    assert "cost=census" in text and "d_max=60" in text and "p2=32" in text


def test_for_cost():
    assert PipelineConfig.for_cost("sad", d_max=20).p2 == 800
