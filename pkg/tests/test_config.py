import pytest
from hypothesis import given, strategies as st

from medflow.config import (RunConfig, config_hash, parse_config, parse_config_text, serialize,
                            with_overrides)
from medflow.errors import ConfigError

MINIMAL = "domain = torus\nN = 1000\nr = 0.05\nT = 0.01\n"


def test_minimal_defaults():
    cfg = parse_config_text(MINIMAL)
    assert (cfg.kernel, cfg.mode, cfg.seed) == ("annulus:0.9", "levelset", 0)
    assert cfg.times == (0.01,)
    assert cfg.verify_suites == ()


def test_sections_accepted():
    cfg = parse_config_text("[domain]\ndomain = box\n[sampler]\nN = 10\n[kernel]\nr = 0.1\n"
                            "kernel = ball\n[evolution]\nT = 0.5\nmode = youngangle\n"
                            "alpha = 60\n")
    assert cfg.mode == "youngangle" and cfg.alpha == 60.0


def _error(text):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    return info.value


def test_h_mismatch_names_both_keys():
    err = _error(MINIMAL + "h = 0.01\n")
    assert err.key == "h" and err.line == 5
    assert "'h'" in str(err) and "'r'" in str(err)


def test_youngangle_on_torus():
    err = _error(MINIMAL + "mode = youngangle\n")
    assert "YoungAngle requires Box" in str(err) and err.key == "mode"


@pytest.mark.parametrize("text, key, line", [
    (MINIMAL + "colour = red\n", "colour", 5),
    (MINIMAL + "N = 5\n", "N", 5),
    (MINIMAL + "[kernel]\nT = 1\n", "T", 6),
    ("domain = torus\nr = 0.05\nT = 0.01\n", "N", None),
    (MINIMAL.replace("r = 0.05", "r = abc"), "r", 3),
    (MINIMAL + "cell = 0.01\n", "cell", 5),
    (MINIMAL + "alpha = 180\n", "alpha", 5),
    (MINIMAL + "mode = ssl\n", "labels", None),
    (MINIMAL + "initial = blob:1\n", "initial", 5),
    (MINIMAL + "snapshots = 0 0.5\n", "snapshots", 5),
    (MINIMAL + "tau = 0.001\n", "heat_T", None),
    (MINIMAL + "resolution = 8\n", "resolution", 5),
    (MINIMAL + "verify = nonsense\n", "verify", 5),
    (MINIMAL + "kernel = annulus:1.5\n", "kernel", 5),
])
def test_errors_name_key_and_line(text, key, line):
    err = _error(text)
    assert err.key == key and err.line == line


def test_unknown_section():
    assert _error(MINIMAL + "[graphics]\n").line == 5


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


def test_overrides():
    cfg = parse_config_text(MINIMAL + "mode = mbo\n", {"mode": "levelset", "seed": "4"})
    assert cfg.mode == "levelset" and cfg.seed == 4


def test_hash_ignores_output():
    cfg = parse_config_text(MINIMAL)
    assert config_hash(cfg) == config_hash(with_overrides(cfg, out="elsewhere", verbosity=2))
    assert config_hash(cfg) != config_hash(with_overrides(cfg, seed=1))
    assert len(config_hash(cfg)) == 16


configs = st.builds(
    dict,
    domain=st.sampled_from(["torus", "box"]),
    N=st.integers(1, 10 ** 6),
    seed=st.integers(0, 2 ** 63),
    r=st.floats(1e-3, 0.3),
    kernel=st.sampled_from(["ball", "annulus:0.5", "annulus:0.9", "shrinking"]),
    T=st.floats(1e-4, 1.0),
    mode=st.sampled_from(["levelset", "mbo"]),
    q=st.floats(-1, 1),
    initial=st.sampled_from(["disk:0.3", "ellipse:0.3:0.1", "halfspace:0.5", "sine"]),
    stop_near_extremum=st.booleans(),
    resolution=st.integers(16, 1024),
    verify=st.sampled_from(["none", "all", "tl2,dkw"]),
)


@given(configs)
def test_serialize_round_trip(kw):
    cfg = RunConfig(**kw)
    again = parse_config_text(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)
