import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ernwave.config import RunConfig, load_config, parse_config, serialize_config
from ernwave.modes import ConfigurationError
from ernwave.pipeline import check_only_epsilon_differs, worker_count


def test_minimal_config_takes_defaults():
    cfg = parse_config("[background]\nmass = 1.0\n")
    assert cfg == RunConfig()
    assert cfg.grid.h == 0.05 and cfg.angular.l_max == 4 and cfg.data.epsilon == 0.05
    assert cfg.diagnostics.R == 1.8 and cfg.diagnostics.delta1 == 0.1


def test_empty_text_is_default():
    assert parse_config("# nothing here\n") == RunConfig()


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError, match="unknown key gird.h"):
        parse_config("[gird]\nh = 0.1\n")
    with pytest.raises(ConfigurationError, match="unknown key grid.hh"):
        parse_config("[grid]\nhh = 0.1\n")


def test_syntax_error_reports_line():
    with pytest.raises(ConfigurationError, match="line 3"):
        parse_config("[grid]\nh = 0.1\nn_u = = 3\n")


@pytest.mark.parametrize("text,needle", [
    ("[grid]\nh = -0.1\n", "h"),
    ("[grid]\nn_u = 1\n", "n_u"),
    ("[angular]\nl_max = 3\nn_nodes = 3\n", "n_nodes"),
    ("[diagnostics]\nr0 = 2.2\nr1 = 3.0\n", "photon sphere"),
    ("[background]\nmass = 0.0\n", "mass"),
    ("[nonlinearity]\na_mode = \"sometimes\"\n", "a_mode"),
    ("[data]\nhalf_width = 0.0\n", "half-width"),
    ("[grid]\nn_u = 2.5\n", "integer"),
    ("[run]\nmode = \"manufactured\"\n", "compactify"),
])
def test_constraint_violations_named(text, needle):
    with pytest.raises(ConfigurationError, match=needle):
        parse_config(text)


def test_round_trip_is_identity():
    cfg = parse_config("""
[grid]
n_u = 3000
h = 0.1
[data]
modes = [1.0, 0.25]
[diagnostics]
tau_list = [40.0, 60.0]
""")
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


@settings(max_examples=40, deadline=None)
@given(
    eps=st.floats(min_value=0, max_value=0.1, allow_nan=False),
    h=st.sampled_from([0.4, 0.2, 0.1, 0.05]),
    l_max=st.integers(min_value=0, max_value=6),
    frac=st.floats(min_value=0.05, max_value=1.0),
)
def test_round_trip_property(eps, h, l_max, frac):
    cfg = RunConfig()
    cfg = cfg.replace("data", epsilon=eps).replace("grid", h=h).replace("angular", l_max=l_max)
    cfg = cfg.replace("diagnostics", fit_fraction=frac)
    assert parse_config(serialize_config(cfg)) == cfg


def test_with_spacing_keeps_spans():
    cfg = RunConfig().with_spacing(0.1)
    assert cfg.grid.n_u * cfg.grid.h == pytest.approx(800.0)
    assert cfg.grid.n_v * cfg.grid.h == pytest.approx(300.0)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "absent.toml")


def test_epsilon_only_difference_check():
    a = RunConfig()
    check_only_epsilon_differs(a, a.replace("data", epsilon=0.025))
    with pytest.raises(ConfigurationError, match="grid.h"):
        check_only_epsilon_differs(a, a.replace("grid", h=0.1))


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("ERNWAVE_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.setenv("ERNWAVE_THREADS", "many")
    with pytest.raises(ConfigurationError):
        worker_count(3)
    monkeypatch.delenv("ERNWAVE_THREADS")
    assert 1 <= worker_count(3) <= 3


def test_config_sections_are_frozen():
    cfg = RunConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.grid.h = 0.3
