import math

import pytest
from flask import Config

from perclab import resolve, SchemaError, CapabilityError
from perclab.config import (
    SCHEMA,
    apply_defaults,
    get_value,
    load_flat,
    parse_overrides,
)


def flat(**values):
    return {f"PERCLAB_{key.upper()}": value for key, value in values.items()}


def test_load_flat(datadir):
    config = Config(str(datadir))
    config.from_file(str(datadir / "beta.cfg"), load=load_flat)

    assert config["PERCLAB_EXPERIMENT"] == "beta"
    assert config["PERCLAB_P_GRID"] == "0.6, 0.7"
    assert "PERCLAB_COMMENT" not in config


def test_load_flat_error(datadir):
    config = Config(str(datadir))

    with pytest.raises(SchemaError) as e_info:
        config.from_file(str(datadir / "broken.cfg"), load=load_flat)

    assert str(e_info.value) == "Line 2: expected 'key = value'"


def test_resolve_types_values():
    cfg = resolve(flat(experiment="beta", p_grid="0.6, 0.7", n_grid="4, 8", seed="3"))

    assert cfg.experiment == "beta"
    assert cfg["p_grid"] == (0.6, 0.7)
    assert cfg["n_grid"] == (4, 8)
    assert cfg.seed == 3
    assert cfg["replicas"] == SCHEMA["replicas"].default


def test_resolve_fills_n_schedule():
    assert resolve(flat(experiment="beta"))["n_grid"] == (8, 16, 24)
    assert resolve(flat(experiment="beta", d="3", p_grid="0.5"))["n_grid"] == (4, 6, 8)


def test_resolve_reports_every_bad_key():
    with pytest.raises(SchemaError) as e_info:
        resolve(flat(experiment="beta", replicas="many", bogus="1", coupling="random"))

    assert str(e_info.value) == "Invalid configuration keys: bogus, coupling, replicas"
    assert e_info.value.keys == ("bogus", "coupling", "replicas")


def test_resolve_needs_experiment():
    with pytest.raises(SchemaError) as e_info:
        resolve(flat(seed="1"))

    assert e_info.value.keys == ("experiment",)


@pytest.mark.parametrize("p_grid", ("0.4", "0.7, 0.6", "0.7, 0.7", "0.7, 1.0", "1.2"))
def test_resolve_rejects_p_grid(p_grid):
    with pytest.raises(SchemaError) as e_info:
        resolve(flat(experiment="beta", d="2", p_grid=p_grid))

    assert e_info.value.keys == ("p_grid",)


def test_sample_accepts_any_p():
    assert resolve(flat(experiment="sample", p_grid="0.1, 0.4"))["p_grid"] == (0.1, 0.4)
    assert resolve(flat(experiment="sample", p_grid="1.0"))["p_grid"] == (1.0,)


def test_resolve_accepts_range_edges():
    assert resolve(flat(experiment="beta", p_grid="0.55, 0.99"))["p_grid"] == (0.55, 0.99)
    assert resolve(flat(experiment="beta", d="3", p_grid="0.3, 0.99"))["p_grid"] == (0.3, 0.99)


def test_geometry_needs_low_dimension():
    with pytest.raises(CapabilityError) as e_info:
        resolve(flat(experiment="wulff", d="4", p_grid="0.5"))

    assert str(e_info.value) == "Experiment 'wulff' is only available for d=2 and d=3"


def test_directions():
    cfg = resolve(flat(experiment="beta", directions="1, 0; 1, 1"))

    s = 1 / math.sqrt(2)
    assert cfg["directions"] == ((1.0, 0.0), (s, s))
    assert resolve(flat(experiment="beta"))["directions"] == "default"


@pytest.mark.parametrize("directions", ("0, 0", "1, 0, 0", ";"))
def test_bad_directions(directions):
    with pytest.raises(SchemaError) as e_info:
        resolve(flat(experiment="beta", directions=directions))

    assert e_info.value.keys == ("directions",)


def test_theta_radius_default():
    assert resolve(flat(experiment="theta")).theta_radius == 64
    assert resolve(flat(experiment="theta", d="3", p_grid="0.5")).theta_radius == 16
    assert resolve(flat(experiment="theta", m="5")).theta_radius == 5


def test_cache_items_skip_runtime_keys():
    first = resolve(flat(experiment="beta", jobs="1", out="a"))
    second = resolve(flat(experiment="beta", jobs="4", out="b"))

    assert first.cache_items() == second.cache_items()
    assert "jobs" not in dict(first.cache_items())


def test_text_round_trip():
    cfg = resolve(flat(experiment="beta", directions="1, 0; 0, 1", cache="false"))

    again = resolve(load_flat(cfg.to_text().splitlines(keepends=True)))

    assert again.items() == cfg.items()


def test_overrides():
    assert parse_overrides(["seed=4", " jobs = 2 "]) == {"PERCLAB_SEED": "4", "PERCLAB_JOBS": "2"}

    with pytest.raises(SchemaError) as e_info:
        parse_overrides(["seed"])

    assert str(e_info.value) == "Override 'seed' is not of the form key=value"


def test_extension_keys_are_ignored():
    cfg = resolve({**flat(experiment="beta"), "PERCLAB_TENACITY": {"stop": None}})

    assert cfg.get("tenacity") is None


def test_defaults_and_single_values():
    config = Config(".")
    apply_defaults(config)

    assert config["PERCLAB_LOG_LEVEL"] == "INFO"
    assert get_value({"PERCLAB_CACHE": "no"}, "cache") is False

    with pytest.raises(SchemaError) as e_info:
        get_value({"PERCLAB_JOBS": "two"}, "jobs")

    assert str(e_info.value) == "Invalid configuration keys: jobs"
