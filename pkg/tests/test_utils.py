import math

import numpy as np
import pytest

from perclab.utils import (
    SEED_MASK,
    binomial_stderr,
    config_digest,
    derive_seed,
    format_float,
    is_sorted,
    normal_ci,
    read_csv,
    read_ndjson,
    write_csv,
    write_ndjson,
)


def test_derive_seed():
    seeds = {derive_seed(7, "theta", r) for r in range(100)}

    assert len(seeds) == 100
    assert all(0 <= s <= SEED_MASK for s in seeds)
    assert derive_seed(7, "theta", 3) == derive_seed(7, "theta", 3)
    assert derive_seed(7, "theta", 3) != derive_seed(7, "scan", 3)
    assert derive_seed(7, "beta", 0, 1) != derive_seed(7, "beta", 1, 0)
    assert derive_seed(-1, "tau") == derive_seed(SEED_MASK, "tau")


@pytest.mark.parametrize(
    "value, expected",
    [
        (0.1, "0.1"),
        (1, "1.0"),
        (np.float64(0.5), "0.5"),
        (1e-9, "1e-09"),
        (None, ""),
        (math.nan, ""),
    ],
)
def test_format_float(value, expected):
    assert format_float(value) == expected


def test_binomial_stderr():
    assert binomial_stderr(5, 10) == pytest.approx(math.sqrt(0.025))
    assert binomial_stderr(10, 10) == 0.0
    assert math.isnan(binomial_stderr(0, 0))


def test_normal_ci():
    assert normal_ci(1.0, 0.5) == pytest.approx((0.02, 1.98))


def test_is_sorted():
    assert is_sorted([0.6, 0.6, 0.7])
    assert not is_sorted([0.7, 0.6])
    assert is_sorted([])


def test_config_digest():
    digest = config_digest([("p_grid", (0.6, 0.7)), ("seed", 1)], "0.1.0")

    assert len(digest) == 64
    assert digest == config_digest([("seed", 1), ("p_grid", (0.6, 0.7))], "0.1.0")
    assert digest != config_digest([("p_grid", (0.6, 0.7)), ("seed", 1)], "0.1.1")
    assert digest != config_digest([("p_grid", (0.6, 0.7)), ("seed", 2)], "0.1.0")


def test_write_csv(tmp_path):
    path = write_csv(
        tmp_path / "nested" / "rows.csv",
        ["n", "passed", "value", "missing"],
        [[4, True, 0.25, None], [8, False, np.float64(1.5), math.nan]],
    )

    assert path.read_bytes() == b"n,passed,value,missing\n4,true,0.25,\n8,false,1.5,\n"
    assert read_csv(path)[1] == {"n": "8", "passed": "false", "value": "1.5", "missing": ""}


def test_ndjson(tmp_path):
    path = write_ndjson(tmp_path / "records.ndjson", [{"b": 1, "a": [1, 2]}, {"c": None}])

    assert path.read_text() == '{"a":[1,2],"b":1}\n{"c":null}\n'
    assert read_ndjson(path) == [{"b": 1, "a": [1, 2]}, {"c": None}]
