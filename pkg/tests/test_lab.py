import logging
import pathlib

import pytest

from perclab import CloudStore, LocalStore, PercolationLab, ResultCache, SchemaError, create_app
from perclab.flow_constant import BetaEstimate, NormTable
from perclab.utils import get_state, read_csv


def test_missing_init(app):
    with pytest.raises(AssertionError) as e_info:
        get_state(app)

    assert str(e_info.value) == (
        "The perclab extension was not registered to the current application. "
        "Please make sure to call init_app() first."
    )


def test_local_cache(app_local, tmpdir):
    state = get_state(app_local)

    assert isinstance(state["ext_obj"], PercolationLab)
    assert isinstance(state["cache"], ResultCache)
    assert isinstance(state["cache"].store, LocalStore)
    assert state["cache"].store.destination == pathlib.Path(tmpdir / "cache")
    assert app_local.config["PERCLAB_LOG_LEVEL"] == "INFO"


def test_cloud_cache(app_cloud, google_bucket_mock):
    store = get_state(app_cloud)["cache"].store

    assert isinstance(store, CloudStore)
    assert store.bucket is google_bucket_mock


def test_missing_bucket(google_storage_mock, app, tmpdir, caplog):
    app.config.update(
        {"PERCLAB_CACHE_DIR": str(tmpdir), "PERCLAB_CACHE_BUCKET": "missing-bucket"}
    )

    with caplog.at_level(logging.WARNING):
        PercolationLab(app)

    assert isinstance(get_state(app)["cache"].store, LocalStore)
    assert "Could not find the cache bucket missing-bucket" in caplog.text


def test_cache_disabled(app, tmpdir):
    app.config.update({"PERCLAB_CACHE": "false", "PERCLAB_CACHE_DIR": str(tmpdir)})

    lab = PercolationLab(app)

    assert lab.cache is None


def test_cache_dir_from_environment(app, tmpdir, monkeypatch):
    monkeypatch.setenv("PERCLAB_CACHE_DIR", str(tmpdir / "env"))

    PercolationLab(app)

    assert get_state(app)["cache"].store.destination == pathlib.Path(tmpdir / "env")


def test_run(app_local, tmpdir):
    lab = get_state(app_local)["ext_obj"]

    result_dir = lab.run()

    assert result_dir == pathlib.Path(tmpdir / "results" / "theta")
    rows = read_csv(result_dir / "theta.csv")
    assert [float(row["p"]) for row in rows] == [0.7, 0.9]
    assert all(row["m"] == "4" and row["replicas"] == "5" for row in rows)
    assert "experiment = theta" in (result_dir / "config.cfg").read_text()


def test_run_replays_cache(app_local, caplog):
    lab = get_state(app_local)["ext_obj"]
    result_dir = lab.run()
    first = (result_dir / "theta.csv").read_bytes()
    (result_dir / "theta.csv").unlink()

    with caplog.at_level(logging.INFO, logger="perclab.cache"):
        lab.run()

    assert "Cache hit" in caplog.text
    assert (result_dir / "theta.csv").read_bytes() == first


def test_run_rejects_bad_config(app_local):
    app_local.config["PERCLAB_REPLICAS"] = "many"

    with pytest.raises(SchemaError):
        get_state(app_local)["ext_obj"].run()


def test_create_app(datadir, tmpdir):
    app = create_app(datadir / "beta.cfg", [f"cache_dir={tmpdir}", "seed=5"])

    with app.app_context():
        cfg = get_state(app)["ext_obj"].config

    assert cfg.experiment == "beta"
    assert cfg.seed == 5
    assert cfg["n_grid"] == (4,)


def write_axis_table(path, x_value):
    axes = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    values = {v: (x_value if v[0] else 1.0) for v in axes}
    cells = {(0.7, v): BetaEstimate(2, 0.7, v, 4, 10, values[v], 0.01, 0) for v in axes}
    NormTable(2, [0.7], axes, cells).write_csv(path)


def test_run_sees_edited_norm_table(app_local, tmpdir):
    table = pathlib.Path(tmpdir / "norm_table.csv")
    write_axis_table(table, 1.0)
    app_local.config.update(
        {
            "PERCLAB_EXPERIMENT": "wulff",
            "PERCLAB_P_GRID": "0.7",
            "PERCLAB_NORM_TABLE": str(table),
            "PERCLAB_THETA": "1.0",
        }
    )
    lab = get_state(app_local)["ext_obj"]
    first = (lab.run() / "wulff.csv").read_text()

    write_axis_table(table, 2.0)
    second_dir = lab.run()

    rows = read_csv(second_dir / "wulff.csv")
    assert (second_dir / "wulff.csv").read_text() != first
    assert float(rows[0]["surfaceEnergy"]) > 0


def test_state_keys(app_local):
    assert set(get_state(app_local)) == {"ext_obj", "cache"}
