import base64
import hashlib
import json
import logging
import pathlib

import pytest
from google.cloud.exceptions import GoogleCloudError

from perclab import CloudStore, ResultCache, resolve
from perclab.cache import MANIFEST
from perclab.utils import get_state

KEY = "0f" * 32


def test_local_publish_load(local_store, artifacts):
    directory = local_store.publish(KEY, artifacts)

    assert directory == local_store.destination / KEY
    assert (directory / "nested" / "cuts.ndjson").read_bytes() == b'{"tau":3}\n'
    assert local_store.load(KEY) == artifacts

    manifest = json.loads((directory / MANIFEST).read_text())
    assert manifest["theta.csv"] == hashlib.sha256(b"d,p\n2,0.7\n").hexdigest()


def test_local_publish_leaves_no_scratch(local_store, artifacts):
    local_store.publish(KEY, artifacts)

    assert [p.name for p in local_store.destination.iterdir()] == [KEY]


def test_local_missing_key(local_store):
    assert local_store.load(KEY) is None


def test_local_keeps_first_publication(local_store, artifacts):
    local_store.publish(KEY, artifacts)
    local_store.publish(KEY, {"theta.csv": b"other"})

    assert local_store.load(KEY) == artifacts


def test_local_corrupted_entry(local_store, artifacts, caplog):
    directory = local_store.publish(KEY, artifacts)
    (directory / "theta.csv").write_bytes(b"d,p\n2,0.8\n")

    with caplog.at_level(logging.WARNING, logger="perclab.cache"):
        assert local_store.load(KEY) is None

    assert f"Discarding corrupted cache entry {KEY}" in caplog.text


def test_local_delete(local_store, artifacts):
    local_store.publish(KEY, artifacts)
    local_store.delete(KEY)

    assert local_store.load(KEY) is None
    local_store.delete(KEY)


def test_cloud_publish(cloud_store, artifacts, google_bucket_mock):
    cloud_store.publish(KEY, artifacts)

    assert sorted(google_bucket_mock.blobs) == [
        f"{KEY}/config.cfg",
        f"{KEY}/manifest.json",
        f"{KEY}/nested/cuts.ndjson",
        f"{KEY}/theta.csv",
    ]
    uploaded = [c.args[0] for c in google_bucket_mock.blob.call_args_list]
    assert uploaded[-1] == f"{KEY}/manifest.json"

    md5_hash = base64.b64encode(hashlib.md5(b"d,p\n2,0.7\n").digest()).decode()
    assert google_bucket_mock.blobs[f"{KEY}/theta.csv"].md5_hash == md5_hash


def test_cloud_load_from_bucket(cloud_store, artifacts, google_bucket_mock, tmpdir):
    cloud_store.publish(KEY, artifacts)
    cloud_store.local.delete(KEY)

    assert cloud_store.load(KEY) == artifacts
    assert (pathlib.Path(tmpdir) / KEY / MANIFEST).is_file()


def test_cloud_load_missing(cloud_store):
    assert cloud_store.load(KEY) is None


def test_cloud_load_incomplete(cloud_store, artifacts, google_bucket_mock, caplog):
    cloud_store.publish(KEY, artifacts)
    cloud_store.local.delete(KEY)
    del google_bucket_mock.blobs[f"{KEY}/theta.csv"]

    with caplog.at_level(logging.WARNING, logger="perclab.cache"):
        assert cloud_store.load(KEY) is None

    assert f"Remote cache entry {KEY} is incomplete" in caplog.text


def test_cloud_load_tampered(cloud_store, artifacts, google_bucket_mock):
    cloud_store.publish(KEY, artifacts)
    cloud_store.local.delete(KEY)
    google_bucket_mock.blobs[f"{KEY}/config.cfg"].data = b"experiment = beta\n"

    assert cloud_store.load(KEY) is None


def test_cloud_delete(cloud_store, artifacts, google_bucket_mock):
    cloud_store.publish(KEY, artifacts)
    cloud_store.publish("ab" * 32, artifacts)

    cloud_store.delete(KEY)

    assert not any(name.startswith(KEY) for name in google_bucket_mock.blobs)
    assert len(google_bucket_mock.blobs) == 4
    assert cloud_store.load(KEY) is None


def test_cloud_publish_retry(app_cloud_retry, artifacts, google_bucket_error_mock):
    store = get_state(app_cloud_retry)["cache"].store
    assert isinstance(store, CloudStore)

    store.publish(KEY, artifacts)

    # two failures, then one upload per artifact and the manifest
    assert google_bucket_error_mock.blob().upload_from_filename.call_count == 6


def test_cloud_publish_without_retry(google_bucket_error_mock, artifacts, tmpdir):
    store = CloudStore(google_bucket_error_mock, pathlib.Path(tmpdir))

    with pytest.raises(GoogleCloudError):
        store.publish(KEY, artifacts)

    assert google_bucket_error_mock.blob().upload_from_filename.call_count == 1


def test_result_cache(local_store, artifacts):
    cache = ResultCache(local_store, "1.0.0")
    cfg = resolve({"PERCLAB_EXPERIMENT": "theta", "PERCLAB_JOBS": "1"})

    assert cache.get(cfg) is None

    key = cache.put(cfg, artifacts)

    assert cache.get(resolve({"PERCLAB_EXPERIMENT": "theta", "PERCLAB_JOBS": "3"})) == artifacts
    assert cache.get(resolve({"PERCLAB_EXPERIMENT": "theta", "PERCLAB_SEED": "1"})) is None
    assert ResultCache(local_store, "1.0.1").key(cfg) != key


def test_result_cache_key_follows_norm_table(local_store, tmp_path):
    table = tmp_path / "table.csv"
    table.write_text("d,p\n2,0.7\n")
    cfg = resolve({"PERCLAB_EXPERIMENT": "wulff", "PERCLAB_NORM_TABLE": str(table)})
    cache = ResultCache(local_store, "1.0.0")
    key = cache.key(cfg)

    table.write_text("d,p\n2,0.8\n")
    edited = cache.key(cfg)
    table.with_suffix(".json").write_text("{}\n")

    assert edited != key
    assert cache.key(cfg) not in (key, edited)
    assert dict(cfg.input_digests())["sha256:table.csv"] == hashlib.sha256(
        b"d,p\n2,0.8\n"
    ).hexdigest()
