import pathlib
from unittest import mock

import pytest
from flask import Flask
from google.cloud.exceptions import NotFound, GoogleCloudError
from tenacity import wait_fixed, stop_after_attempt

from perclab import PercolationLab, LocalStore, CloudStore


@pytest.fixture
def app():
    app = Flask("test")
    app.config["TESTING"] = True

    ctx = app.app_context()
    ctx.push()
    yield app
    ctx.pop()


@pytest.fixture
def app_local(app, tmpdir):
    app.config.update(
        {
            "PERCLAB_CACHE_DIR": str(tmpdir / "cache"),
            "PERCLAB_OUT": str(tmpdir / "results"),
            "PERCLAB_EXPERIMENT": "theta",
            "PERCLAB_P_GRID": "0.7, 0.9",
            "PERCLAB_M": "4",
            "PERCLAB_REPLICAS": "5",
        }
    )

    lab = PercolationLab()
    lab.init_app(app)

    return app


@pytest.fixture
def local_store(tmpdir):
    return LocalStore(pathlib.Path(tmpdir))


@pytest.fixture
def artifacts():
    return {
        "config.cfg": b"experiment = theta\n",
        "theta.csv": b"d,p\n2,0.7\n",
        "nested/cuts.ndjson": b'{"tau":3}\n',
    }


@pytest.fixture
def google_bucket_mock():
    """An in-memory bucket: uploaded files can be read back."""
    bucket = mock.MagicMock()
    blobs = {}

    def get_named_blob(name):
        blob = mock.MagicMock()
        type(blob).name = mock.PropertyMock(return_value=name)

        def upload_from_filename(filepath):
            blob.data = pathlib.Path(filepath).read_bytes()
            blobs[name] = blob

        blob.upload_from_filename.side_effect = upload_from_filename
        blob.download_as_bytes.side_effect = lambda: blob.data
        blob.delete.side_effect = lambda: blobs.pop(name, None)
        return blob

    def list_blobs(prefix):
        return [blob for name, blob in list(blobs.items()) if name.startswith(prefix)]

    bucket.blob.side_effect = get_named_blob
    bucket.get_blob.side_effect = blobs.get
    bucket.list_blobs.side_effect = list_blobs
    bucket.blobs = blobs

    return bucket


@pytest.fixture
def google_storage_mock(google_bucket_mock):
    client = mock.MagicMock()

    def get_bucket(name):
        if name == "results-bucket":
            return google_bucket_mock
        else:
            raise NotFound("Bucket not found")

    client.get_bucket.side_effect = get_bucket
    with mock.patch("google.cloud.storage.Client", return_value=client):
        yield


@pytest.fixture
def cloud_store(google_bucket_mock, tmpdir):
    return CloudStore(google_bucket_mock, pathlib.Path(tmpdir))


@pytest.fixture
def app_cloud(google_storage_mock, app, tmpdir):
    app.config.update(
        {
            "PERCLAB_CACHE_DIR": str(tmpdir / "cache"),
            "PERCLAB_CACHE_BUCKET": "results-bucket",
        }
    )

    PercolationLab(app)

    return app


@pytest.fixture
def google_bucket_error_mock():
    bucket = mock.MagicMock()
    blob = mock.MagicMock()
    blob.upload_from_filename.side_effect = [
        GoogleCloudError("error 1"),
        GoogleCloudError("error 2"),
    ] + [None] * 10

    bucket.blob.return_value = blob
    bucket.get_blob.return_value = None

    return bucket


@pytest.fixture
def google_storage_error_mock(google_bucket_error_mock):
    client = mock.MagicMock()
    client.get_bucket.return_value = google_bucket_error_mock
    with mock.patch("google.cloud.storage.Client", return_value=client):
        yield


@pytest.fixture
def app_cloud_retry(google_storage_error_mock, app, tmpdir):
    app.config.update(
        {
            "PERCLAB_CACHE_DIR": str(tmpdir / "cache"),
            "PERCLAB_CACHE_BUCKET": "results-bucket",
            "PERCLAB_TENACITY": {"stop": stop_after_attempt(4), "wait": wait_fixed(0)},
        }
    )

    PercolationLab(app)

    return app
