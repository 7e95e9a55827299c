import base64
import hashlib
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Dict, Optional, Union

from google.cloud import storage
from google.cloud.exceptions import GoogleCloudError
from tenacity import retry, retry_if_exception_type

from .config import ExperimentConfig
from .utils import config_digest

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class LocalStore:
    """
    This class represents a local directory of published results, one sub-directory per key. It is
    also used as the local mirror of :py:class:`perclab.cache.CloudStore`.

    A key directory only ever appears complete: artifacts and manifest are written into a
    temporary directory which is then renamed into place.

    :param destination: The absolute path of the store.
    """

    def __init__(self, destination: Path):
        #: The root path of this store
        self.destination = Path(destination)

    def path(self, key: str) -> Path:
        return self.destination / key

    def publish(self, key: str, artifacts: Dict[str, bytes]) -> Path:
        """
        Publish the given artifacts under the key.

        :param key: The content address.

        :param artifacts: Mapping of file names to contents.

        :returns: The directory of the published artifacts. If the key was already published, the
                  existing directory is kept.
        """
        self.destination.mkdir(parents=True, exist_ok=True)
        final = self.path(key)
        if (final / MANIFEST).is_file():
            return final

        tmp = Path(tempfile.mkdtemp(prefix=f".{key[:12]}-", dir=self.destination))
        try:
            for name, data in artifacts.items():
                (tmp / name).parent.mkdir(parents=True, exist_ok=True)
                (tmp / name).write_bytes(data)
            manifest = {name: _sha256(data) for name, data in sorted(artifacts.items())}
            (tmp / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
            os.replace(tmp, final)
        except OSError:
            # a concurrent publisher won the rename
            if not (final / MANIFEST).is_file():
                raise
        finally:
            if tmp.exists():
                shutil.rmtree(tmp, ignore_errors=True)
        return final

    def load(self, key: str) -> Optional[Dict[str, bytes]]:
        """
        Load every artifact of the key.

        :param key: The content address.

        :returns: The artifacts, or ``None`` if the key is missing or any artifact does not match
                  its manifest digest.
        """
        directory = self.path(key)
        try:
            manifest = json.loads((directory / MANIFEST).read_text())
            artifacts = {name: (directory / name).read_bytes() for name in manifest}
        except (OSError, ValueError):
            return None
        if any(_sha256(artifacts[name]) != digest for name, digest in manifest.items()):
            logger.warning("Discarding corrupted cache entry %s", key)
            return None
        return artifacts

    def delete(self, key: str):
        """
        Delete the key if it exists.

        :param key: The content address.
        """
        shutil.rmtree(self.path(key), ignore_errors=True)


class CloudStore:
    """
    This class represents a result store mirrored to a Google Cloud Storage bucket. Results are
    first published locally with :py:class:`perclab.cache.LocalStore`, then uploaded blob by blob
    with their MD5 checksum; the manifest is uploaded last, so a remote entry without manifest is
    never read.

    :param bucket: The bucket instance.

    :param destination: The absolute path of the local mirror.

    :param tenacity: A dictionary specifying the keyword arguments for the :py:func:`tenacity.retry`
                     decorator.
    """

    def __init__(self, bucket: storage.Bucket, destination: Path, tenacity: dict = None):
        #: The :py:class:`google.cloud.storage.Bucket` instance.
        self.bucket = bucket

        #: Keyword arguments passed to :py:func:`tenacity.retry`.
        self.tenacity = tenacity or {}

        #: The :py:class:`perclab.cache.LocalStore` instance used as local mirror.
        self.local = LocalStore(destination)

    @property
    def destination(self) -> Path:
        return self.local.destination

    def _call(self, func):
        if self.tenacity:
            return retry(
                reraise=True,
                retry=retry_if_exception_type(GoogleCloudError),
                **self.tenacity,
            )(func)()
        return func()

    def _upload(self, name: str, filepath: Path):
        blob = self.bucket.blob(name)
        md5_hash = hashlib.md5(filepath.read_bytes())  # nosec
        blob.md5_hash = base64.b64encode(md5_hash.digest()).decode()
        self._call(lambda: blob.upload_from_filename(filepath))

    def publish(self, key: str, artifacts: Dict[str, bytes]) -> Path:
        """
        Publish the given artifacts locally and upload them to the bucket.

        :param key: The content address.

        :param artifacts: Mapping of file names to contents.

        :returns: The local directory of the published artifacts.
        """
        directory = self.local.publish(key, artifacts)
        for name in sorted(artifacts):
            self._upload(f"{key}/{name}", directory / name)
        self._upload(f"{key}/{MANIFEST}", directory / MANIFEST)
        return directory

    def load(self, key: str) -> Optional[Dict[str, bytes]]:
        """
        Load every artifact of the key, from the local mirror if possible, otherwise from the
        bucket. Remote artifacts are verified against the manifest digests and mirrored locally.

        :param key: The content address.

        :returns: The artifacts, or ``None``.
        """
        artifacts = self.local.load(key)
        if artifacts is not None:
            return artifacts

        manifest_blob = self.bucket.get_blob(f"{key}/{MANIFEST}")
        if manifest_blob is None:
            return None
        manifest = json.loads(self._call(manifest_blob.download_as_bytes))
        artifacts = {}
        for name, digest in manifest.items():
            blob = self.bucket.get_blob(f"{key}/{name}")
            data = self._call(blob.download_as_bytes) if blob is not None else None
            if data is None or _sha256(data) != digest:
                logger.warning("Remote cache entry %s is incomplete", key)
                return None
            artifacts[name] = data

        self.local.publish(key, artifacts)
        return artifacts

    def delete(self, key: str):
        """
        Delete the key locally and in the bucket.

        :param key: The content address.
        """
        for blob in self.bucket.list_blobs(prefix=f"{key}/"):
            blob.delete()
        self.local.delete(key)


class ResultCache:
    """
    Content-addressed store of experiment outputs. The key of a run is the sha256 digest of its
    resolved configuration, runtime-only keys excluded, and of the code version tag. A lookup
    either returns every artifact of a completed run, byte for byte, or nothing.

    :param store: The underlying store.

    :param version: The code version tag.
    """

    def __init__(self, store: Union[LocalStore, CloudStore], version: str):
        #: The underlying store
        self.store = store

        #: The code version tag
        self.version = version

    def key(self, config: ExperimentConfig) -> str:
        return config_digest([*config.cache_items(), *config.input_digests()], self.version)

    def get(self, config: ExperimentConfig) -> Optional[Dict[str, bytes]]:
        key = self.key(config)
        artifacts = self.store.load(key)
        if artifacts is not None:
            logger.info("Cache hit %s", key[:12])
        return artifacts

    def put(self, config: ExperimentConfig, artifacts: Dict[str, bytes]) -> str:
        key = self.key(config)
        self.store.publish(key, artifacts)
        logger.info("Cached %d artifacts under %s", len(artifacts), key[:12])
        return key
