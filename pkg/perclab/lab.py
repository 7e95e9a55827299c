import os
from pathlib import Path
from typing import Iterable, Union

from flask import Flask
from google import auth, cloud

from . import __version__
from .cache import CloudStore, LocalStore, ResultCache
from .config import (
    PREFIX,
    ExperimentConfig,
    apply_defaults,
    get_value,
    load_flat,
    parse_overrides,
    resolve,
)
from .experiments import run_experiment
from .utils import get_state

#: Environment variable naming the cache directory when the configuration does not
CACHE_DIR_ENV = "PERCLAB_CACHE_DIR"


class PercolationLab:
    """
    This is the main extension class. It holds the result cache of an application and runs the
    experiment described by the application configuration. If the application instance is given
    at creation time, :py:func:`init_app` is called for you.
    """

    def __init__(self, app: Flask = None):
        if app is not None:
            self.init_app(app)

    def init_app(self, app: Flask):
        """
        Initialize the extension for the given :py:class:`flask.Flask` application instance

        :param app: The application instance
        """
        self._app = app
        self._prefix = PREFIX

        apply_defaults(app.config)
        app.logger.setLevel(get_value(app.config, "log_level"))

        self._tenacity = app.config.get(f"{self._prefix}_TENACITY")

        cache_dir = get_value(app.config, "cache_dir") or os.environ.get(CACHE_DIR_ENV)
        destination = Path(cache_dir) if cache_dir else Path.home() / ".cache" / "perclab"

        self._client = None
        bucket_name = get_value(app.config, "cache_bucket")
        if bucket_name:
            try:
                self._client = cloud.storage.Client()
            except (EnvironmentError, auth.exceptions.DefaultCredentialsError) as e:
                app.logger.warning(str(e))

        app.extensions = getattr(app, "extensions", {})
        ext = app.extensions.setdefault("perclab", {})
        ext["ext_obj"] = self
        ext["cache"] = None
        if get_value(app.config, "cache"):
            ext["cache"] = ResultCache(self._create_store(destination, bucket_name), __version__)

    def _create_store(self, destination: Path, bucket_name: str) -> Union[LocalStore, CloudStore]:
        if self._client and bucket_name:
            try:
                return CloudStore(
                    self._client.get_bucket(bucket_name), destination, tenacity=self._tenacity
                )
            except cloud.exceptions.NotFound:
                self._app.logger.warning(f"Could not find the cache bucket {bucket_name}")

        return LocalStore(destination)

    @property
    def cache(self) -> ResultCache:
        return get_state(self._app)["cache"]

    @property
    def config(self) -> ExperimentConfig:
        """The resolved configuration of the application."""
        return resolve(self._app.config)

    def run(self) -> Path:
        """
        Runs the configured experiment.

        :returns: The result directory.

        :raises SchemaError: If the configuration does not validate.

        :raises CapabilityError: If the experiment is not available in the requested dimension.
        """
        return run_experiment(self.config, self.cache)


def create_app(config_path: Union[str, Path] = None, overrides: Iterable[str] = ()) -> Flask:
    """
    Creates the application of one run: the configuration file, if any, then the ``key=value``
    overrides, then the extension.

    :param config_path: A flat configuration file.

    :param overrides: ``key=value`` strings applied after the file.

    :returns: The application, with :py:class:`PercolationLab` registered.
    """
    app = Flask("perclab")
    if config_path is not None:
        app.config.from_file(str(Path(config_path).resolve()), load=load_flat)
    app.config.update(parse_overrides(overrides))
    PercolationLab(app)
    return app


def run(config_path: Union[str, Path] = None, overrides: Iterable[str] = ()) -> Path:
    """
    Runs the experiment described by a configuration file and overrides.

    :returns: The result directory.
    """
    app = create_app(config_path, overrides)
    with app.app_context():
        return get_state(app)["ext_obj"].run()
