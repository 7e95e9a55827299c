"""
Experiment configuration: the flat ``key = value`` file format, its typed schema, validation and
the central block of numerical tolerances.

Configuration values live in a :py:class:`flask.Config` under keys prefixed with ``PERCLAB_``; a
file key ``replicas`` becomes ``PERCLAB_REPLICAS``.
"""
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, IO, Iterable, Mapping, NamedTuple, Tuple, Union

from flask import Config

from .exceptions import CapabilityError, SchemaError

PREFIX = "PERCLAB"

#: Experiment kinds understood by the runner
KINDS = ("sample", "tau", "beta", "quantiles", "theta", "scan", "wulff", "cheeger", "regularity")

#: Experiments that build polytopes, only available in dimensions 2 and 3
GEOMETRY_KINDS = ("wulff", "cheeger", "regularity")

#: Validated supercritical range ``(lower, upper)`` of grid parameters per dimension
SUPERCRITICAL_RANGE = {2: (0.55, 0.99), 3: (0.30, 0.99)}
DEFAULT_SUPERCRITICAL_RANGE = (0.20, 0.99)


@dataclass(frozen=True)
class Tolerances:
    """Every numerical tolerance of the package."""

    #: Membership and facet tolerance for geometric predicates
    geometry: float = 1e-9

    #: Relative tolerance on polytope volumes after scaling
    volume_rtol: float = 1e-6

    #: Tolerance used when comparing reported numbers
    report: float = 1e-3


TOLERANCES = Tolerances()


def supercritical_range(d: int) -> Tuple[float, float]:
    return SUPERCRITICAL_RANGE.get(d, DEFAULT_SUPERCRITICAL_RANGE)


def default_theta_radius(d: int) -> int:
    """Default radius of the box used by the finite-volume proxy of ``0 in C_p``."""
    return 64 if d == 2 else 16


def default_n_schedule(d: int) -> Tuple[int, ...]:
    return (8, 16, 24) if d == 2 else (4, 6, 8)


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_list(item: Callable) -> Callable:
    def parse(raw: str) -> tuple:
        parts = [part.strip() for part in raw.split(",") if part.strip()]
        return tuple(item(part) for part in parts)

    return parse


def _parse_directions(raw: str) -> Union[str, Tuple[Tuple[float, ...], ...]]:
    """
    ``default`` or unit vectors separated by ``;``, e.g. ``1, 0; 1, 1``. Vectors are normalized.
    """
    if raw.strip().lower() == "default":
        return "default"
    vectors = []
    for part in raw.split(";"):
        if not part.strip():
            continue
        v = tuple(float(x) for x in part.split(","))
        norm = math.sqrt(sum(x * x for x in v))
        if norm == 0.0:
            raise ValueError("zero direction")
        vectors.append(tuple(x / norm for x in v))
    if not vectors:
        raise ValueError("no direction")
    return tuple(vectors)


class Key(NamedTuple):
    parse: Callable[[str], Any]
    default: Any
    choices: Tuple = ()


#: The published schema: key -> (parser, default, allowed values)
SCHEMA: Dict[str, Key] = {
    "experiment": Key(str, None, KINDS),
    "d": Key(int, 2),
    "p_grid": Key(_parse_list(float), (0.6, 0.7, 0.8, 0.9)),
    "n_grid": Key(_parse_list(int), ()),
    "t_grid": Key(_parse_list(int), (4, 8, 16, 32)),
    "directions": Key(_parse_directions, "default"),
    "replicas": Key(int, 20),
    "seed": Key(int, 0),
    "m": Key(int, 0),
    "radius": Key(int, 8),
    "coupling": Key(str, "monotone", ("monotone", "two-stage")),
    "q": Key(float, 0.0),
    "delta": Key(float, 0.1),
    "mode": Key(str, "exact", ("exact", "heuristic")),
    "size_cap": Key(int, 12),
    "anneal_budget": Key(int, 2000),
    "anneal_t0": Key(float, 1.0),
    "anneal_cooling": Key(float, 0.995),
    "anneal_restarts": Key(int, 4),
    "norm": Key(str, "table", ("l1", "l2", "linf", "table")),
    "norm_table": Key(str, ""),
    "wulff_directions": Key(int, 200),
    "theta": Key(float, 0.0),
    "prediction": Key(_parse_bool, True),
    "prediction_n": Key(int, 8),
    "jobs": Key(int, 1),
    "out": Key(str, "results"),
    "cache": Key(_parse_bool, True),
    "cache_dir": Key(str, ""),
    "cache_bucket": Key(str, ""),
    "geometry_tol": Key(float, TOLERANCES.geometry),
    "volume_rtol": Key(float, TOLERANCES.volume_rtol),
    "report_tol": Key(float, TOLERANCES.report),
    "log_level": Key(str, "INFO", ("DEBUG", "INFO", "WARNING", "ERROR")),
}

#: Keys that do not change results and are therefore left out of the cache key
RUNTIME_KEYS = ("jobs", "out", "cache", "cache_dir", "cache_bucket", "log_level")

#: Keys read by the extension only, never part of an experiment configuration
EXTENSION_KEYS = ("tenacity",)


def prefixed(key: str) -> str:
    return f"{PREFIX}_{key.upper()}"


def load_flat(fh: IO) -> dict:
    """
    Loader for :py:func:`flask.Config.from_file`. Each non-empty line is ``key = value``, ``#``
    starts a comment. Values are kept as strings and typed by :py:func:`resolve`.

    :param fh: The opened configuration file.

    :returns: The mapping of prefixed keys to raw values.
    """
    values = {}
    for lineno, line in enumerate(fh, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"Line {lineno}: expected 'key = value'", keys=[line])
        key, value = (part.strip() for part in line.split("=", 1))
        values[prefixed(key)] = value
    return values


def parse_overrides(pairs: Iterable[str]) -> dict:
    """
    Parses ``key=value`` strings given on the command line.
    """
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise SchemaError(f"Override {pair!r} is not of the form key=value", keys=[pair])
        key, value = (part.strip() for part in pair.split("=", 1))
        values[prefixed(key)] = value
    return values


def get_value(config: Mapping[str, Any], key: str) -> Any:
    """
    Reads and types a single key, e.g. a runtime key needed before the whole configuration is
    resolved.

    :raises SchemaError: If the value does not parse.
    """
    spec = SCHEMA[key]
    raw = config.get(prefixed(key), spec.default)
    try:
        return spec.parse(raw) if isinstance(raw, str) else raw
    except ValueError:
        raise SchemaError(f"Invalid configuration keys: {key}", keys=[key])


def apply_defaults(config: Config):
    for key, spec in SCHEMA.items():
        config.setdefault(prefixed(key), spec.default)


class ExperimentConfig:
    """
    A resolved and validated experiment configuration. Values are reached by key, e.g.
    ``cfg["p_grid"]``, the most common ones also as attributes.
    """

    def __init__(self, values: Mapping[str, Any]):
        self._values = dict(values)

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self._values.get(key, default)

    def items(self):
        return sorted(self._values.items())

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig({**self._values, **changes})

    @property
    def experiment(self) -> str:
        return self._values["experiment"]

    @property
    def d(self) -> int:
        return self._values["d"]

    @property
    def replicas(self) -> int:
        return self._values["replicas"]

    @property
    def seed(self) -> int:
        return self._values["seed"]

    @property
    def theta_radius(self) -> int:
        return self._values["m"] or default_theta_radius(self.d)

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(
            self._values["geometry_tol"], self._values["volume_rtol"], self._values["report_tol"]
        )

    def cache_items(self) -> list:
        """The items that determine the results of a run."""
        return [(k, v) for k, v in self.items() if k not in RUNTIME_KEYS]

    def input_digests(self) -> list:
        """
        sha256 digests of the input files named by the configuration, the norm table and its
        sidecar. A file edited in place changes its digest, while its path stays the same.
        """
        digests = []
        if self._values.get("norm_table"):
            path = Path(self._values["norm_table"])
            for part in (path, path.with_suffix(".json")):
                if part.is_file():
                    digest = hashlib.sha256(part.read_bytes()).hexdigest()
                    digests.append((f"sha256:{part.name}", digest))
        return digests

    def to_text(self) -> str:
        """Flat text form, loadable again with :py:func:`load_flat`."""
        lines = []
        for key, value in self.items():
            if isinstance(value, tuple) and value and isinstance(value[0], tuple):
                value = "; ".join(", ".join(repr(x) for x in v) for v in value)
            elif isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def resolve(config: Mapping[str, Any]) -> ExperimentConfig:
    """
    Types and validates every ``PERCLAB_*`` key of the given mapping against :py:data:`SCHEMA`.
    All problems are collected first and reported together.

    :param config: Typically ``app.config``.

    :returns: The resolved configuration.

    :raises SchemaError: Listing every offending key.

    :raises CapabilityError: If the experiment is not available in the requested dimension.
    """
    values, bad = {}, []
    for full_key, raw in config.items():
        if not full_key.startswith(f"{PREFIX}_"):
            continue
        key = full_key[len(PREFIX) + 1:].lower()
        if key in EXTENSION_KEYS:
            continue
        spec = SCHEMA.get(key)
        if spec is None:
            bad.append(key)
            continue
        try:
            value = spec.parse(raw) if isinstance(raw, str) else raw
        except ValueError:
            bad.append(key)
            continue
        if spec.choices and value not in spec.choices:
            bad.append(key)
            continue
        values[key] = value

    for key, spec in SCHEMA.items():
        values.setdefault(key, spec.default)

    if values["experiment"] is None and "experiment" not in bad:
        bad.append("experiment")
    bad.extend(_check_ranges(values))

    if bad:
        keys = sorted(set(bad))
        raise SchemaError(f"Invalid configuration keys: {', '.join(keys)}", keys=keys)

    if values["experiment"] in GEOMETRY_KINDS and values["d"] not in (2, 3):
        raise CapabilityError(
            f"Experiment '{values['experiment']}' is only available for d=2 and d=3"
        )

    if not values["n_grid"]:
        values["n_grid"] = default_n_schedule(values["d"])

    return ExperimentConfig(values)


def _check_ranges(values: dict) -> list:
    bad = []
    d = values.get("d")
    if not isinstance(d, int) or d < 2:
        return ["d"]

    # raw samples may be drawn anywhere in (0, 1]
    lower, upper = (0.0, 1.0) if values["experiment"] == "sample" else supercritical_range(d)
    p_grid = values["p_grid"]
    if (
        not p_grid
        or any(not lower <= p <= upper or p <= 0.0 for p in p_grid)
        or list(p_grid) != sorted(set(p_grid))
    ):
        bad.append("p_grid")

    directions = values["directions"]
    if directions != "default" and any(len(v) != d for v in directions):
        bad.append("directions")

    for key in ("n_grid", "t_grid"):
        grid = values[key]
        if any(x < 1 for x in grid) or list(grid) != sorted(set(grid)):
            bad.append(key)

    if any(n < 2 for n in values["n_grid"]):
        bad.append("n_grid")

    for key in ("replicas", "jobs", "size_cap", "radius", "wulff_directions", "prediction_n"):
        if values[key] < 1:
            bad.append(key)

    for key in ("m", "anneal_budget", "anneal_restarts"):
        if values[key] < 0:
            bad.append(key)

    if not 0.0 <= values["q"] < 1.0:
        bad.append("q")
    if not 0.0 <= values["theta"] <= 1.0:
        bad.append("theta")
    if not 0.0 < values["anneal_cooling"] < 1.0:
        bad.append("anneal_cooling")
    if values["delta"] <= 0.0:
        bad.append("delta")
    return bad
