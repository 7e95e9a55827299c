import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
from flask import Flask

#: Largest seed value, seeds are 64-bit unsigned integers
SEED_MASK = (1 << 64) - 1


def get_state(app: Flask) -> dict:
    """
    The perclab registration of an application: ``ext_obj``, the :py:class:`PercolationLab`
    instance, and ``cache``, its :py:class:`ResultCache` or ``None`` when caching is off.

    :param app: An application passed to :py:meth:`PercolationLab.init_app`.
    """
    assert "perclab" in app.extensions, (
        "The perclab extension was not registered to the current "
        "application. Please make sure to call init_app() first."
    )
    return app.extensions["perclab"]


def derive_seed(master: int, kind: str, *indices: int) -> int:
    """
    Derives the seed of a task from the master seed, the experiment kind and the task indices
    (grid indices followed by the replica index). The derivation is a sha256 digest of the
    canonical JSON encoding of the tuple, truncated to 64 bits, so it does not depend on the
    Python version, the platform or the order in which tasks are executed.

    :param master: The master seed.

    :param kind: The experiment or operation name.

    :param indices: Grid indices and replica index.

    :returns: A 64-bit unsigned seed.
    """
    payload = json.dumps([int(master) & SEED_MASK, kind, [int(i) for i in indices]])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def binomial_stderr(successes: int, trials: int) -> float:
    """
    Binomial standard error of the frequency ``successes / trials``.
    """
    if trials <= 0:
        return math.nan
    freq = successes / trials
    return math.sqrt(freq * (1.0 - freq) / trials)


def normal_ci(mean: float, stderr: float, z: float = 1.96) -> tuple:
    return mean - z * stderr, mean + z * stderr


def format_float(value: float) -> str:
    """
    Formats a float for CSV output. ``repr`` round-trips exactly so identical numbers always give
    identical bytes; missing values are written as empty fields.
    """
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def is_sorted(values: Sequence[float]) -> bool:
    return all(a <= b for a, b in zip(values, values[1:]))


def config_digest(items: Iterable, version: str) -> str:
    """
    Content address of a resolved configuration: sha256 over the sorted ``(key, value)`` pairs and
    the code version tag.

    :param items: The resolved ``(key, value)`` pairs.

    :param version: The code version tag.

    :returns: The hexadecimal digest.
    """
    payload = json.dumps([sorted((k, repr(v)) for k, v in items), version])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if value is None:
        return ""
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """
    Writes rows to a CSV file with ``\\n`` line endings. Floats are written with
    :py:func:`format_float`, booleans as ``true``/``false`` and missing values as empty fields.

    :param path: The destination file, parent directories are created.

    :param header: The column names.

    :param rows: The rows, in order.

    :returns: The path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def read_csv(path: Path) -> List[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_ndjson(path: Path, records: Iterable[dict]) -> Path:
    """Writes one compact JSON document per line, keys sorted."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    return path


def read_ndjson(path: Path) -> List[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
