"""
Plot-ready CSV files derived from a result directory:

- ``decay``: one series per ``p`` with ``t`` increasing, from ``decay.csv``,
- ``slopes``: the slope ladders of every ``slopes*.csv`` file,
- ``crystal``: crystal outlines as closed vertex loops from ``crystals.ndjson``. In dimension 2
  the outline is ordered counterclockwise; in dimension 3 every facet is a loop ordered
  counterclockwise when seen from outside.

Every file is written to ``plot_<kind>.csv`` in the result directory.
"""
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Union

import numpy as np

from .exceptions import NotFoundResultError, ParameterError
from .utils import read_csv, read_ndjson, write_csv

logger = logging.getLogger(__name__)

DECAY_HEADER = ["series", "p", "t", "frequency", "log_frequency", "stderr"]
SLOPES_HEADER = ["quantity", "n", "p_lo", "p_hi", "p_mid", "slope", "ci_lo", "ci_hi"]
CRYSTAL_HEADER = ["series", "p", "facet", "vertex", "x", "y", "z"]


def _require(path: Path) -> Path:
    if not path.is_file():
        raise NotFoundResultError(f"Missing result file {path}")
    return path


def _number(raw: str, kind: Callable = float):
    return kind(raw) if raw not in (None, "") else None


def _series(p) -> str:
    return f"p={p!r}"


def decay_rows(result_dir: Path) -> List[list]:
    records = read_csv(_require(result_dir / "decay.csv"))
    points = sorted(
        (float(r["p"]), int(r["t"]), float(r["frequency"]), _number(r["stderr"]))
        for r in records
    )
    return [
        [_series(p), p, t, freq, math.log(freq) if freq > 0 else None, stderr]
        for p, t, freq, stderr in points
    ]


def slope_rows(result_dir: Path) -> List[list]:
    paths = sorted(result_dir.glob("slopes*.csv"))
    if not paths:
        raise NotFoundResultError(f"No slope files in {result_dir}")
    rows = []
    for path in paths:
        for r in read_csv(path):
            # beta runs write p and q, slope reports p_lo and p_hi
            p_lo = float(r.get("p_lo") or r["p"])
            p_hi = float(r.get("p_hi") or r["q"])
            rows.append(
                [
                    r.get("quantity", "beta"), _number(r.get("n"), int), p_lo, p_hi,
                    (p_lo + p_hi) / 2.0, _number(r["slope"]), _number(r["ci_lo"]),
                    _number(r["ci_hi"]),
                ]
            )
    return rows


def counterclockwise(points: np.ndarray, normal: np.ndarray = None) -> np.ndarray:
    """
    Orders the vertices of a convex polygon counterclockwise around their centroid. For a polygon
    in 3-space, the orientation is the one seen from the tip of ``normal``.

    :returns: The permutation of the rows.
    """
    centered = points - points.mean(axis=0)
    if normal is None:
        return np.argsort(np.arctan2(centered[:, 1], centered[:, 0]), kind="stable")
    normal = np.asarray(normal, dtype=float)
    norms = np.linalg.norm(centered, axis=1)
    e1 = centered[int(np.argmax(norms))] / norms.max()
    e2 = np.cross(normal / np.linalg.norm(normal), e1)
    return np.argsort(np.arctan2(centered @ e2, centered @ e1), kind="stable")


def crystal_rows(result_dir: Path) -> List[list]:
    records = read_ndjson(_require(result_dir / "crystals.ndjson"))
    rows = []
    for record in records:
        p = record.get("p")
        series = _series(p) if p is not None else record.get("norm", "crystal")
        vertices = np.asarray(record["vertices"], dtype=float)
        if vertices.shape[1] == 2:
            loops = [(0, vertices[counterclockwise(vertices)])]
        else:
            loops = []
            for i, facet in enumerate(record["facets"]):
                points = vertices[facet["vertexIds"]]
                loops.append((i, points[counterclockwise(points, facet["normal"])]))
        for facet, loop in loops:
            loop = np.vstack([loop, loop[:1]])
            for k, point in enumerate(loop.tolist()):
                z = point[2] if len(point) > 2 else None
                rows.append([series, p, facet, k, point[0], point[1], z])
    return rows


#: Plot kind -> (header, row builder)
EMITTERS: Dict[str, tuple] = {
    "decay": (DECAY_HEADER, decay_rows),
    "slopes": (SLOPES_HEADER, slope_rows),
    "crystal": (CRYSTAL_HEADER, crystal_rows),
}


def emit_plotdata(result_dir: Union[str, Path], kind: str) -> Path:
    """
    Writes the plot data of one kind for a result directory.

    :param result_dir: The directory of a run, e.g. ``results/scan``.

    :param kind: ``decay``, ``slopes`` or ``crystal``.

    :returns: The path of the written CSV file. A result set without rows gives a header-only
              file.

    :raises NotFoundResultError: If the result directory or the input files are missing.
    """
    if kind not in EMITTERS:
        raise ParameterError(f"Unknown plot kind '{kind}', expected one of {sorted(EMITTERS)}")
    result_dir = Path(result_dir)
    if not result_dir.is_dir():
        raise NotFoundResultError(f"Result directory {result_dir} not found")

    header, build = EMITTERS[kind]
    rows = build(result_dir)
    logger.info("Emitting %d %s rows", len(rows), kind)
    return write_csv(result_dir / f"plot_{kind}.csv", header, rows)
