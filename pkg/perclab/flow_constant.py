"""
Monte-Carlo estimation of the flow constant ``beta_p(v)``, the limit of
``E[tau_p(n, v)] / (2n)^(d-1)``, and the coupled experiments probing its regularity in ``p``.

Replica ``r`` of every experiment derives its seed from the master seed, the experiment name and
``r`` only, so the same replica sees the same uniforms at every ``p`` and in every direction.
"""
import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import supercritical_range
from .cylinder import CylinderInstance, build_cylinder
from .exceptions import GeometryError, ParameterError
from .flow import min_cardinality_min_cut, min_open_cut
from .lattice import open_at, sample_uniform_field, two_stage_configs, two_stage_param
from .utils import (
    binomial_stderr,
    derive_seed,
    is_sorted,
    normal_ci,
    read_csv,
    write_csv,
)
from .workers import map_tasks

logger = logging.getLogger(__name__)

COUPLINGS = ("monotone", "two-stage")


def normalization(n: int, d: int) -> int:
    """Area ``(2n)^(d-1)`` of the base ``n S(v)``."""
    return (2 * n) ** (d - 1)


def axis_direction(d: int, axis: int = None) -> Tuple[float, ...]:
    axis = d - 1 if axis is None else axis
    return tuple(1.0 if k == axis else 0.0 for k in range(d))


def default_directions(d: int) -> List[Tuple[float, ...]]:
    """Axis directions followed by the ``(1, 1, 0, ...) / sqrt(2)``-type diagonals."""
    directions = [axis_direction(d, k) for k in range(d)]
    s = 1.0 / math.sqrt(2.0)
    for i in range(d):
        for j in range(i + 1, d):
            for sign in (1.0, -1.0):
                v = [0.0] * d
                v[i], v[j] = s, sign * s
                directions.append(tuple(v))
    return directions


@lru_cache(maxsize=32)
def cached_cylinder(n: int, v: Tuple[float, ...]) -> CylinderInstance:
    return build_cylinder(n, v)


def _check_p(p: float, d: int):
    lower, _ = supercritical_range(d)
    if not lower <= p <= 1.0:
        raise ParameterError(f"p={p} is outside the validated range [{lower}, 1] for d={d}")


def _mean_stderr(values: np.ndarray) -> Tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, math.nan
    return mean, float(values.std(ddof=1) / math.sqrt(len(values)))


class BetaEstimate(NamedTuple):
    """Mean and standard error of ``tau_p(n, v) / (2n)^(d-1)`` over independent replicas."""

    d: int
    p: float
    v: Tuple[float, ...]
    n: int
    replicas: int
    mean: float
    stderr: float
    seed: int
    taus: Tuple[int, ...] = ()

    def row(self) -> list:
        return [self.d, self.p, *self.v, self.n, self.replicas, self.mean, self.stderr, self.seed]


def beta_header(d: int) -> List[str]:
    return ["d", "p", *[f"v{k + 1}" for k in range(d)], "n", "replicas", "mean", "stderr", "seed"]


def _tau_task(task: tuple) -> int:
    n, v, p, seed = task
    instance = cached_cylinder(n, v)
    config = open_at(sample_uniform_field(instance.region, seed), p)
    return min_open_cut(instance, config).tau


def _estimate(p, v, n, taus, seed) -> BetaEstimate:
    d = len(v)
    norm = normalization(n, d)
    mean, stderr = _mean_stderr(np.asarray(taus, dtype=float) / norm)
    return BetaEstimate(d, p, v, n, len(taus), mean, stderr, seed, tuple(taus))


def estimate_beta(
    p: float, v: Sequence[float], n: int, replicas: int, seed: int, jobs: int = 1
) -> BetaEstimate:
    """
    Estimates ``beta_p(v)`` at scale ``n``.

    :param p: The percolation parameter, in the validated range of the dimension.

    :param v: The unit direction.

    :param n: The scale, at least 2.

    :param replicas: Number of independent configurations.

    :param seed: The master seed.

    :param jobs: Number of worker processes.

    :returns: The estimate; its standard error is ``nan`` for a single replica.

    :raises GeometryError: From :py:func:`perclab.cylinder.build_cylinder`.
    """
    v = tuple(float(x) for x in v)
    _check_p(p, len(v))
    if replicas < 1:
        raise ParameterError("Replicas must be at least 1")
    cached_cylinder(n, v)

    tasks = [(n, v, p, derive_seed(seed, "beta", r)) for r in range(replicas)]
    return _estimate(p, v, n, map_tasks(_tau_task, tasks, jobs), seed)


class BetaSchedule(NamedTuple):
    """Estimates along an increasing ``n`` schedule; the largest ``n`` is the reported value."""

    estimates: List[BetaEstimate]

    @property
    def value(self) -> BetaEstimate:
        return self.estimates[-1]

    @property
    def drift(self) -> Optional[float]:
        """Difference between the two largest scales, absent for a single scale."""
        if len(self.estimates) < 2:
            return None
        return self.estimates[-1].mean - self.estimates[-2].mean


def beta_schedule(
    p: float, v: Sequence[float], n_schedule: Sequence[int], replicas: int, seed: int, jobs: int = 1
) -> BetaSchedule:
    if not n_schedule or not is_sorted(n_schedule):
        raise ParameterError(f"The n schedule must be sorted and nonempty, got {list(n_schedule)}")
    return BetaSchedule([estimate_beta(p, v, n, replicas, seed, jobs) for n in n_schedule])


class CoupledBeta(NamedTuple):
    """
    Paired samples ``(tau_p, tau_q)`` on coupled configurations together with the cardinality of
    the minimal-cardinality minimal cut ``E_{n,p}`` and the number of its edges that the coupling
    may open between ``p`` and ``q``: edges with ``p <= u < q`` for the monotone coupling, edges
    with auxiliary bit ``V = 1`` for the two-stage coupling.
    """

    d: int
    p: float
    q: float
    v: Tuple[float, ...]
    n: int
    coupling: str
    seed: int
    tau_p: np.ndarray
    tau_q: np.ndarray
    cut_sizes: np.ndarray
    v_hits: np.ndarray
    slope: Optional[float]
    stderr: Optional[float]

    @property
    def replicas(self) -> int:
        return len(self.tau_p)

    @property
    def ci(self) -> Tuple[Optional[float], Optional[float]]:
        if self.slope is None or self.stderr is None or math.isnan(self.stderr):
            return None, None
        return normal_ci(self.slope, self.stderr)

    def row(self) -> list:
        lo, hi = self.ci
        return [self.d, self.p, self.q, *self.v, self.n, self.slope, lo, hi]


def slope_header(d: int) -> List[str]:
    return ["d", "p", "q", *[f"v{k + 1}" for k in range(d)], "n", "slope", "ci_lo", "ci_hi"]


def _pair_task(task: tuple) -> Tuple[int, int, int, int]:
    n, v, p, q, coupling, seed = task
    instance = cached_cylinder(n, v)
    if coupling == "monotone":
        field = sample_uniform_field(instance.region, seed)
        low, high = open_at(field, p), open_at(field, q)
        extra = (field.u >= p) & (field.u < q)
    else:
        field = sample_uniform_field(instance.region, seed, aux_param=two_stage_param(p, q))
        low, high = two_stage_configs(field, p)
        extra = field.aux
    cut = min_cardinality_min_cut(instance, low)
    tau_q = min_open_cut(instance, high).tau
    return cut.tau, tau_q, cut.cardinality, int(extra[cut.cut_edges].sum())


def coupled_beta_pair(
    p: float,
    q: float,
    v: Sequence[float],
    n: int,
    replicas: int,
    seed: int,
    coupling: str = "monotone",
    jobs: int = 1,
) -> CoupledBeta:
    """
    Samples coupled pairs ``(tau_p, tau_q)`` and the slope statistic
    ``mean(tau_q - tau_p) / ((2n)^(d-1) (q - p))`` with its standard error.

    :param p: The lower parameter.

    :param q: The upper parameter, ``q >= p``; ``q < 1`` for the two-stage coupling.

    :param v: The unit direction.

    :param n: The scale.

    :param replicas: Number of coupled pairs.

    :param seed: The master seed.

    :param coupling: ``"monotone"`` or ``"two-stage"``.

    :param jobs: Number of worker processes.

    :returns: The paired samples; the slope is absent when ``p == q``.

    :raises ParameterError: If ``p > q``, a parameter is out of range or the coupling is unknown.
    """
    v = tuple(float(x) for x in v)
    d = len(v)
    if coupling not in COUPLINGS:
        raise ParameterError(f"Unknown coupling '{coupling}'")
    if p > q:
        raise ParameterError(f"Coupled pairs need p <= q, got p={p}, q={q}")
    _check_p(p, d)
    _check_p(q, d)
    if coupling == "two-stage":
        two_stage_param(p, q)
    if replicas < 1:
        raise ParameterError("Replicas must be at least 1")
    cached_cylinder(n, v)

    tasks = [(n, v, p, q, coupling, derive_seed(seed, "pair", r)) for r in range(replicas)]
    samples = np.asarray(map_tasks(_pair_task, tasks, jobs), dtype=np.int64).reshape(-1, 4)
    tau_p, tau_q, sizes, hits = samples.T

    slope = stderr = None
    if q > p:
        scale = normalization(n, d) * (q - p)
        slope, stderr = _mean_stderr((tau_q - tau_p) / scale)
    return CoupledBeta(d, p, q, v, n, coupling, seed, tau_p, tau_q, sizes, hits, slope, stderr)


class Exceedance(NamedTuple):
    threshold: float
    count: int
    replicas: int
    frequency: float
    stderr: float


def chernoff_exceedance(pair: CoupledBeta, delta: float) -> Exceedance:
    """
    Frequency of ``tau_q - tau_p > ((q - p) / (1 - p) + delta) |E_{n,p}|`` over coupled pairs.
    Expected to vanish as ``n`` grows.
    """
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    threshold = two_stage_param(pair.p, pair.q) + delta
    count = int(((pair.tau_q - pair.tau_p) > threshold * pair.cut_sizes).sum())
    replicas = pair.replicas
    return Exceedance(
        threshold, count, replicas, count / replicas, binomial_stderr(count, replicas)
    )


class QuantileRow(NamedTuple):
    d: int
    p: float
    n: int
    q50: float
    q99: float
    replicas: int


def _cutsize_task(task: tuple) -> List[Tuple[int, int]]:
    n, v, p_grid, seed = task
    instance = cached_cylinder(n, v)
    field = sample_uniform_field(instance.region, seed)
    results = []
    for p in p_grid:
        cut = min_cardinality_min_cut(instance, open_at(field, p))
        results.append((cut.tau, cut.cardinality))
    return results


def cutsize_samples(
    p_grid: Sequence[float],
    n_grid: Sequence[int],
    replicas: int,
    seed: int,
    v: Sequence[float] = None,
    d: int = 2,
    jobs: int = 1,
) -> Dict[Tuple[float, int], np.ndarray]:
    """
    Samples ``(tau_p, N_{n,p})`` per ``(p, n)``; one field per ``(n, replica)`` is shared by the
    whole ``p`` grid.

    :returns: For every ``(p, n)`` an array of shape ``(replicas, 2)``.
    """
    if not p_grid or not n_grid:
        raise ParameterError("The p and n grids must be nonempty")
    v = tuple(float(x) for x in (v if v is not None else axis_direction(d)))
    for p in p_grid:
        _check_p(p, len(v))

    samples = {}
    for i, n in enumerate(n_grid):
        cached_cylinder(n, v)
        tasks = [
            (n, v, tuple(p_grid), derive_seed(seed, "quantiles", i, r)) for r in range(replicas)
        ]
        results = np.asarray(map_tasks(_cutsize_task, tasks, jobs), dtype=np.int64)
        for j, p in enumerate(p_grid):
            samples[p, n] = results[:, j, :]
        logger.info("Sampled cut sizes at n=%d", n)
    return samples


def cutsize_quantiles(
    p_grid: Sequence[float],
    n_grid: Sequence[int],
    replicas: int,
    seed: int,
    v: Sequence[float] = None,
    d: int = 2,
    jobs: int = 1,
) -> List[QuantileRow]:
    """
    Median and 0.99-quantile of ``N_{n,p} / n^(d-1)`` over a ``(p, n)`` grid.

    :param p_grid: The parameters.

    :param n_grid: The scales.

    :param replicas: Replicas per scale.

    :param seed: The master seed.

    :param v: The direction, the last axis by default.

    :param d: The dimension when ``v`` is not given.

    :param jobs: Number of worker processes.

    :returns: One row per ``(p, n)``, ordered by ``p`` then ``n``.
    """
    d = len(v) if v is not None else d
    samples = cutsize_samples(p_grid, n_grid, replicas, seed, v, d, jobs)
    rows = []
    for p in p_grid:
        for n in n_grid:
            ratio = samples[p, n][:, 1] / n ** (d - 1)
            q50, q99 = np.quantile(ratio, [0.5, 0.99]).tolist()
            rows.append(QuantileRow(d, p, n, q50, q99, replicas))
    return rows


class SymmetryCheck(NamedTuple):
    """Agreement of the estimates of directions related by coordinate permutations and signs."""

    group: Tuple[float, ...]
    directions: int
    max_z: float
    agree: bool


class DirectionSweep(NamedTuple):
    estimates: List[BetaEstimate]
    symmetry: List[SymmetryCheck]


def symmetry_group(v: Sequence[float]) -> Tuple[float, ...]:
    return tuple(sorted(round(abs(x), 9) for x in v))


def symmetry_checks(estimates: Sequence[BetaEstimate], sigmas: float = 3.0) -> List[SymmetryCheck]:
    """
    Compares every estimate with the first one of its symmetry group: the two agree when their
    difference is at most ``sigmas`` combined standard errors.
    """
    groups: Dict[Tuple[float, ...], List[BetaEstimate]] = {}
    for estimate in estimates:
        groups.setdefault(symmetry_group(estimate.v), []).append(estimate)

    checks = []
    for key, members in groups.items():
        ref, max_z, agree = members[0], 0.0, True
        for other in members[1:]:
            diff = abs(other.mean - ref.mean)
            combined = math.sqrt(np.nan_to_num(ref.stderr) ** 2 + np.nan_to_num(other.stderr) ** 2)
            if combined > 0:
                max_z = max(max_z, diff / combined)
            elif diff > 0:
                max_z = math.inf
            agree = agree and diff <= sigmas * combined
        checks.append(SymmetryCheck(key, len(members), max_z, agree))
    return checks


def direction_sweep(
    p: float,
    directions: Sequence[Sequence[float]],
    n: int,
    replicas: int,
    seed: int,
    jobs: int = 1,
) -> DirectionSweep:
    """
    Estimates ``beta_p`` in every direction with shared replica seeds, plus the lattice-symmetry
    diagnostics.
    """
    estimates = [estimate_beta(p, v, n, replicas, seed, jobs) for v in directions]
    return DirectionSweep(estimates, symmetry_checks(estimates))


class NormTable:
    """
    Estimates of ``beta_p(v)`` over a ``(p, direction)`` grid. Missing cells are stored as
    ``None``. Persisted as a CSV file plus a JSON metadata sidecar with the same stem.

    :param d: The dimension.

    :param p_grid: The sorted parameters.

    :param directions: The unit directions.

    :param cells: Mapping ``(p, direction) -> BetaEstimate``.

    :param metadata: Provenance: n schedule, replicas, seeds.
    """

    def __init__(
        self,
        d: int,
        p_grid: Sequence[float],
        directions: Sequence[Sequence[float]],
        cells: Dict[tuple, Optional[BetaEstimate]],
        metadata: dict = None,
    ):
        if not is_sorted(p_grid):
            raise ParameterError(f"The p grid must be sorted, got {list(p_grid)}")

        #: The dimension
        self.d = d

        #: The sorted parameters
        self.p_grid = tuple(float(p) for p in p_grid)

        #: The unit directions
        self.directions = tuple(tuple(float(x) for x in v) for v in directions)

        #: Provenance metadata
        self.metadata = dict(metadata or {})

        self._cells = {
            (float(p), v): cells.get((p, v)) for p in self.p_grid for v in self.directions
        }

    def cell(self, p: float, v: Sequence[float]) -> Optional[BetaEstimate]:
        return self._cells.get((float(p), tuple(float(x) for x in v)))

    def values_at(self, p: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        The directions with an estimate at ``p`` and the estimated values.

        :raises GeometryError: If no direction has an estimate.
        """
        p = float(p)
        pairs = [(v, self._cells[p, v]) for v in self.directions if self._cells.get((p, v))]
        if not pairs:
            raise GeometryError(f"The norm table has no estimate at p={p}")
        return (
            np.array([v for v, _ in pairs], dtype=float),
            np.array([est.mean for _, est in pairs], dtype=float),
        )

    def at(self, p: float) -> "NormTable":
        """The slice of the table at one parameter."""
        cells = {(float(p), v): self._cells.get((float(p), v)) for v in self.directions}
        return NormTable(self.d, [p], self.directions, cells, self.metadata)

    def rows(self) -> List[list]:
        rows = []
        for p in self.p_grid:
            for v in self.directions:
                estimate = self._cells[p, v]
                if estimate is None:
                    rows.append([self.d, p, *v, None, None, None, None, None])
                else:
                    rows.append(estimate.row())
        return rows

    def write_csv(self, path: Path) -> Path:
        """
        Writes the table and its sidecar ``<stem>.json``.

        :returns: The path of the CSV file.
        """
        path = write_csv(path, beta_header(self.d), self.rows())
        sidecar = {
            "d": self.d,
            "p_grid": list(self.p_grid),
            "directions": [list(v) for v in self.directions],
            **self.metadata,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "NormTable":
        """
        Loads a table written by :py:meth:`write_csv`. The sidecar is optional.
        """
        path = Path(path)
        records = read_csv(path)
        if not records:
            raise GeometryError(f"Norm table {path} is empty")
        d = int(records[0]["d"])
        cells, p_grid, directions = {}, [], []
        for record in records:
            p = float(record["p"])
            v = tuple(float(record[f"v{k + 1}"]) for k in range(d))
            if p not in p_grid:
                p_grid.append(p)
            if v not in directions:
                directions.append(v)
            if record["mean"]:
                cells[p, v] = BetaEstimate(
                    d, p, v, int(record["n"]), int(record["replicas"]), float(record["mean"]),
                    float(record["stderr"]) if record["stderr"] else math.nan,
                    int(record["seed"]),
                )
        sidecar = path.with_suffix(".json")
        metadata = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        for key in ("d", "p_grid", "directions"):
            metadata.pop(key, None)
        return cls(d, sorted(p_grid), directions, cells, metadata)


def build_norm_table(
    p_grid: Sequence[float],
    directions: Sequence[Sequence[float]],
    n: int,
    replicas: int,
    seed: int,
    jobs: int = 1,
) -> NormTable:
    """
    Fills a :py:class:`NormTable` with :py:func:`estimate_beta` over every ``(p, direction)``
    cell. Replica seeds are shared across cells.
    """
    if not p_grid or not is_sorted(p_grid):
        raise ParameterError(f"The p grid must be sorted and nonempty, got {list(p_grid)}")
    directions = [tuple(float(x) for x in v) for v in directions]
    d = len(directions[0])
    cells = {}
    for p in p_grid:
        for v in directions:
            cells[float(p), v] = estimate_beta(p, v, n, replicas, seed, jobs)
        logger.info("Norm table row p=%s done", p)
    metadata = {"n": n, "replicas": replicas, "seed": seed}
    return NormTable(d, p_grid, directions, cells, metadata)
