"""
Open cluster labeling and the box events of the renormalization argument: crossing clusters,
cluster diameters, the event ``T``, the disjoint and blocked properties of enlarged boxes, the
finite-volume proxy of ``P(0 in C_p)`` and the decay scan of atypical events.
"""
import logging
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse, stats
from scipy.sparse.csgraph import connected_components

from .config import default_theta_radius, supercritical_range
from .exceptions import GeometryError, NotFoundClusterError, ParameterError
from .lattice import PercConfig, Region, Vertex, open_at, restrict, sample_uniform_field
from .utils import binomial_stderr, derive_seed, is_sorted
from .workers import map_tasks

logger = logging.getLogger(__name__)


class ClusterLabeling:
    """
    Open clusters of a configuration: two vertices share a label iff they are joined by a path of
    open edges inside the region. Labels are ``0..K-1``.

    :param region: The labeled region.

    :param labels: Cluster label of every vertex, in the region's vertex order.
    """

    def __init__(self, region: Region, labels: np.ndarray):
        #: The labeled region
        self.region = region

        #: Cluster label per vertex
        self.labels = labels

        count = int(labels.max()) + 1 if len(labels) else 0
        coords = region.coords

        #: Number of vertices per cluster
        self.sizes = np.bincount(labels, minlength=count)

        #: Per-axis coordinate minimum of every cluster, shape ``(K, d)``
        self.mins = np.full((count, region.d), np.iinfo(np.int64).max, dtype=np.int64)

        #: Per-axis coordinate maximum of every cluster, shape ``(K, d)``
        self.maxs = np.full((count, region.d), np.iinfo(np.int64).min, dtype=np.int64)

        for k in range(region.d):
            np.minimum.at(self.mins[:, k], labels, coords[:, k])
            np.maximum.at(self.maxs[:, k], labels, coords[:, k])

    @property
    def num_clusters(self) -> int:
        return len(self.sizes)

    def label_of(self, vertex: Sequence[int]) -> int:
        return int(self.labels[self.region.vertex_index(vertex)])

    def members(self, label: int) -> np.ndarray:
        """Coordinates of the vertices of a cluster."""
        self._check(label)
        return self.region.coords[self.labels == label]

    def diameters(self) -> np.ndarray:
        return (self.maxs - self.mins).max(axis=1)

    def _check(self, label: int):
        if not 0 <= label < self.num_clusters:
            raise NotFoundClusterError(f"Cluster {label} not found")


def label_clusters(config: PercConfig) -> ClusterLabeling:
    """
    Labels the open clusters of a configuration.

    :param config: The configuration.

    :returns: The labeling.
    """
    region = config.region
    ends = region.endpoints[config.open_mask]
    n = region.num_vertices
    graph = sparse.coo_matrix(
        (np.ones(len(ends), dtype=np.int8), (ends[:, 0], ends[:, 1])), shape=(n, n)
    )
    _, labels = connected_components(graph, directed=False)
    return ClusterLabeling(region, labels.astype(np.int64))


def diameter(labeling: ClusterLabeling, label: int) -> int:
    """
    Diameter of a cluster: the largest spread of its vertices along a single axis.

    :raises NotFoundClusterError: If the label does not exist.
    """
    labeling._check(label)
    return int((labeling.maxs[label] - labeling.mins[label]).max())


class Box(NamedTuple):
    """Axis-aligned box ``[lo, hi]`` with inclusive corners."""

    lo: Vertex
    hi: Vertex

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def side(self) -> int:
        """Number of vertices along the shortest axis."""
        return min(b - a for a, b in zip(self.lo, self.hi)) + 1

    @classmethod
    def centered(cls, radius: int, d: int) -> "Box":
        return cls((-radius,) * d, (radius,) * d)


class BoxGrid(NamedTuple):
    """
    The partition of the lattice into boxes of ``t`` vertices per side:
    ``B_t(u) = [u t, u t + t - 1]``. The enlarged box of ``u`` is the union of the ``3^d`` boxes
    ``B_t(v)`` with ``|u - v|_inf <= 1``.
    """

    t: int
    d: int

    def box(self, u: Sequence[int]) -> Box:
        lo = tuple(int(x) * self.t for x in u)
        return Box(lo, tuple(x + self.t - 1 for x in lo))

    def enlarged(self, u: Sequence[int]) -> Box:
        lo = tuple((int(x) - 1) * self.t for x in u)
        return Box(lo, tuple(x + 3 * self.t - 1 for x in lo))

    def subcubes(self, u: Sequence[int]) -> List[Box]:
        """The ``3^d`` boxes composing the enlarged box of ``u``."""
        shifts = np.stack(np.meshgrid(*[[-1, 0, 1]] * self.d, indexing="ij"), axis=-1)
        return [self.box(np.add(u, s)) for s in shifts.reshape(-1, self.d)]


@lru_cache(maxsize=64)
def _box_region(lo: Vertex, hi: Vertex) -> Region:
    return Region.from_box(lo, hi)


def label_box(config: PercConfig, box: Box) -> ClusterLabeling:
    """
    Labels the open clusters of the configuration restricted to a box: only paths inside the
    closed box count.

    :raises GeometryError: If the box is not contained in the configuration region.
    """
    region = _box_region(tuple(box.lo), tuple(box.hi))
    if (config.region.lookup(region.coords) < 0).any():
        raise GeometryError(f"Box {box.lo}-{box.hi} exceeds the configuration region")
    return label_clusters(PercConfig(region, restrict(config, region), config.p))


def _crossing(labeling: ClusterLabeling, box: Box, axes: Sequence[int]) -> np.ndarray:
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    axes = list(axes)
    touches = (labeling.mins[:, axes] == lo[axes]) & (labeling.maxs[:, axes] == hi[axes])
    return np.flatnonzero(touches.all(axis=1))


def crossing_clusters(config: PercConfig, box: Box) -> Tuple[ClusterLabeling, np.ndarray]:
    """
    Labels of the clusters of the box that join the two opposite faces of the box in every axis
    direction.
    """
    labeling = label_box(config, box)
    return labeling, _crossing(labeling, box, range(box.d))


def has_crossing_cluster(config: PercConfig, box: Box) -> bool:
    """
    Whether a single open cluster of the box joins the two opposite faces of the box for each of
    the ``d`` axes. Faces are the vertices whose coordinate equals the box minimum or maximum.
    """
    return len(crossing_clusters(config, box)[1]) > 0


def single_axis_crossing(config: PercConfig, box: Box, axis: int) -> bool:
    """
    Diagnostic variant of :py:func:`has_crossing_cluster` asking for a crossing along one axis
    only. Not used by the atypical-event detectors.
    """
    if not 0 <= axis < box.d:
        raise ParameterError(f"Axis must be in [0, {box.d}), got {axis}")
    return len(_crossing(label_box(config, box), box, [axis])) > 0


def event_T(config: PercConfig, box: Box, m: int) -> bool:
    """
    The event that the box has a crossing cluster and contains some other open cluster of diameter
    at least ``m``.

    :param config: The configuration.

    :param box: The box, of side ``N`` vertices.

    :param m: The diameter threshold, ``0 < m <= N``.

    :raises ParameterError: If ``m`` is out of range.
    """
    if not 0 < m <= box.side:
        raise ParameterError(f"Diameter threshold must be in (0, {box.side}], got {m}")
    labeling, crossing = crossing_clusters(config, box)
    if not len(crossing):
        return False
    large = set(np.flatnonzero(labeling.diameters() >= m).tolist())
    return any(large - {c} for c in crossing.tolist())


class AtypicalFlags(NamedTuple):
    disjoint: bool
    blocked: bool

    @property
    def atypical(self) -> bool:
        return self.disjoint or self.blocked


def atypical_flags(config: PercConfig, grid: BoxGrid, u: Sequence[int]) -> AtypicalFlags:
    """
    Evaluates both properties of the enlarged box of ``u`` from a single labeling. A spanning
    cluster is an open cluster of the enlarged box with vertices both in ``B_t(u)`` and on the
    boundary of the enlarged box.

    - disjoint: at least two distinct spanning clusters.
    - blocked: some spanning cluster has no vertex in one of the ``3^d`` sub-cubes.

    :raises GeometryError: If the enlarged box exceeds the configuration region.
    """
    outer, inner = grid.enlarged(u), grid.box(u)
    labeling = label_box(config, outer)
    coords = labeling.region.coords
    lo, hi = np.asarray(outer.lo), np.asarray(outer.hi)

    in_box = np.all((coords >= inner.lo) & (coords <= inner.hi), axis=1)
    on_boundary = np.any((coords == lo) | (coords == hi), axis=1)
    spanning = np.intersect1d(labeling.labels[in_box], labeling.labels[on_boundary])
    if not len(spanning):
        return AtypicalFlags(False, False)

    cell = (coords - lo) // grid.t
    cube = cell @ (3 ** np.arange(grid.d - 1, -1, -1))
    hit = np.isin(labeling.labels, spanning)
    pairs = np.unique(np.stack([labeling.labels[hit], cube[hit]], axis=1), axis=0)
    hits = np.bincount(np.searchsorted(spanning, pairs[:, 0]), minlength=len(spanning))
    return AtypicalFlags(len(spanning) >= 2, bool((hits < 3 ** grid.d).any()))


def has_disjoint_property(config: PercConfig, grid: BoxGrid, u: Sequence[int]) -> bool:
    return atypical_flags(config, grid, u).disjoint


def has_blocked_property(config: PercConfig, grid: BoxGrid, u: Sequence[int]) -> bool:
    return atypical_flags(config, grid, u).blocked


def atypical_event(config: PercConfig, grid: BoxGrid, u: Sequence[int]) -> bool:
    """Whether the box of ``u`` has the disjoint or the blocked property."""
    return atypical_flags(config, grid, u).atypical


def theta_indicator(config: PercConfig, m: int) -> bool:
    """
    Finite-volume proxy of ``0 in C_p``: the origin is joined by open edges inside ``[-m, m]^d``
    to the boundary of that box.
    """
    if m < 1:
        raise ParameterError(f"Radius must be at least 1, got {m}")
    box = Box.centered(m, config.region.d)
    labeling = label_box(config, box)
    label = labeling.label_of((0,) * config.region.d)
    return bool((labeling.mins[label] == -m).any() or (labeling.maxs[label] == m).any())


class ThetaEstimate(NamedTuple):
    d: int
    p: float
    m: int
    replicas: int
    successes: int
    estimate: float
    stderr: float
    seed: int


def _theta_task(task: tuple) -> bool:
    p, m, d, seed = task
    field = sample_uniform_field(Region.centered_box(m, d), seed)
    return theta_indicator(open_at(field, p), m)


def estimate_theta(
    p: float, m: int, replicas: int, seed: int, d: int = 2, jobs: int = 1
) -> ThetaEstimate:
    """
    Estimates ``P(0 in C_p)`` by the frequency of :py:func:`theta_indicator` over independent
    replicas, with its binomial standard error. Replica ``r`` uses the seed
    ``derive_seed(seed, "theta", r)``.

    :param p: The percolation parameter in ``(0, 1]``.

    :param m: The box radius, ``None`` for the default of the dimension.

    :param replicas: The number of replicas.

    :param seed: The master seed.

    :param d: The dimension.

    :param jobs: Number of worker processes.

    :returns: The estimate.
    """
    m = default_theta_radius(d) if m is None else m
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"Percolation parameter must be in (0, 1], got {p}")
    if m < 1 or replicas < 1:
        raise ParameterError("Radius and replicas must be at least 1")

    tasks = [(p, m, d, derive_seed(seed, "theta", r)) for r in range(replicas)]
    successes = sum(map_tasks(_theta_task, tasks, jobs))
    logger.debug("theta(p=%s, m=%s): %d/%d", p, m, successes, replicas)
    return ThetaEstimate(
        d, p, m, replicas, successes, successes / replicas,
        binomial_stderr(successes, replicas), seed,
    )


class DecayRow(NamedTuple):
    d: int
    p: float
    t: int
    replicas: int
    successes: int
    frequency: float
    stderr: float
    seed: int
    disjoint: int
    blocked: int


class DecaySlope(NamedTuple):
    """Least-squares slope of ``log(frequency)`` against ``t`` for one parameter."""

    p: float
    slope: Optional[float]
    stderr: Optional[float]
    points: int


class DecayScan(NamedTuple):
    rows: List[DecayRow]
    slopes: List[DecaySlope]


def _scan_task(task: tuple) -> List[AtypicalFlags]:
    p_grid, t, d, seed = task
    grid = BoxGrid(t, d)
    u = (0,) * d
    outer = grid.enlarged(u)
    field = sample_uniform_field(_box_region(outer.lo, outer.hi), seed)
    return [atypical_flags(open_at(field, p), grid, u) for p in p_grid]


def decay_slope(p: float, t_grid: Sequence[int], frequencies: Sequence[float]) -> DecaySlope:
    """
    Fits ``log(frequency) = a + b t`` over the nonzero frequencies. The slope is absent with fewer
    than two usable points; its standard error needs at least three.
    """
    t = np.asarray(t_grid, dtype=float)
    freq = np.asarray(frequencies, dtype=float)
    usable = freq > 0
    points = int(usable.sum())
    if points < 2:
        return DecaySlope(p, None, None, points)
    fit = stats.linregress(t[usable], np.log(freq[usable]))
    return DecaySlope(p, float(fit.slope), float(fit.stderr) if points > 2 else None, points)


def scan_decay(
    p_grid: Sequence[float],
    t_grid: Sequence[int],
    replicas: int,
    seed: int,
    d: int = 2,
    jobs: int = 1,
) -> DecayScan:
    """
    Frequencies of the atypical event in the box of the origin over a ``(p, t)`` grid. For every
    scale and replica one coupling field is sampled and shared by the whole ``p`` grid; the seed of
    replica ``r`` at scale index ``i`` is ``derive_seed(seed, "scan", i, r)``. Each row also
    carries the counts of the disjoint and of the blocked property.

    :param p_grid: Sorted parameters in the supercritical range of the dimension.

    :param t_grid: Sorted box sizes.

    :param replicas: Replicas per scale.

    :param seed: The master seed.

    :param d: The dimension.

    :param jobs: Number of worker processes.

    :returns: The rows, ordered by ``p`` then ``t``, and one fitted slope per ``p``.
    """
    lower, _ = supercritical_range(d)
    if not p_grid or not is_sorted(p_grid) or any(not lower <= p <= 1.0 for p in p_grid):
        raise ParameterError(f"The p grid must be sorted within [{lower}, 1], got {list(p_grid)}")
    if not t_grid or not is_sorted(t_grid) or min(t_grid) < 1:
        raise ParameterError(f"The t grid must be sorted and positive, got {list(t_grid)}")
    if replicas < 1:
        raise ParameterError("Replicas must be at least 1")

    counts: Dict[Tuple[int, int], np.ndarray] = {}
    for i, t in enumerate(t_grid):
        tasks = [(tuple(p_grid), t, d, derive_seed(seed, "scan", i, r)) for r in range(replicas)]
        flags = np.asarray(map_tasks(_scan_task, tasks, jobs), dtype=bool)
        # flags has shape (replicas, len(p_grid), 2)
        for j in range(len(p_grid)):
            disjoint, blocked = flags[:, j, 0], flags[:, j, 1]
            counts[j, i] = np.array(
                [(disjoint | blocked).sum(), disjoint.sum(), blocked.sum()], dtype=int
            )
        logger.info("Scanned t=%d (%d replicas)", t, replicas)

    rows, slopes = [], []
    for j, p in enumerate(p_grid):
        frequencies = []
        for i, t in enumerate(t_grid):
            successes, disjoint, blocked = counts[j, i].tolist()
            frequency = successes / replicas
            frequencies.append(frequency)
            rows.append(
                DecayRow(
                    d, p, t, replicas, successes, frequency,
                    binomial_stderr(successes, replicas), seed, disjoint, blocked,
                )
            )
        slopes.append(decay_slope(p, t_grid, frequencies))
    return DecayScan(rows, slopes)
