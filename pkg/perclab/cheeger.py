"""
The anchored isoperimetric profile ``phi_n(p)``: the minimum of ``|open boundary of H| / |H|`` over
sets ``H`` containing the origin, connected through open edges and of size at most ``n^d``.
"""
import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import sparse

from .clusters import theta_indicator
from .config import supercritical_range
from .exceptions import ExperimentError, GeometryError, ParameterError
from .lattice import PercConfig, Region, Vertex, open_at, sample_uniform_field
from .utils import derive_seed
from .workers import map_tasks

logger = logging.getLogger(__name__)

MODES = ("exact", "heuristic")


class CandidateSet(NamedTuple):
    """A set ``H`` containing the origin with its open boundary count."""

    vertices: Tuple[Vertex, ...]
    size: int
    boundary: int

    @property
    def ratio(self) -> float:
        return self.boundary / self.size

    def to_record(self) -> dict:
        return {
            "size": self.size,
            "boundary": self.boundary,
            "vertices": [list(v) for v in self.vertices],
        }


class CheegerResult(NamedTuple):
    value: float
    witness: CandidateSet
    mode: str
    n: int
    cap: int

    #: The origin has no open edge, the value is 0 by convention
    degenerate: bool = False


def _neighbors(coords: np.ndarray) -> np.ndarray:
    """Lattice neighbors of every point, shape ``(k, 2d, d)``."""
    d = coords.shape[1]
    steps = np.concatenate([np.eye(d, dtype=np.int64), -np.eye(d, dtype=np.int64)])
    return coords[:, None, :] + steps[None, :, :]


def open_boundary(config: PercConfig, vertices: Sequence[Sequence[int]]) -> int:
    """
    Number of open edges with exactly one endpoint in ``H``.

    :param config: The configuration.

    :param vertices: The vertices of ``H``.

    :raises GeometryError: If ``H`` or one of its lattice neighbors is outside the region.
    """
    region = config.region
    coords = np.asarray(list(vertices), dtype=np.int64).reshape(-1, region.d)
    members = region.lookup(coords)
    nbrs = _neighbors(coords)
    nbr_idx = region.lookup(nbrs.reshape(-1, region.d))
    if (members < 0).any() or (nbr_idx < 0).any():
        raise GeometryError("The region does not contain the set and all its neighbors")

    in_h = np.zeros(region.num_vertices, dtype=bool)
    in_h[members] = True
    leaving = ~in_h[nbr_idx]
    pairs = np.stack([np.repeat(coords, 2 * region.d, axis=0), nbrs.reshape(-1, region.d)], axis=1)
    edges = region.edge_indices(pairs[leaving])
    return int(config.open_mask[edges].sum())


class _OpenGraph:
    """Adjacency of the open subgraph with the open degree of every vertex."""

    def __init__(self, config: PercConfig):
        region = config.region
        ends = region.endpoints[config.open_mask]
        nv = region.num_vertices
        both = np.concatenate([ends, ends[:, ::-1]])
        matrix = sparse.csr_matrix(
            (np.ones(len(both), dtype=np.int8), (both[:, 0], both[:, 1])), shape=(nv, nv)
        )
        self.indptr, self.indices = matrix.indptr, matrix.indices
        self.region = region

        # vertices with every lattice neighbor inside the region
        nbr = region.lookup(_neighbors(region.coords).reshape(-1, region.d))
        self.interior = (nbr.reshape(nv, -1) >= 0).all(axis=1)

    def neighbors(self, i: int) -> List[int]:
        return self.indices[self.indptr[i]:self.indptr[i + 1]].tolist()

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    def origin(self) -> int:
        origin = self.region.vertex_index((0,) * self.region.d)
        if not self.interior[origin]:
            raise GeometryError("The region does not contain the neighbors of the origin")
        return origin

    def candidate(self, members: Sequence[int], boundary: int) -> CandidateSet:
        vertices = tuple(sorted(self.region.vertex(i) for i in members))
        return CandidateSet(vertices, len(vertices), boundary)


def _less(a: Tuple[int, int], b: Tuple[int, int]) -> bool:
    """Compares ratios ``boundary / size`` exactly."""
    return a[0] * b[1] < b[0] * a[1]


def _cap(n: int, d: int, size_cap: Optional[int]) -> int:
    if n < 1:
        raise ParameterError(f"n must be at least 1, got {n}")
    cap = n ** d if size_cap is None else min(size_cap, n ** d)
    if cap < 1:
        raise ParameterError(f"The size cap must be at least 1, got {size_cap}")
    return cap


def _singleton(graph: _OpenGraph, origin: int, mode: str, n: int, cap: int) -> CheegerResult:
    return CheegerResult(0.0, graph.candidate([origin], 0), mode, n, cap, degenerate=True)


def exact_profile(config: PercConfig, n: int, size_cap: int = 12) -> CheegerResult:
    """
    Exhaustive minimization over every set containing the origin, connected in the open subgraph,
    of size at most ``min(size_cap, n^d)``. Sets are enumerated exactly once each by Redelmeier's
    method and the boundary count is updated incrementally.

    If the origin has no open edge the result is ``0`` with witness ``{0}`` and the
    :py:attr:`CheegerResult.degenerate` flag set.

    :param config: The configuration; its region must contain the box of radius ``cap`` around the
                   origin.

    :param n: The scale.

    :param size_cap: The enumeration cap.

    :returns: The exact minimum with a witness.

    :raises GeometryError: If the region is too small.
    """
    d = config.region.d
    cap = _cap(n, d, size_cap)
    graph = _OpenGraph(config)
    origin = graph.origin()
    if (config.region.lookup(_box_points(cap, d)) < 0).any():
        raise GeometryError(f"The region must contain the box of radius {cap}")
    if graph.degree(origin) == 0:
        logger.warning("The origin is isolated, phi is 0 by convention")
        return _singleton(graph, origin, "exact", n, cap)

    members: List[int] = []
    in_h: Set[int] = set()
    best = {"key": None, "members": None}

    def visit(untried: List[int], seen: Set[int], boundary: int):
        untried = list(untried)
        while untried:
            w = untried.pop()
            inside = sum(1 for x in graph.neighbors(w) if x in in_h)
            current = boundary + graph.degree(w) - 2 * inside
            members.append(w)
            in_h.add(w)
            key = (current, len(members))
            if best["key"] is None or _less(key, best["key"]):
                best["key"], best["members"] = key, list(members)
            if len(members) < cap:
                fresh = [x for x in graph.neighbors(w) if x not in seen]
                seen.update(fresh)
                visit(untried + fresh, seen, current)
                seen.difference_update(fresh)
            members.pop()
            in_h.discard(w)

    visit([origin], {origin}, 0)
    boundary, size = best["key"]
    witness = graph.candidate(best["members"], boundary)
    return CheegerResult(boundary / size, witness, "exact", n, cap)


def _box_points(radius: int, d: int) -> np.ndarray:
    axes = [np.arange(-radius, radius + 1)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def _connected_without(graph: _OpenGraph, members: Set[int], origin: int, removed: int) -> bool:
    seen, stack = {origin}, [origin]
    while stack:
        for x in graph.neighbors(stack.pop()):
            if x in members and x != removed and x not in seen:
                seen.add(x)
                stack.append(x)
    return len(seen) == len(members) - 1


def heuristic_profile(
    config: PercConfig,
    n: int,
    budget: int,
    seed: int,
    size_cap: int = None,
    t0: float = 1.0,
    cooling: float = 0.995,
    restarts: int = 1,
) -> CheegerResult:
    """
    Simulated annealing over sets containing the origin, connected in the open subgraph, of size at
    most ``min(size_cap, n^d)``. A move adds an open neighbor of the set or removes a vertex other
    than the origin whose removal keeps the set connected; moves are accepted with the Metropolis
    rule on the ratio at a temperature cooled geometrically. Every visited set is feasible, so the
    best ratio found is an upper bound of the exact minimum.

    :param config: The configuration.

    :param n: The scale.

    :param budget: Number of proposed moves per restart; ``0`` returns the singleton ``{0}``.

    :param seed: Seed of the chain.

    :param size_cap: Optional cap below ``n^d``.

    :param t0: The initial temperature.

    :param cooling: The geometric cooling factor in ``(0, 1)``.

    :param restarts: Number of independent chains started from ``{0}``.

    :returns: The best set found.
    """
    if budget < 0 or restarts < 1 or not 0.0 < cooling < 1.0 or t0 <= 0:
        raise ParameterError("Invalid annealing schedule")
    d = config.region.d
    cap = _cap(n, d, size_cap)
    graph = _OpenGraph(config)
    origin = graph.origin()
    if graph.degree(origin) == 0:
        logger.warning("The origin is isolated, phi is 0 by convention")
        return _singleton(graph, origin, "heuristic", n, cap)

    rng = np.random.default_rng(seed)
    best_key, best_members = (graph.degree(origin), 1), [origin]

    for _ in range(restarts if budget else 0):
        members, boundary, temperature = {origin}, graph.degree(origin), t0
        for _ in range(budget):
            additions = []
            if len(members) < cap:
                additions = sorted(
                    {x for m in members for x in graph.neighbors(m) if x not in members}
                )
                additions = [x for x in additions if graph.interior[x]]
            removals = [m for m in sorted(members) if m != origin]

            if not additions and not removals:
                break
            grow = bool(additions) and (not removals or rng.random() < 0.5)
            w = int(rng.choice(additions if grow else removals))
            if not grow and not _connected_without(graph, members, origin, w):
                temperature *= cooling
                continue

            inside = sum(1 for x in graph.neighbors(w) if x in members and x != w)
            if grow:
                key = (boundary + graph.degree(w) - 2 * inside, len(members) + 1)
            else:
                key = (boundary - graph.degree(w) + 2 * inside, len(members) - 1)

            delta = key[0] / key[1] - boundary / len(members)
            if delta <= 0 or rng.random() < math.exp(-delta / temperature):
                if grow:
                    members.add(w)
                else:
                    members.discard(w)
                boundary = key[0]
                if _less(key, best_key):
                    best_key, best_members = key, sorted(members)
            temperature *= cooling

    witness = graph.candidate(best_members, best_key[0])
    return CheegerResult(best_key[0] / best_key[1], witness, "heuristic", n, cap)


def validate_candidate(config: PercConfig, candidate: CandidateSet, cap: int) -> bool:
    """
    Checks a witness independently of the search: it contains the origin, its size is at most
    ``cap``, it is connected through open edges inside the set and its boundary count is right.
    """
    region = config.region
    if (0,) * region.d not in candidate.vertices or not 0 < candidate.size <= cap:
        return False
    members = set(candidate.vertices)
    open_edges = region.coords[region.endpoints[config.open_mask]]
    adjacency: Dict[Vertex, List[Vertex]] = {}
    for a, b in open_edges.tolist():
        a, b = tuple(a), tuple(b)
        if a in members and b in members:
            adjacency.setdefault(a, []).append(b)
            adjacency.setdefault(b, []).append(a)
    seen, stack = {(0,) * region.d}, [(0,) * region.d]
    while stack:
        for x in adjacency.get(stack.pop(), []):
            if x not in seen:
                seen.add(x)
                stack.append(x)
    if len(seen) != len(members):
        return False
    return open_boundary(config, candidate.vertices) == candidate.boundary


class CheegerRow(NamedTuple):
    d: int
    p: float
    n: int
    replica: int
    mode: str
    phi: Optional[float]
    size: Optional[int]
    boundary: Optional[int]
    passed: bool


class CheegerSummary(NamedTuple):
    d: int
    p: float
    n: int
    passed: int
    replicas: int
    mean_n_phi: float
    stderr: float
    prediction: Optional[float]


class CheegerTable(NamedTuple):
    rows: List[CheegerRow]
    summary: List[CheegerSummary]
    witnesses: List[dict]


def _profile_task(task: tuple) -> Tuple[bool, List[Optional[CheegerResult]]]:
    p, n_grid, d, radius, m, mode, size_cap, schedule, seed, anneal_seeds = task
    config = open_at(sample_uniform_field(Region.centered_box(radius, d), seed), p)
    if not theta_indicator(config, m):
        return False, [None] * len(n_grid)
    results = []
    for n, anneal_seed in zip(n_grid, anneal_seeds):
        if mode == "exact":
            result = exact_profile(config, n, size_cap)
        else:
            result = heuristic_profile(config, n, seed=anneal_seed, size_cap=size_cap, **schedule)
        if not validate_candidate(config, result.witness, result.cap):
            raise ExperimentError(f"Witness at n={n} failed validation")
        results.append(result)
    return True, results


def profile_experiment(
    p: float,
    n_grid: Sequence[int],
    replicas: int,
    seed: int,
    d: int = 2,
    m: int = None,
    mode: str = "exact",
    size_cap: int = 12,
    schedule: dict = None,
    prediction: float = None,
    jobs: int = 1,
) -> CheegerTable:
    """
    Estimates ``n phi_n(p)`` per ``n`` over replicas conditioned on the origin being joined to the
    boundary of ``[-m, m]^d``, next to a predicted limit.

    :param p: The parameter, in the validated range of the dimension.

    :param n_grid: Sorted scales.

    :param replicas: Number of configurations.

    :param seed: The master seed.

    :param d: The dimension.

    :param m: Conditioning radius, the largest ``n`` by default.

    :param mode: ``"exact"`` or ``"heuristic"``.

    :param size_cap: Cap on ``|H|`` below ``n^d``.

    :param schedule: Annealing keyword arguments ``budget``, ``t0``, ``cooling``, ``restarts``.

    :param prediction: The predicted limit, attached to every summary row.

    :param jobs: Number of worker processes.

    :returns: Per-replica rows, per-``n`` summary and witnesses.

    :raises ExperimentError: If no replica passes the conditioning.
    """
    lower, _ = supercritical_range(d)
    if not lower <= p <= 1.0:
        raise ParameterError(f"p={p} is outside the validated range [{lower}, 1] for d={d}")
    if mode not in MODES:
        raise ParameterError(f"Unknown mode '{mode}'")
    if not n_grid or list(n_grid) != sorted(n_grid) or replicas < 1:
        raise ParameterError("Need a sorted nonempty n grid and at least one replica")

    m = max(n_grid) if m is None else m
    schedule = dict(schedule or {"budget": 2000})
    cap = max(min(size_cap, n ** d) for n in n_grid)
    radius = max(m, cap) + 1

    tasks = [
        (
            p, tuple(n_grid), d, radius, m, mode, size_cap, schedule,
            derive_seed(seed, "cheeger", r),
            tuple(derive_seed(seed, "anneal", i, r) for i in range(len(n_grid))),
        )
        for r in range(replicas)
    ]
    outcomes = map_tasks(_profile_task, tasks, jobs)

    rows, witnesses = [], []
    values: Dict[int, List[float]] = {n: [] for n in n_grid}
    for r, (passed, results) in enumerate(outcomes):
        for n, result in zip(n_grid, results):
            if result is None:
                rows.append(CheegerRow(d, p, n, r, mode, None, None, None, False))
                continue
            rows.append(
                CheegerRow(
                    d, p, n, r, mode, result.value, result.witness.size,
                    result.witness.boundary, True,
                )
            )
            witnesses.append({"n": n, "replica": r, **result.witness.to_record()})
            values[n].append(n * result.value)

    passed = sum(1 for ok, _ in outcomes if ok)
    if not passed:
        raise ExperimentError(f"No replica passed the conditioning on radius {m}")
    logger.info("%d/%d replicas passed the conditioning", passed, replicas)

    summary = []
    for n in n_grid:
        sample = np.asarray(values[n])
        stderr = float(sample.std(ddof=1) / math.sqrt(len(sample))) if len(sample) > 1 else math.nan
        summary.append(
            CheegerSummary(d, p, n, passed, replicas, float(sample.mean()), stderr, prediction)
        )
    return CheegerTable(rows, summary, witnesses)
