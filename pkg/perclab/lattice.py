"""
Finite regions of the hypercubic lattice, their canonical edge order, seeded per-edge randomness
and the two couplings from which parameter-indexed bond percolation configurations derive.
"""
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import GeometryError, ParameterError
from .utils import SEED_MASK

Vertex = Tuple[int, ...]


class Edge(NamedTuple):
    """A nearest-neighbor edge, endpoints in lexicographic order."""

    a: Vertex
    b: Vertex


class Region:
    """
    A finite set of lattice vertices together with its induced nearest-neighbor edges.

    Vertices are stored in lexicographic order. Edges are stored in the canonical order, which is
    lexicographic on ``(min endpoint coords, axis direction)``; an edge index always refers to this
    order, so it is reproducible across runs and machines.

    :param vertices: The vertex coordinates, duplicates are dropped.

    :param box: The ``(lo, hi)`` corners if the region is an axis-aligned box.
    """

    def __init__(self, vertices: Iterable[Sequence[int]], box: Tuple[Vertex, Vertex] = None):
        coords = np.asarray(list(vertices) if not isinstance(vertices, np.ndarray) else vertices)
        if coords.size == 0:
            raise GeometryError("A region needs at least one vertex")
        coords = np.unique(coords.astype(np.int64).reshape(len(coords), -1), axis=0)
        if coords.shape[1] < 2:
            raise GeometryError("The lattice dimension must be at least 2")

        #: Vertex coordinates, shape ``(V, d)``, lexicographically sorted
        self.coords = coords
        self.coords.setflags(write=False)

        #: Corners of the region if it is an axis-aligned box
        self.box = box

        self._lo = coords.min(axis=0)
        self._span = coords.max(axis=0) - self._lo + 3
        self._strides = np.cumprod(self._span[::-1])[::-1][1:].tolist() + [1]
        self._keys = self._encode(coords)

        src, dst, axis = [], [], []
        for k in range(self.d):
            shifted = coords.copy()
            shifted[:, k] += 1
            j = self.lookup(shifted)
            found = j >= 0
            src.append(np.flatnonzero(found))
            dst.append(j[found])
            axis.append(np.full(found.sum(), k))

        src, dst, axis = np.concatenate(src), np.concatenate(dst), np.concatenate(axis)
        order = np.lexsort((axis, src))

        #: Endpoint vertex indices of every edge, shape ``(E, 2)``, canonical order
        self.endpoints = np.stack([src[order], dst[order]], axis=1).astype(np.int64)
        self.endpoints.setflags(write=False)

        #: Axis direction of every edge
        self.axes = axis[order].astype(np.int64)
        self.axes.setflags(write=False)

        self._edge_keys = self.endpoints[:, 0] * self.d + self.axes

    @classmethod
    def from_box(cls, lo: Sequence[int], hi: Sequence[int]) -> "Region":
        """
        Builds the box region ``[lo_1, hi_1] x ... x [lo_d, hi_d]``.
        """
        lo, hi = tuple(int(x) for x in lo), tuple(int(x) for x in hi)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise GeometryError(f"Invalid box corners {lo}, {hi}")
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        return cls(grid, box=(lo, hi))

    @classmethod
    def centered_box(cls, radius: int, d: int) -> "Region":
        """The box ``[-radius, radius]^d``."""
        return cls.from_box((-radius,) * d, (radius,) * d)

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    @property
    def num_vertices(self) -> int:
        return len(self.coords)

    @property
    def num_edges(self) -> int:
        return len(self.endpoints)

    @property
    def bounds(self) -> Tuple[Vertex, Vertex]:
        """The corners of the bounding box of the region."""
        return tuple(self.coords.min(axis=0).tolist()), tuple(self.coords.max(axis=0).tolist())

    def _encode(self, coords: np.ndarray) -> np.ndarray:
        shifted = coords - self._lo + 1
        return shifted @ np.asarray(self._strides, dtype=np.int64)

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """
        Vectorized vertex lookup.

        :param coords: Coordinates, shape ``(k, d)``.

        :returns: The vertex indices, ``-1`` for points outside the region.
        """
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        inside = np.all((coords >= self._lo - 1) & (coords < self._lo + self._span - 1), axis=1)
        keys = np.where(inside[:, None], coords, self._lo).astype(np.int64)
        keys = self._encode(keys)
        pos = np.searchsorted(self._keys, keys)
        pos = np.clip(pos, 0, len(self._keys) - 1)
        found = inside & (self._keys[pos] == keys)
        return np.where(found, pos, -1)

    def contains(self, vertex: Sequence[int]) -> bool:
        """Membership predicate."""
        return bool(self.lookup(np.asarray([vertex]))[0] >= 0)

    def vertex_index(self, vertex: Sequence[int]) -> int:
        i = int(self.lookup(np.asarray([vertex]))[0])
        if i < 0:
            raise GeometryError(f"Vertex {tuple(vertex)} is not in the region")
        return i

    def vertex(self, i: int) -> Vertex:
        return tuple(self.coords[i].tolist())

    def edge(self, i: int) -> Edge:
        a, b = self.endpoints[i]
        return Edge(self.vertex(a), self.vertex(b))

    def edge_indices(self, edges: np.ndarray) -> np.ndarray:
        """
        Canonical indices of edges given by the coordinates of both endpoints.

        :param edges: Array of shape ``(k, 2, d)``.

        :returns: Edge indices, ``-1`` for edges that are not in the region.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2, self.d)
        lo = np.minimum(edges[:, 0], edges[:, 1])
        diff = np.abs(edges[:, 0] - edges[:, 1])
        valid = diff.sum(axis=1) == 1
        axis = diff.argmax(axis=1)
        src = self.lookup(lo)
        dst = self.lookup(lo + diff)
        keys = src * self.d + axis
        pos = np.clip(np.searchsorted(self._edge_keys, keys), 0, max(self.num_edges - 1, 0))
        if self.num_edges == 0:
            return np.full(len(edges), -1)
        found = valid & (src >= 0) & (dst >= 0) & (self._edge_keys[pos] == keys)
        return np.where(found, pos, -1)

    def edge_index(self, a: Sequence[int], b: Sequence[int]) -> int:
        i = int(self.edge_indices(np.asarray([[a, b]]))[0])
        if i < 0:
            raise GeometryError(f"Edge {tuple(a)}-{tuple(b)} is not in the region")
        return i

    def same_as(self, other: "Region") -> bool:
        return self is other or (
            self.coords.shape == other.coords.shape and np.array_equal(self.coords, other.coords)
        )

    def to_record(self) -> dict:
        lo, hi = self.box if self.box else self.bounds
        return {"kind": "box" if self.box else "vertices", "lo": list(lo), "hi": list(hi)}


@dataclass(frozen=True, eq=False)
class CouplingField:
    """
    Per-edge randomness of a region: one uniform value in ``[0, 1)`` per edge and, optionally, one
    auxiliary Bernoulli bit per edge with parameter :py:attr:`aux_param`. Every parameter-indexed
    configuration of an experiment derives from a field.
    """

    region: Region
    u: np.ndarray
    seed: int
    aux: Optional[np.ndarray] = None
    aux_param: Optional[float] = None


@dataclass(frozen=True, eq=False)
class PercConfig:
    """
    A bond percolation configuration of a region at parameter :py:attr:`p`. The open edges are
    stored as a boolean mask over the canonical edge order.
    """

    region: Region
    open_mask: np.ndarray
    p: float

    @property
    def open(self) -> frozenset:
        """The canonical indices of the open edges."""
        return frozenset(np.flatnonzero(self.open_mask).tolist())

    def open_edges(self) -> list:
        return [self.region.edge(i) for i in np.flatnonzero(self.open_mask)]

    def is_open(self, a: Sequence[int], b: Sequence[int]) -> bool:
        return bool(self.open_mask[self.region.edge_index(a, b)])

    def to_record(self, seed: int) -> dict:
        """NDJSON record of this configuration."""
        return {
            "d": self.region.d,
            "region": self.region.to_record(),
            "seed": int(seed),
            "p": float(self.p),
            "open": np.flatnonzero(self.open_mask).tolist(),
        }


class CoupledConfigs(NamedTuple):
    """Two nested configurations ``low`` (at p) and ``high`` (at q)."""

    low: PercConfig
    high: PercConfig


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _generator(seed: int, stream: int) -> np.random.Generator:
    # Philox is counter based: the k-th draw only depends on (key, k)
    key = (int(seed) & SEED_MASK) | (stream << 64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_uniform_field(region: Region, seed: int, aux_param: float = None) -> CouplingField:
    """
    Samples one uniform value per edge of the region. The value of the edge with canonical index
    ``i`` is the ``i``-th draw of a Philox stream keyed by ``seed``, so the field only depends on
    ``(region, seed)``.

    :param region: The region.

    :param seed: A 64-bit seed.

    :param aux_param: If given, also sample an independent Bernoulli bit per edge with this
                      parameter, from a second stream of the same key.

    :returns: The coupling field.
    """
    u = _generator(seed, 0).random(region.num_edges)
    aux = None
    if aux_param is not None:
        if not 0.0 <= aux_param <= 1.0:
            raise ParameterError(f"Auxiliary parameter must be in [0, 1], got {aux_param}")
        aux = _readonly(_generator(seed, 1).random(region.num_edges) < aux_param)
    return CouplingField(region, _readonly(u), int(seed), aux, aux_param)


def _check_p(p: float):
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"Percolation parameter must be in (0, 1], got {p}")


def open_at(field: CouplingField, p: float) -> PercConfig:
    """
    The monotone coupling: an edge is open at ``p`` iff its uniform value is below ``p``. Open
    sets are therefore nested in ``p`` for a fixed field.

    :param field: The coupling field.

    :param p: The percolation parameter in ``(0, 1]``.

    :returns: The configuration at ``p``.
    """
    _check_p(p)
    return PercConfig(field.region, _readonly(field.u < p), float(p))


def two_stage_param(p: float, q: float) -> float:
    """
    Parameter of the auxiliary Bernoulli variable so that ``p + (1 - p) r = q``.
    """
    if not 0.0 < p <= q:
        raise ParameterError(f"Two-stage coupling needs 0 < p <= q, got p={p}, q={q}")
    if q >= 1.0:
        raise ParameterError(f"Two-stage coupling needs q < 1, got q={q}")
    return (q - p) / (1.0 - p)


def two_stage_field(region: Region, p: float, q: float, seed: int) -> CouplingField:
    """Samples the field of a two-stage coupling between ``p`` and ``q``."""
    return sample_uniform_field(region, seed, aux_param=two_stage_param(p, q))


def two_stage_configs(field: CouplingField, p: float) -> CoupledConfigs:
    """
    Derives the nested pair from a two-stage field: an edge is p-open iff ``U = 1`` (uniform value
    below ``p``) and q-open iff ``U = 1`` or ``V = 1`` (auxiliary bit).
    """
    if field.aux is None:
        raise ParameterError("The field has no auxiliary bits")
    _check_p(p)
    low = field.u < p
    high = low | field.aux
    q = p + (1.0 - p) * field.aux_param
    return CoupledConfigs(
        PercConfig(field.region, _readonly(low), float(p)),
        PercConfig(field.region, _readonly(high), float(q)),
    )


def sample_two_stage(region: Region, p: float, q: float, seed: int) -> CoupledConfigs:
    """
    Samples a two-stage coupled pair of configurations: per edge, ``U ~ Bernoulli(p)`` and
    ``V ~ Bernoulli((q - p) / (1 - p))`` independent; the marginal of the q-configuration is
    ``Bernoulli(q)`` and the p-open set is contained in the q-open set.

    :param region: The region.

    :param p: The lower parameter.

    :param q: The upper parameter, ``p <= q < 1``.

    :param seed: A 64-bit seed.

    :returns: The pair ``(low, high)``.
    """
    return two_stage_configs(two_stage_field(region, p, q, seed), p)


def restrict(config: PercConfig, region: Region) -> np.ndarray:
    """
    Open mask of ``config`` over the canonical edges of another region.

    :raises GeometryError: If some edge of ``region`` is not an edge of the configuration's region.
    """
    if config.region.same_as(region):
        return config.open_mask
    if region.num_edges == 0:
        return np.zeros(0, dtype=bool)
    edges = region.coords[region.endpoints]
    idx = config.region.edge_indices(edges)
    if (idx < 0).any():
        raise GeometryError("The configuration does not cover every edge of the region")
    return config.open_mask[idx]
