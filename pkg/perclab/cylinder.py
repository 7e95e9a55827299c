"""
Discretized cylinders ``B(n, v) = cyl(n S(v), n)``: the square ``n S(v)`` of side ``2n`` normal to
the unit vector ``v``, thickened by ``n`` on both sides.
"""
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .exceptions import GeometryError, ParameterError
from .lattice import Region

#: Tolerance of the continuous membership predicates
TIE_TOL = 1e-9

#: Tolerance on the norm of the direction
UNIT_TOL = 1e-12


def orthonormal_frame(v: Sequence[float]) -> np.ndarray:
    """
    Completes the unit vector ``v`` to an orthonormal basis. The standard basis vectors, except
    the one of the largest component of ``v`` in absolute value, are orthonormalized against
    ``v`` in axis order; each resulting vector is then signed so that its first nonzero component
    is positive. The frame of ``-v`` is the frame of ``v``.

    :param v: The unit vector.

    :returns: The ``d - 1`` frame vectors as rows.
    """
    v = np.asarray(v, dtype=float)
    d = len(v)
    pivot = int(np.argmax(np.abs(v)))
    basis = [v]
    for k in range(d):
        if k == pivot:
            continue
        w = np.eye(d)[k]
        for b in basis:
            w = w - (w @ b) * b
        w = w / np.linalg.norm(w)
        first = w[np.abs(w) > UNIT_TOL][0]
        basis.append(w if first > 0 else -w)
    return np.array(basis[1:])


@dataclass(frozen=True, eq=False)
class CylinderInstance:
    """
    The lattice points of ``B(n, v)`` with their induced edges and the two discrete boundary sets
    ``C'_1`` and ``C'_2``: the lattice points of the upper (resp. lower) open half-cylinder having
    a lattice neighbor outside the cylinder. Both sets therefore include the lateral boundary
    points of their half, not only the top and bottom layers.
    """

    n: int
    v: Tuple[float, ...]

    #: Frame vectors completing ``v``, shape ``(d - 1, d)``
    frame: np.ndarray

    #: The lattice points of the cylinder
    region: Region

    #: Vertex indices of ``C'_1``
    c1: np.ndarray

    #: Vertex indices of ``C'_2``
    c2: np.ndarray

    @property
    def d(self) -> int:
        return self.region.d

    @property
    def num_edges(self) -> int:
        return self.region.num_edges

    def heights(self) -> np.ndarray:
        """The coordinate ``x . v`` of every vertex."""
        return self.region.coords @ np.asarray(self.v)

    def to_record(self) -> dict:
        return {"n": self.n, "v": list(self.v), "c1": self.c1.tolist(), "c2": self.c2.tolist()}


def inside_cylinder(
    points: np.ndarray, n: int, v: Sequence[float], frame: np.ndarray
) -> np.ndarray:
    """
    The continuous membership predicate ``|x . v| <= n`` and ``|x . f| <= n`` for every frame
    vector ``f``, with ties resolved inside up to :py:data:`TIE_TOL`.
    """
    points = np.asarray(points, dtype=float)
    height = np.abs(points @ np.asarray(v)) <= n + TIE_TOL
    lateral = np.all(np.abs(points @ frame.T) <= n + TIE_TOL, axis=1)
    return height & lateral


def build_cylinder(n: int, v: Sequence[float]) -> CylinderInstance:
    """
    Builds ``B(n, v)``.

    :param n: The scale, at least 2.

    :param v: A unit vector in ``R^d``, ``d >= 2``.

    :returns: The instance, deterministic for given ``(n, v)``.

    :raises ParameterError: If ``n < 2`` or ``v`` is not a unit vector.

    :raises GeometryError: If ``C'_1`` or ``C'_2`` is empty.
    """
    v = np.asarray(v, dtype=float)
    if n < 2:
        raise ParameterError(f"The cylinder scale must be at least 2, got {n}")
    if v.ndim != 1 or len(v) < 2 or abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ParameterError(f"Direction must be a unit vector of dimension >= 2, got {v.tolist()}")

    d = len(v)
    frame = orthonormal_frame(v)
    radius = math.ceil(n * math.sqrt(d))
    axes = [np.arange(-radius, radius + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    region = Region(grid[inside_cylinder(grid, n, v, frame)])

    outside = np.zeros(region.num_vertices, dtype=bool)
    for k in range(d):
        for step in (-1, 1):
            shifted = region.coords.copy()
            shifted[:, k] += step
            outside |= region.lookup(shifted) < 0

    heights = region.coords @ v
    c1 = np.flatnonzero(outside & (heights > TIE_TOL))
    c2 = np.flatnonzero(outside & (heights < -TIE_TOL))
    if not len(c1) or not len(c2):
        raise GeometryError(f"Cylinder n={n}, v={v.tolist()} has an empty boundary set")

    return CylinderInstance(n, tuple(v.tolist()), frame, region, c1, c2)


def trivial_cut_constant(d: int) -> int:
    """Engineering bound ``c_d = 2d 3^(d-1)`` on ``|trivial_cut| / n^(d-1)``."""
    return 2 * d * 3 ** (d - 1)


def trivial_cut(instance: CylinderInstance) -> np.ndarray:
    """
    The cutset made of every edge of the cylinder with an endpoint in ``C'_1``.

    :returns: Sorted canonical edge indices.
    """
    in_c1 = np.zeros(instance.region.num_vertices, dtype=bool)
    in_c1[instance.c1] = True
    ends = instance.region.endpoints
    return np.flatnonzero(in_c1[ends[:, 0]] | in_c1[ends[:, 1]])


def verify_cutset(instance: CylinderInstance, edges: Iterable[int]) -> bool:
    """
    Whether removing the given edges leaves no path inside the cylinder from ``C'_1`` to ``C'_2``.

    :param instance: The cylinder.

    :param edges: Canonical edge indices of the cylinder region.

    :raises ParameterError: If some index is not an edge of the cylinder.
    """
    edges = np.asarray(list(edges), dtype=np.int64)
    region = instance.region
    if len(edges) and (edges.min() < 0 or edges.max() >= region.num_edges):
        raise ParameterError("Edge indices must refer to the cylinder edges")

    kept = np.ones(region.num_edges, dtype=bool)
    kept[edges] = False
    ends = region.endpoints[kept]
    nv = region.num_vertices
    graph = sparse.coo_matrix(
        (np.ones(len(ends), dtype=np.int8), (ends[:, 0], ends[:, 1])), shape=(nv, nv)
    )
    _, labels = connected_components(graph, directed=False)
    return not np.isin(labels[instance.c1], labels[instance.c2]).any()
