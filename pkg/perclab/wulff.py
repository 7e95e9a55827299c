"""
Convex geometry of Wulff crystals: norms given analytically or by sampled tables, the Wulff
polytope ``{x : x . v <= tau(v)}`` over a finite direction set, surface energy, dual norms,
volume scaling and Hausdorff distances between crystals.

Geometry is available in dimensions 2 and 3.
"""
import logging
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .config import TOLERANCES
from .exceptions import CapabilityError, DomainError, GeometryError, ParameterError
from .flow_constant import NormTable

logger = logging.getLogger(__name__)

BUILTIN_NORMS = ("l1", "l2", "linf", "weighted")


def _unit_rows(directions: Sequence[Sequence[float]]) -> np.ndarray:
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    lengths = np.linalg.norm(directions, axis=1)
    if (lengths == 0).any():
        raise DomainError("Directions must be nonzero vectors")
    return directions / lengths[:, None]


def sphere_directions(count: int, d: int) -> np.ndarray:
    """
    Deterministic, nearly uniform unit directions: equally spaced angles in the plane, a
    Fibonacci lattice on the sphere.
    """
    if d == 2:
        angles = 2.0 * math.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if d == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        r = np.sqrt(1.0 - z ** 2)
        phi = math.pi * (3.0 - math.sqrt(5.0)) * k
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise CapabilityError(f"Geometry is only available for d=2 and d=3, got d={d}")


class NormSpec:
    """
    A norm on ``R^d``, either analytic (``l1``, ``l2``, ``linf``, ``weighted``) or sampled on unit
    directions. Sampled norms are symmetrized, ``tau(v)`` and ``tau(-v)`` being replaced by their
    average, and extended by homogeneity from the nearest sampled direction.

    Use the constructors :py:meth:`builtin` and :py:meth:`from_samples`.
    """

    def __init__(
        self,
        kind: str,
        d: int,
        scale: float = 1.0,
        weights: Sequence[float] = None,
        directions: np.ndarray = None,
        values: np.ndarray = None,
    ):
        #: ``l1``, ``l2``, ``linf``, ``weighted`` or ``table``
        self.kind = kind

        #: The dimension
        self.d = d

        #: Positive multiplier of analytic norms
        self.scale = scale

        #: Axis weights of the ``weighted`` norm
        self.weights = None if weights is None else np.asarray(weights, dtype=float)

        #: Sampled unit directions of a table norm
        self.directions = directions

        #: Symmetrized values at :py:attr:`directions`
        self.values = values

    @classmethod
    def builtin(cls, kind: str, d: int, scale: float = 1.0, weights: Sequence[float] = None):
        if kind not in BUILTIN_NORMS:
            raise ParameterError(f"Unknown norm '{kind}'")
        if scale <= 0:
            raise ParameterError(f"Norm scale must be positive, got {scale}")
        if kind == "weighted":
            if weights is None or len(weights) != d or min(weights) <= 0:
                raise ParameterError("The weighted norm needs d positive weights")
        return cls(kind, d, scale=scale, weights=weights)

    @classmethod
    def from_samples(cls, directions: Sequence[Sequence[float]], values: Sequence[float]):
        """
        Builds a table norm from sampled values, symmetrized under negation.

        :raises DomainError: If some value is not strictly positive.
        """
        units = _unit_rows(directions)
        values = np.asarray(values, dtype=float)
        if len(values) != len(units) or not len(values):
            raise ParameterError("Need one value per direction")
        if not np.all(values > 0):
            raise DomainError("Norm values must be strictly positive")

        both = np.concatenate([units, -units])
        keys = np.round(both, 9) + 0.0
        unique, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        sums = np.bincount(inverse, weights=np.concatenate([values, values]))
        counts = np.bincount(inverse)
        return cls("table", units.shape[1], directions=_unit_rows(unique), values=sums / counts)

    @classmethod
    def from_norm_table(cls, table: NormTable, p: float) -> "NormSpec":
        return cls.from_samples(*table.values_at(p))

    @property
    def is_table(self) -> bool:
        return self.kind == "table"

    def scaled(self, factor: float) -> "NormSpec":
        if self.is_table:
            values = self.values * factor
            return NormSpec("table", self.d, directions=self.directions, values=values)
        return NormSpec(self.kind, self.d, self.scale * factor, self.weights)

    def _nearest(self, units: np.ndarray) -> np.ndarray:
        return np.argmax(units @ self.directions.T, axis=1)

    def __call__(self, x: Sequence[float]) -> np.ndarray:
        """
        Evaluates the norm at one vector or at the rows of an array.
        """
        x = np.asarray(x, dtype=float)
        points = np.atleast_2d(x)
        if self.kind == "l1":
            result = np.abs(points).sum(axis=1)
        elif self.kind == "l2":
            result = np.linalg.norm(points, axis=1)
        elif self.kind == "linf":
            result = np.abs(points).max(axis=1)
        elif self.kind == "weighted":
            result = np.abs(points) @ self.weights
        else:
            lengths = np.linalg.norm(points, axis=1)
            safe = np.where(lengths > 0, lengths, 1.0)
            result = lengths * self.values[self._nearest(points / safe[:, None])]
        result = result * self.scale
        return result if x.ndim == 2 else float(result[0])

    def resolution(self, x: Sequence[float]) -> float:
        """
        Angle in radians between ``x`` and the sampled direction used to evaluate it, zero for
        analytic norms.
        """
        if not self.is_table:
            return 0.0
        unit = _unit_rows([x])
        cosine = float(np.clip(unit @ self.directions[self._nearest(unit)][0], -1.0, 1.0))
        return math.acos(cosine)

    def max_resolution(self) -> float:
        """Largest angle between a sampled direction and its nearest other sampled direction."""
        if not self.is_table or len(self.directions) < 2:
            return 0.0
        cosines = self.directions @ self.directions.T
        np.fill_diagonal(cosines, -1.0)
        return float(np.arccos(np.clip(cosines.max(axis=1), -1.0, 1.0)).max())


class Facet(NamedTuple):
    normal: Tuple[float, ...]
    area: float
    vertex_ids: Tuple[int, ...]


def _simplex_volumes(points: np.ndarray) -> np.ndarray:
    """(d-1)-volumes of simplices of shape ``(k, d, d)`` embedded in ``R^d``."""
    edges = points[:, 1:, :] - points[:, :1, :]
    gram = edges @ np.transpose(edges, (0, 2, 1))
    dim = edges.shape[1]
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)) / math.factorial(dim)


class Polytope:
    """
    A bounded convex polytope containing the origin in its interior, kept both as halfspaces
    ``normal . x <= offset`` and as vertices, with facet normals and areas.

    :param normals: Unit normals, shape ``(m, d)``.

    :param offsets: Offsets, shape ``(m,)``.

    :param vertices: Vertices, shape ``(k, d)``.

    :param facets: The facets.

    :param simplices: Triangulation of the boundary into vertex index tuples, computed when absent.
    """

    def __init__(self, normals, offsets, vertices, facets: List[Facet], simplices=None):
        self.normals = np.asarray(normals, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.vertices = np.asarray(vertices, dtype=float)
        self.facets = list(facets)
        self._simplices = None if simplices is None else np.asarray(simplices, dtype=int)

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def simplices(self) -> np.ndarray:
        if self._simplices is None:
            self._simplices = ConvexHull(self.vertices).simplices
        return self._simplices

    @property
    def volume(self) -> float:
        return float(ConvexHull(self.vertices).volume)

    @property
    def surface_area(self) -> float:
        return float(sum(f.area for f in self.facets))

    def scaled(self, factor: float) -> "Polytope":
        area = factor ** (self.d - 1)
        facets = [Facet(f.normal, f.area * area, f.vertex_ids) for f in self.facets]
        return Polytope(
            self.normals, self.offsets * factor, self.vertices * factor, facets, self._simplices
        )

    def contains(self, points: np.ndarray, tol: float = TOLERANCES.geometry) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all(points @ self.normals.T <= self.offsets + tol, axis=1)

    def distance(self, point: Sequence[float], tol: float = TOLERANCES.geometry) -> float:
        """Euclidean distance from a point to the polytope, zero inside."""
        point = np.asarray(point, dtype=float)
        if self.contains(point, tol)[0]:
            return 0.0
        corners = self.vertices[self.simplices]
        if self.d == 2:
            return float(_segment_distances(point, corners[:, 0], corners[:, 1]).min())
        return float(_triangle_distances(point, corners[:, 0], corners[:, 1], corners[:, 2]).min())

    def to_json(self) -> dict:
        return {
            "halfspaces": [
                {"normal": n.tolist(), "offset": float(o)}
                for n, o in zip(self.normals, self.offsets)
            ],
            "vertices": self.vertices.tolist(),
            "facets": [
                {"normal": list(f.normal), "area": f.area, "vertexIds": list(f.vertex_ids)}
                for f in self.facets
            ],
        }

    @classmethod
    def from_json(cls, record: dict) -> "Polytope":
        halfspaces = record["halfspaces"]
        facets = [
            Facet(tuple(f["normal"]), float(f["area"]), tuple(f["vertexIds"]))
            for f in record["facets"]
        ]
        return cls(
            [h["normal"] for h in halfspaces],
            [h["offset"] for h in halfspaces],
            record["vertices"],
            facets,
        )


def _segment_distances(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    length = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", x - a, ab) / np.where(length > 0, length, 1.0)
    closest = a + np.clip(t, 0.0, 1.0)[:, None] * ab
    return np.linalg.norm(closest - x, axis=1)


def _triangle_distances(x, a, b, c) -> np.ndarray:
    normal = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", normal, normal)
    safe = np.where(nn > 0, nn, 1.0)
    t = np.einsum("ij,ij->i", x - a, normal) / safe
    proj = x - t[:, None] * normal

    def side(p, q):
        return np.einsum("ij,ij->i", np.cross(q - p, proj - p), normal) >= 0

    inside = (nn > 0) & side(a, b) & side(b, c) & side(c, a)
    edges = np.minimum.reduce(
        [_segment_distances(x, a, b), _segment_distances(x, b, c), _segment_distances(x, c, a)]
    )
    return np.where(inside, np.abs(t) * np.sqrt(safe), edges)


def _merge_facets(hull: ConvexHull, tol: float) -> List[Facet]:
    areas = _simplex_volumes(hull.points[hull.simplices])
    groups: List[list] = []
    for equation, simplex, area in zip(hull.equations, hull.simplices, areas):
        for group in groups:
            if np.allclose(group[0], equation, atol=1e-7):
                group[1].update(simplex.tolist())
                group[2] += area
                break
        else:
            groups.append([equation, set(simplex.tolist()), float(area)])

    index = {int(v): i for i, v in enumerate(hull.vertices)}
    d = hull.points.shape[1]
    return [
        Facet(tuple(eq[:d].tolist()), area, tuple(sorted(index[v] for v in ids)))
        for eq, ids, area in groups
    ]


def origin_inside_hull(directions: np.ndarray, tol: float = TOLERANCES.geometry) -> bool:
    """
    Whether the origin is strictly inside the convex hull of the directions, the condition for
    the intersection of the halfspaces ``x . v <= tau(v)`` to be bounded.
    """
    try:
        hull = ConvexHull(directions)
    except (QhullError, ValueError):
        return False
    return bool(np.all(hull.equations[:, -1] < -tol))


def wulff_polytope(
    norm: NormSpec, directions: Sequence[Sequence[float]], tol: float = TOLERANCES.geometry
) -> Polytope:
    """
    The Wulff polytope ``{x : x . v <= tau(v) for every v}`` over a finite set of directions.
    Vertices come from the halfspace intersection, facets from the convex hull of the vertices
    with coplanar pieces merged.

    :param norm: The norm ``tau``.

    :param directions: At least ``d + 1`` directions whose convex hull contains the origin in its
                       interior; they are normalized.

    :param tol: The geometry tolerance.

    :returns: The polytope; its halfspaces are the given constraints.

    :raises GeometryError: If the intersection is unbounded.

    :raises CapabilityError: Outside dimensions 2 and 3.
    """
    units = _unit_rows(directions)
    d = units.shape[1]
    if d not in (2, 3):
        raise CapabilityError(f"Geometry is only available for d=2 and d=3, got d={d}")
    if len(units) < d + 1 or not origin_inside_hull(units, tol):
        raise GeometryError("The directions do not bound the intersection of halfspaces")

    offsets = np.asarray(norm(units), dtype=float)
    halfspaces = np.hstack([units, -offsets[:, None]])
    try:
        points = HalfspaceIntersection(halfspaces, np.zeros(d)).intersections
        hull = ConvexHull(points)
    except QhullError as e:
        raise GeometryError(f"Halfspace intersection failed: {e}")

    vertices = hull.points[hull.vertices]
    index = {int(v): i for i, v in enumerate(hull.vertices)}
    simplices = np.vectorize(index.get)(hull.simplices)
    return Polytope(units, offsets, vertices, _merge_facets(hull, tol), simplices)


def dual_norm_eval(
    norm: NormSpec, x: Sequence[float], directions: Sequence[Sequence[float]]
) -> float:
    """
    Lower approximation of the dual norm ``sup{x . z : tau(z) <= 1}`` by the maximum of ``x . z``
    over ``z = v / tau(v)`` for the sampled directions ``v``. Exact for analytic norms when the
    directions contain a maximizer. It is also the gauge of the Wulff polytope over the same
    directions.

    :raises DomainError: If ``x`` is the zero vector.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DomainError("The dual norm is evaluated at a nonzero vector")
    units = _unit_rows(directions)
    z = units / np.asarray(norm(units))[:, None]
    return float((z @ x).max())


def support_function(polytope: Polytope, y: Sequence[float]) -> float:
    """``max over x in P of x . y``."""
    return float((polytope.vertices @ np.asarray(y, dtype=float)).max())


def surface_energy(polytope: Polytope, norm: NormSpec, tol: float = TOLERANCES.geometry) -> float:
    """
    The surface energy ``sum over facets of tau(normal) * area``. Facets of zero area are skipped
    with a warning.
    """
    energy = 0.0
    for facet in polytope.facets:
        if facet.area <= tol:
            logger.warning("Skipping degenerate facet with normal %s", facet.normal)
            continue
        energy += norm(facet.normal) * facet.area
    return float(energy)


def scale_to_volume(polytope: Polytope, target: float) -> Polytope:
    """
    Scales the polytope about the origin to the target volume.

    :raises ParameterError: If the target is not positive.
    """
    if target <= 0:
        raise ParameterError(f"Target volume must be positive, got {target}")
    return polytope.scaled((target / polytope.volume) ** (1.0 / polytope.d))


def hausdorff_distance(first: Polytope, second: Polytope) -> float:
    """
    Hausdorff distance between two convex polytopes. The distance to a convex set is a convex
    function, so each one-sided distance is attained at a vertex.
    """
    forward = max(second.distance(x) for x in first.vertices)
    backward = max(first.distance(x) for x in second.vertices)
    return max(forward, backward)


class ScaledCrystal(NamedTuple):
    """A Wulff crystal scaled to volume ``1 / theta``."""

    polytope: Polytope
    theta: float
    target_volume: float
    volume: float
    surface_energy: float
    resolution: float

    def to_json(self) -> dict:
        return {
            **self.polytope.to_json(),
            "theta": self.theta,
            "volume": self.volume,
            "surfaceEnergy": self.surface_energy,
        }


def crystal_from_norm(
    norm: NormSpec,
    directions: Sequence[Sequence[float]],
    theta: float,
    volume_rtol: float = TOLERANCES.volume_rtol,
) -> ScaledCrystal:
    """
    Builds the Wulff polytope of ``norm``, scales it to volume ``1 / theta`` and reports its surface
    energy.

    :raises ParameterError: If ``theta`` is not in ``(0, 1]``.

    :raises GeometryError: If the directions do not bound a polytope or the scaled volume misses
                           its target.
    """
    if not 0.0 < theta <= 1.0:
        raise ParameterError(f"theta must be in (0, 1], got {theta}")
    target = 1.0 / theta
    crystal = scale_to_volume(wulff_polytope(norm, directions), target)
    volume = crystal.volume
    if abs(volume - target) > volume_rtol * target:
        raise GeometryError(f"Scaled volume {volume} misses the target {target}")
    return ScaledCrystal(
        crystal, theta, target, volume, surface_energy(crystal, norm), norm.max_resolution()
    )


def crystal_pipeline(
    table: NormTable,
    theta: float,
    p: float = None,
    volume_rtol: float = TOLERANCES.volume_rtol,
) -> ScaledCrystal:
    """
    The crystal of a measured norm table at ``p``: the symmetrized table norm, its Wulff polytope
    over the sampled directions, scaled to volume ``1 / theta``. The surface energy of the result
    is the predicted limit of ``n phi_n(p)``.

    :param table: The norm table.

    :param theta: Estimate of ``P(0 in C_p)`` in ``(0, 1]``.

    :param p: The parameter, optional if the table has a single one.

    :param volume_rtol: Relative tolerance on the scaled volume.

    :returns: The scaled crystal.

    :raises GeometryError: If the sampled directions do not bound a polytope.
    """
    if p is None:
        if len(table.p_grid) != 1:
            raise ParameterError("The table has several parameters, pass p")
        p = table.p_grid[0]
    norm = NormSpec.from_norm_table(table, p)
    return crystal_from_norm(norm, norm.directions, theta, volume_rtol)


class ChainBound(NamedTuple):
    """
    Comparison of the Hausdorff distance of two Wulff crystals with bounds computed from their
    gauges ``g = 1 / radial function`` on the test directions ``y``:

    - ``radial_gap = max |1 / g_p(y) - 1 / g_q(y)|``, a rigorous upper bound,
    - ``chain = beta_max^2 max |g_p(y) - g_q(y)|``, which dominates the radial gap.

    ``beta_min`` and ``beta_max`` are extremes over the sampled directions only and under-cover
    the true extremes.
    """

    hausdorff: float
    radial_gap: float
    dual_gap: float
    beta_min: float
    beta_max: float
    chain: float
    holds: bool


def hausdorff_chain_bound(
    norm_p: NormSpec,
    norm_q: NormSpec,
    directions: Sequence[Sequence[float]],
    first: Optional[Polytope] = None,
    second: Optional[Polytope] = None,
    tol: float = TOLERANCES.report,
) -> ChainBound:
    """
    Checks ``d_H(W_p, W_q) <= radial gap + tol`` where the radial gap is taken over the directions
    of the vertices of both crystals and the constraint directions.
    """
    units = _unit_rows(directions)
    first = first if first is not None else wulff_polytope(norm_p, units)
    second = second if second is not None else wulff_polytope(norm_q, units)

    tests = _unit_rows(np.vstack([first.vertices, second.vertices, units]))
    gauge_p = np.array([dual_norm_eval(norm_p, y, units) for y in tests])
    gauge_q = np.array([dual_norm_eval(norm_q, y, units) for y in tests])
    radial_gap = float(np.abs(1.0 / gauge_p - 1.0 / gauge_q).max())
    dual_gap = float(np.abs(gauge_p - gauge_q).max())

    values = np.concatenate([norm_p(units), norm_q(units)])
    beta_min, beta_max = float(values.min()), float(values.max())
    distance = hausdorff_distance(first, second)
    return ChainBound(
        distance,
        radial_gap,
        dual_gap,
        beta_min,
        beta_max,
        beta_max ** 2 * dual_gap,
        distance <= radial_gap + tol,
    )
