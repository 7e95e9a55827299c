"""
Finite-difference slope reports over a ``p`` grid: the flow constant, the Hausdorff distance
between Wulff crystals, the predicted Cheeger limit and ``P(0 in C_p)``. Slopes come from
adjacent grid pairs only; no fitted Lipschitz constant is ever reported.
"""
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .clusters import theta_indicator
from .config import TOLERANCES, Tolerances
from .exceptions import ParameterError
from .flow_constant import NormTable, build_norm_table, coupled_beta_pair
from .lattice import Region, open_at, sample_uniform_field
from .utils import derive_seed, is_sorted, normal_ci, write_csv
from .workers import map_tasks
from .wulff import NormSpec, crystal_pipeline, hausdorff_chain_bound, wulff_polytope

logger = logging.getLogger(__name__)

QUANTITIES = ("beta", "hausdorff", "cheegerLimit", "theta")

HEADER = ["quantity", "p_lo", "p_hi", "slope", "ci_lo", "ci_hi", "n", "replicas"]


class SlopeRow(NamedTuple):
    quantity: str
    p_lo: float
    p_hi: float
    slope: Optional[float]
    ci_lo: Optional[float]
    ci_hi: Optional[float]
    n: Optional[int]
    replicas: Optional[int]


class SlopeReport(NamedTuple):
    """
    Adjacent finite-difference slopes of one quantity. :py:attr:`values` holds the quantity at
    every grid point when it is defined pointwise, and :py:attr:`metadata` the provenance needed
    to reproduce the numbers.
    """

    quantity: str
    p_grid: tuple
    rows: List[SlopeRow]
    values: list
    metadata: dict

    @property
    def max_slope(self) -> Optional[float]:
        slopes = [row.slope for row in self.rows if row.slope is not None]
        return max(slopes) if slopes else None

    def to_csv(self, path: Path) -> Path:
        """Writes the rows and a ``<stem>.json`` metadata sidecar."""
        path = write_csv(path, HEADER, self.rows)
        meta = {
            "quantity": self.quantity,
            "p_grid": list(self.p_grid),
            "values": self.values,
            "max_slope": self.max_slope,
            **self.metadata,
        }
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path


def _check_grid(p_grid: Sequence[float]) -> tuple:
    if not p_grid or not is_sorted(p_grid) or len(set(p_grid)) != len(p_grid):
        raise ParameterError(f"The p grid must be strictly increasing, got {list(p_grid)}")
    return tuple(float(p) for p in p_grid)


def _pairs(p_grid: Sequence[float]):
    return list(zip(p_grid, p_grid[1:]))


def _provenance(seed: int, tolerances: Tolerances, **extra) -> dict:
    return {
        "seed": seed,
        "tolerances": asdict(tolerances),
        **extra,
    }


def beta_lipschitz_report(
    p_grid: Sequence[float],
    v: Sequence[float],
    n: int,
    replicas: int,
    seed: int,
    coupling: str = "monotone",
    tolerances: Tolerances = TOLERANCES,
    jobs: int = 1,
) -> SlopeReport:
    """
    Slopes of ``beta_p(v)`` between adjacent grid points from coupled pairs, each with a normal
    confidence interval on the mean paired difference. Under either coupling every slope is
    nonnegative.
    """
    p_grid = _check_grid(p_grid)
    rows = []
    for p, q in _pairs(p_grid):
        pair = coupled_beta_pair(p, q, v, n, replicas, seed, coupling=coupling, jobs=jobs)
        lo, hi = pair.ci
        rows.append(SlopeRow("beta", p, q, pair.slope, lo, hi, n, replicas))
    metadata = _provenance(
        seed, tolerances, n=n, replicas=replicas, v=list(v), coupling=coupling,
        ci="normal, 1.96 standard errors of the mean paired difference",
    )
    return SlopeReport("beta", p_grid, rows, [], metadata)


def wulff_lipschitz_report(
    p_grid: Sequence[float],
    directions: Sequence[Sequence[float]],
    n: int,
    replicas: int,
    seed: int,
    table: NormTable = None,
    tolerances: Tolerances = TOLERANCES,
    jobs: int = 1,
) -> SlopeReport:
    """
    Hausdorff distances between the Wulff crystals of adjacent grid points divided by the grid
    step, with the gauge-gap bound checked per pair. Rows in dimension 2 are exploratory, the
    regularity statement being made for ``d >= 3``.

    :param table: A measured norm table covering the grid, built when absent.
    """
    p_grid = _check_grid(p_grid)
    if table is None:
        table = build_norm_table(p_grid, directions, n, replicas, seed, jobs)

    norms = {p: NormSpec.from_norm_table(table, p) for p in p_grid}
    crystals = {p: wulff_polytope(norm, norm.directions) for p, norm in norms.items()}

    rows, chains = [], []
    for p, q in _pairs(p_grid):
        bound = hausdorff_chain_bound(
            norms[p], norms[q], norms[p].directions, crystals[p], crystals[q], tolerances.report
        )
        chains.append({"p": p, "q": q, **bound._asdict()})
        rows.append(SlopeRow("hausdorff", p, q, bound.hausdorff / (q - p), None, None, n, replicas))

    metadata = _provenance(
        seed, tolerances, n=n, replicas=replicas, exploratory=table.d < 3, chain=chains,
        ci="none, the distance is a deterministic function of the table",
        extremes="beta_min and beta_max are taken over sampled directions only",
    )
    return SlopeReport("hausdorff", p_grid, rows, [], metadata)


def cheeger_limit_report(
    p_grid: Sequence[float],
    thetas: Mapping[float, float],
    table: NormTable,
    tolerances: Tolerances = TOLERANCES,
) -> SlopeReport:
    """
    The predicted Cheeger limit ``I_p(W_p)`` of the crystal scaled to volume ``1 / theta_p`` at
    every grid point, and its adjacent slopes.
    """
    p_grid = _check_grid(p_grid)
    energies, volumes = [], []
    for p in p_grid:
        crystal = crystal_pipeline(table, thetas[p], p, tolerances.volume_rtol)
        energies.append(crystal.surface_energy)
        volumes.append(crystal.volume)

    rows = [
        SlopeRow("cheegerLimit", p, q, (eq - ep) / (q - p), None, None, None, None)
        for (p, q), (ep, eq) in zip(_pairs(p_grid), zip(energies, energies[1:]))
    ]
    metadata = _provenance(
        table.metadata.get("seed"), tolerances, thetas=[thetas[p] for p in p_grid],
        volumes=volumes, table=table.metadata,
    )
    return SlopeReport("cheegerLimit", p_grid, rows, energies, metadata)


def _theta_grid_task(task: tuple) -> List[bool]:
    p_grid, m, d, seed = task
    field = sample_uniform_field(Region.centered_box(m, d), seed)
    return [theta_indicator(open_at(field, p), m) for p in p_grid]


def theta_indicators(
    p_grid: Sequence[float], m: int, replicas: int, seed: int, d: int = 2, jobs: int = 1
) -> np.ndarray:
    """
    Indicators of the finite-volume proxy of ``0 in C_p`` on shared fields, shape
    ``(replicas, len(p_grid))``. Replica ``r`` uses the seed of replica ``r`` of
    :py:func:`perclab.clusters.estimate_theta`, so each row is nondecreasing in ``p``.
    """
    tasks = [(tuple(p_grid), m, d, derive_seed(seed, "theta", r)) for r in range(replicas)]
    return np.asarray(map_tasks(_theta_grid_task, tasks, jobs), dtype=bool).reshape(replicas, -1)


def theta_slope_report(
    p_grid: Sequence[float],
    m: int,
    replicas: int,
    seed: int,
    d: int = 2,
    tolerances: Tolerances = TOLERANCES,
    jobs: int = 1,
) -> SlopeReport:
    """
    Finite differences of the estimate of ``P(0 in C_p)``, with confidence intervals from the
    paired per-replica differences on shared fields.
    """
    p_grid = _check_grid(p_grid)
    if m < 1 or replicas < 1:
        raise ParameterError("Radius and replicas must be at least 1")
    indicators = theta_indicators(p_grid, m, replicas, seed, d, jobs).astype(float)

    rows = []
    for i, (p, q) in enumerate(_pairs(p_grid)):
        diff = (indicators[:, i + 1] - indicators[:, i]) / (q - p)
        slope = float(diff.mean())
        lo = hi = None
        if replicas > 1:
            lo, hi = normal_ci(slope, float(diff.std(ddof=1)) / math.sqrt(replicas))
        rows.append(SlopeRow("theta", p, q, slope, lo, hi, m, replicas))

    values = indicators.mean(axis=0).tolist()
    metadata = _provenance(
        seed, tolerances, m=m, d=d, replicas=replicas,
        ci="normal, 1.96 standard errors of the mean paired difference",
    )
    return SlopeReport("theta", p_grid, rows, values, metadata)


def stable_across(first: SlopeReport, second: SlopeReport) -> bool:
    """
    Whether the maximal slopes of two reports agree within their combined confidence half-widths,
    e.g. the same quantity at two scales or on two grid refinements.
    """

    def top(report: SlopeReport) -> Dict[str, float]:
        row = max((r for r in report.rows if r.slope is not None), key=lambda r: r.slope)
        half = 0.0 if row.ci_hi is None else (row.ci_hi - row.slope)
        return {"slope": row.slope, "half": half}

    a, b = top(first), top(second)
    return abs(a["slope"] - b["slope"]) <= math.hypot(a["half"], b["half"])
