"""
Exact minimal cutsets of cylinders through max-flow.

Every lattice edge becomes a pair of opposite arcs with the edge capacity. A super source feeds
every vertex of ``C'_1`` and a super sink drains every vertex of ``C'_2`` through arcs whose
capacity exceeds the total lattice capacity, so only lattice edges are ever cut.
"""
from typing import NamedTuple

import networkx as nx
import numpy as np
from networkx.algorithms.flow import boykov_kolmogorov

from .cylinder import CylinderInstance
from .lattice import PercConfig, restrict

SOURCE = "source"
SINK = "sink"


class CutResult(NamedTuple):
    """
    A minimal cutset. :py:attr:`tau` is the number of open edges of the cut and
    :py:attr:`flow_value` the max-flow value it was derived from; both agree.
    """

    tau: int
    cut_edges: np.ndarray
    cardinality: int
    flow_value: int

    def to_record(self, n: int, v, p: float, seed: int) -> dict:
        """NDJSON record of the cut."""
        return {
            "n": n,
            "v": list(v),
            "p": float(p),
            "seed": int(seed),
            "tau": self.tau,
            "cardinality": self.cardinality,
            "cut": self.cut_edges.tolist(),
        }


def _network(instance: CylinderInstance, capacity: np.ndarray) -> nx.DiGraph:
    ends = instance.region.endpoints.tolist()
    big = int(capacity.sum()) + 1

    graph = nx.DiGraph()
    graph.add_nodes_from(range(instance.region.num_vertices))
    for (a, b), c in zip(ends, capacity.tolist()):
        graph.add_edge(a, b, capacity=c)
        graph.add_edge(b, a, capacity=c)
    graph.add_edges_from(((SOURCE, x) for x in instance.c1.tolist()), capacity=big)
    graph.add_edges_from(((x, SINK) for x in instance.c2.tolist()), capacity=big)
    return graph


def _source_side(residual: nx.DiGraph) -> np.ndarray:
    seen, stack = {SOURCE}, [SOURCE]
    while stack:
        node = stack.pop()
        for succ, attr in residual[node].items():
            if succ not in seen and attr["flow"] < attr["capacity"]:
                seen.add(succ)
                stack.append(succ)
    seen.discard(SOURCE)
    return np.fromiter(seen, dtype=np.int64)


def _solve(instance: CylinderInstance, capacity: np.ndarray):
    residual = boykov_kolmogorov(_network(instance, capacity), SOURCE, SINK)
    side = np.zeros(instance.region.num_vertices, dtype=bool)
    side[_source_side(residual)] = True
    ends = instance.region.endpoints
    cut = np.flatnonzero(side[ends[:, 0]] != side[ends[:, 1]])
    return int(residual.graph["flow_value"]), cut


def min_open_cut(instance: CylinderInstance, config: PercConfig) -> CutResult:
    """
    Computes ``tau_p(n, v)``: the minimum number of open edges over all cutsets separating
    ``C'_1`` from ``C'_2`` inside the cylinder, with one cutset achieving it. The returned cut is
    the edge boundary of the residual source side, so it may contain closed edges.

    :param instance: The cylinder.

    :param config: A configuration whose region covers every edge of the cylinder.

    :returns: The cut.

    :raises GeometryError: If the configuration does not cover the cylinder.
    """
    open_mask = restrict(config, instance.region)
    value, cut = _solve(instance, open_mask.astype(np.int64))
    return CutResult(int(open_mask[cut].sum()), cut, len(cut), value)


def min_cardinality_min_cut(instance: CylinderInstance, config: PercConfig) -> CutResult:
    """
    Among all cutsets of minimal open capacity, finds one of minimal cardinality ``N_{n,p}``.
    Each edge gets the capacity ``M 1{open} + 1`` with ``M = |edges| + 1``, so the minimal cut
    value ``M tau + N`` decomposes uniquely.

    :param instance: The cylinder.

    :param config: A configuration whose region covers every edge of the cylinder.

    :returns: The cut; :py:attr:`CutResult.flow_value` is the open-capacity part of the
              composite flow.

    :raises GeometryError: If the configuration does not cover the cylinder.
    """
    open_mask = restrict(config, instance.region)
    big_m = instance.num_edges + 1
    value, cut = _solve(instance, big_m * open_mask.astype(np.int64) + 1)
    return CutResult(int(open_mask[cut].sum()), cut, len(cut), value // big_m)
