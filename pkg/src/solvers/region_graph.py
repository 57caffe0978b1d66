"""Adjacency graph of explicit-law regions and continuity checks along its edges."""
import logging
from typing import Dict

import networkx as nx
import numpy as np

from control.models import ExplicitLaw
from solvers.phase_one import chebyshev_ball

logger = logging.getLogger(__name__)


def build_region_graph(law: ExplicitLaw) -> nx.Graph:
    """
    Graph with one node per region and an edge between regions whose active
    sets differ by exactly one constraint.
    """
    graph = nx.Graph()
    for index, region in enumerate(law.regions):
        graph.add_node(index, active_set=tuple(region.active_set), n_lambda=region.n_lambda)
    for i in range(len(law.regions)):
        set_i = set(law.regions[i].active_set)
        for j in range(i + 1, len(law.regions)):
            changed = set_i.symmetric_difference(law.regions[j].active_set)
            if len(changed) == 1:
                graph.add_edge(i, j, constraint=next(iter(changed)))
    return graph


def continuity_gap(law: ExplicitLaw, graph: nx.Graph) -> float:
    """
    Largest disagreement of neighbouring affine pieces on their common boundary.

    For every edge a point of the intersection of both closed regions is found
    by LP; edges whose regions do not touch are skipped.
    """
    worst = 0.0
    for i, j in graph.edges:
        first, second = law.regions[i], law.regions[j]
        E = np.vstack([first.E, second.E])
        K = np.concatenate([first.K, second.K])
        ball = chebyshev_ball(E, K) if E.shape[0] else None
        if ball is not None and not ball.feasible:
            graph.edges[i, j]["touching"] = False
            continue
        point = ball.center if ball is not None else np.zeros(law.n_chi)
        gap = float(np.max(np.abs(first.control(point) - second.control(point))))
        graph.edges[i, j]["touching"] = True
        graph.edges[i, j]["gap"] = gap
        worst = max(worst, gap)
    return worst


def graph_summary(graph: nx.Graph) -> Dict[str, int]:
    return {
        "nodes": graph.number_of_nodes(),
        "edges": graph.number_of_edges(),
        "components": nx.number_connected_components(graph) if graph.number_of_nodes() else 0,
    }
