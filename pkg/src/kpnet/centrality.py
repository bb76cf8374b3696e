"""Node-importance measures on the weighted QA network and top-n selection.

All four measures (pagerank, degree, betweenness, closeness) are pure
functions of an immutable network with deterministic tie-breaking by node
id, so repeated runs are bit-for-bit reproducible.  Path-based measures use
the distance transform 1 - weight + epsilon: similarity 1 means near-zero
distance, and epsilon keeps every edge length strictly positive.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import UnknownNode
from .network import QaNetwork

log = logging.getLogger(__name__)

EPSILON = 1e-6

MEASURE_KINDS = ("pagerank", "degree", "betweenness", "closeness")


@dataclass(frozen=True)
class CentralityMeasure:
    kind: str
    damping: float = 0.85
    tolerance: float = 1e-9
    max_iters: int = 10_000
    weighted_degree: bool = True
    epsilon: float = EPSILON

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise ValueError(f"unknown centrality measure {self.kind!r}")
        if not (0.0 < self.damping < 1.0):
            raise ValueError("damping must lie in (0, 1)")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class CentralityScores:
    measure: CentralityMeasure
    scores: dict[str, float]
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0


def _indexed_adjacency(net: QaNetwork, as_distance: bool, epsilon: float = EPSILON):
    """Nodes in canonical order plus integer-indexed adjacency lists."""
    nodes = list(net.nodes)
    index = {node: i for i, node in enumerate(nodes)}
    adj: list[list[tuple[int, float]]] = [[] for _ in nodes]
    for q, d, w in net.edges:
        value = (1.0 - w + epsilon) if as_distance else w
        adj[index[q]].append((index[d], value))
        adj[index[d]].append((index[q], value))
    for lst in adj:
        lst.sort()
    return nodes, adj


def pagerank(
    net: QaNetwork,
    damping: float = 0.85,
    tolerance: float = 1e-9,
    max_iters: int = 10_000,
) -> CentralityScores:
    """Power iteration on the row-stochastic weighted transition matrix of
    the undirected graph; dangling (isolated) nodes distribute uniformly.

    Converged when the L1 change between iterations drops below
    ``tolerance``.  On non-convergence the last iterate is still returned,
    flagged via ``converged=False`` with the final residual.
    """
    measure = CentralityMeasure(kind="pagerank", damping=damping,
                                tolerance=tolerance, max_iters=max_iters)
    nodes, adj = _indexed_adjacency(net, as_distance=False)
    n = len(nodes)
    if n == 0:
        raise ValueError("pagerank is undefined on an empty network")

    strength = np.array([sum(w for _, w in lst) for lst in adj])
    dangling = strength == 0.0
    transition = np.zeros((n, n))
    for i, lst in enumerate(adj):
        if strength[i] > 0.0:
            for j, w in lst:
                transition[i, j] = w / strength[i]

    x = np.full(n, 1.0 / n)
    teleport = (1.0 - damping) / n
    converged = False
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        dangling_mass = float(x[dangling].sum()) / n
        new = teleport + damping * (x @ transition + dangling_mass)
        residual = float(np.abs(new - x).sum())
        x = new
        if residual < tolerance:
            converged = True
            break
    if not converged:
        log.warning("pagerank did not converge in %d iterations (residual %.3e)",
                    max_iters, residual)
    scores = {node: float(x[i]) for i, node in enumerate(nodes)}
    return CentralityScores(measure=measure, scores=scores, converged=converged,
                            iterations=iterations, residual=residual)


def degree_centrality(net: QaNetwork, weighted: bool = True) -> CentralityScores:
    """Weighted strength (sum of incident weights) by default; plain edge
    count behind ``weighted=False``."""
    measure = CentralityMeasure(kind="degree", weighted_degree=weighted)
    scores = {}
    for node in net.nodes:
        nbrs = net.neighbors(node)
        scores[node] = float(sum(nbrs.values())) if weighted else float(len(nbrs))
    return CentralityScores(measure=measure, scores=scores)


def _shortest_paths_from(adj, source: int, n: int):
    """Dijkstra with shortest-path counting (strictly positive lengths).

    Returns pop order, predecessor lists, path counts, and distances.
    Heap ties break on node index, so the traversal is deterministic.
    """
    dist = [math.inf] * n
    sigma = [0.0] * n
    preds: list[list[int]] = [[] for _ in range(n)]
    final = [False] * n
    dist[source] = 0.0
    sigma[source] = 1.0
    order: list[int] = []
    heap = [(0.0, source)]
    while heap:
        dv, v = heapq.heappop(heap)
        if final[v]:
            continue
        final[v] = True
        order.append(v)
        for w, length in adj[v]:
            if final[w]:
                continue
            nd = dv + length
            if nd < dist[w]:
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (nd, w))
            elif nd == dist[w]:
                sigma[w] += sigma[v]
                preds[w].append(v)
    return order, preds, sigma, dist


def betweenness_centrality(net: QaNetwork, epsilon: float = EPSILON) -> CentralityScores:
    """Brandes accumulation over weighted shortest paths.

    score(v) = sum over unordered pairs {s, t} (both != v) of
    sigma_st(v) / sigma_st, normalized by (n-1)(n-2)/2 for n > 2.
    """
    measure = CentralityMeasure(kind="betweenness", epsilon=epsilon)
    nodes, adj = _indexed_adjacency(net, as_distance=True, epsilon=epsilon)
    n = len(nodes)
    raw = [0.0] * n
    for s in range(n):
        order, preds, sigma, _ = _shortest_paths_from(adj, s, n)
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                raw[w] += delta[w]
    # Source loop visits ordered pairs, i.e. each unordered pair twice.
    scale = 1.0 / ((n - 1) * (n - 2)) if n > 2 else 1.0
    scores = {node: raw[i] * scale for i, node in enumerate(nodes)}
    return CentralityScores(measure=measure, scores=scores)


def closeness_centrality(net: QaNetwork, epsilon: float = EPSILON) -> CentralityScores:
    """Wasserman-Faust closeness with component correction.

    For node v reaching n_v nodes (itself included) in a graph of N nodes:
    score(v) = ((n_v - 1) / (N - 1)) * ((n_v - 1) / sum of distances).
    Isolated nodes score 0.
    """
    measure = CentralityMeasure(kind="closeness", epsilon=epsilon)
    nodes, adj = _indexed_adjacency(net, as_distance=True, epsilon=epsilon)
    n = len(nodes)
    scores = {}
    for i, node in enumerate(nodes):
        _, _, _, dist = _shortest_paths_from(adj, i, n)
        reachable = [d for d in dist if d < math.inf]
        n_v = len(reachable)
        total = sum(reachable)
        if n < 2 or n_v < 2 or total <= 0.0:
            scores[node] = 0.0
        else:
            scores[node] = ((n_v - 1) / (n - 1)) * ((n_v - 1) / total)
    return CentralityScores(measure=measure, scores=scores)


def compute_centrality(net: QaNetwork, measure: CentralityMeasure) -> CentralityScores:
    if measure.kind == "pagerank":
        return pagerank(net, measure.damping, measure.tolerance, measure.max_iters)
    if measure.kind == "degree":
        return degree_centrality(net, weighted=measure.weighted_degree)
    if measure.kind == "betweenness":
        return betweenness_centrality(net, epsilon=measure.epsilon)
    if measure.kind == "closeness":
        return closeness_centrality(net, epsilon=measure.epsilon)
    raise ValueError(f"unknown centrality measure {measure.kind!r}")


def top_n_questions(scores: CentralityScores, net: QaNetwork, n: int) -> list[str]:
    """Question nodes ranked by score descending, ties by id ascending;
    argument nodes are never selected.  Length is min(n, question count)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for node in net.nodes:
        if node not in scores.scores:
            raise UnknownNode(node)
    ranked = sorted(net.question_nodes, key=lambda q: (-scores.scores[q], q))
    return ranked[:n]
