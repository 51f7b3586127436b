# app/services/community.py
"""
Detección de módulos sobre el grafo combinado: algoritmo voraz de Newman
(formulación rápida con ΔQ incremental por par de clusters) y un oráculo
exhaustivo para grafos pequeños.
"""
import heapq
import logging
from collections import defaultdict
from typing import Any, Dict, Iterator, List, Tuple

import networkx as nx
import numpy as np

from app.core.constants import BRUTE_FORCE_MAX_NODES
from app.core.errors import IncompletePartition, InputError, TooLarge
from app.schemas.graph import FunctionGraph, ModularityScore, Partition

logger = logging.getLogger(__name__)


def _undirected_pairs(graph: FunctionGraph) -> Dict[Tuple[int, int], float]:
    """Pesos por par no ordenado; en grafos dirigidos se suman ambas direcciones"""
    if not graph.directed:
        return dict(graph.edges)
    pairs: Dict[Tuple[int, int], float] = defaultdict(float)
    for (u, v), weight in graph.edges.items():
        pairs[(min(u, v), max(u, v))] += weight
    return dict(pairs)


def modularity(graph: FunctionGraph, p: Partition) -> ModularityScore:
    if set(p.assignment) != set(graph.nodes):
        missing = len(set(graph.nodes) - set(p.assignment))
        extra = len(set(p.assignment) - set(graph.nodes))
        raise IncompletePartition(f"la partición no cubre el grafo ({missing} faltan, {extra} sobran)")

    pairs = _undirected_pairs(graph)
    if sum(pairs.values()) == 0:
        return ModularityScore(q=0.0)

    g = nx.Graph()
    g.add_nodes_from(graph.nodes)
    g.add_weighted_edges_from((u, v, w) for (u, v), w in pairs.items())
    q = nx.community.modularity(g, p.communities(), weight="weight")
    return ModularityScore(q=float(q))


class NewmanClusterer:
    """
    Aglomerativo voraz: parte de singletons y fusiona el par con mayor ΔQ
    mientras ΔQ > 0. Empates: menor id del cluster que se conserva, luego
    menor id del absorbido (ids = posición del nodo en graph.nodes).
    """

    def __init__(self, graph: FunctionGraph):
        self.graph = graph
        self.q: float = 0.0
        self.merge_gains: List[float] = []

    def run(self) -> Partition:
        nodes = list(self.graph.nodes)
        index = {node: i for i, node in enumerate(nodes)}
        pairs = _undirected_pairs(self.graph)
        total = sum(pairs.values())

        self.merge_gains = []
        if total == 0:
            self.q = 0.0
            return Partition.from_clusters([[node] for node in nodes])

        two_m = 2.0 * total
        degree = np.zeros(len(nodes))
        for (u, v), weight in pairs.items():
            degree[index[u]] += weight
            degree[index[v]] += weight
        a: Dict[int, float] = {i: degree[i] / two_m for i in range(len(nodes))}

        # dq[i][j] solo para clusters conectados
        dq: Dict[int, Dict[int, float]] = defaultdict(dict)
        for (u, v), weight in pairs.items():
            i, j = index[u], index[v]
            gain = 2.0 * (weight / two_m - a[i] * a[j])
            dq[i][j] = gain
            dq[j][i] = gain

        heap: List[Tuple[float, int, int]] = [
            (-gain, i, j) for i, row in dq.items() for j, gain in row.items() if i < j
        ]
        heapq.heapify(heap)

        members: Dict[int, List[int]] = {i: [i] for i in range(len(nodes))}
        self.q = -sum(value * value for value in a.values())

        while heap:
            neg_gain, i, j = heapq.heappop(heap)
            # entradas obsoletas: el par ya no existe o su ΔQ cambió
            if i not in members or j not in members or dq[i].get(j) != -neg_gain:
                continue
            gain = -neg_gain
            if gain <= 0:
                break

            self._merge(i, j, dq, a, heap)
            members[i].extend(members.pop(j))
            self.q += gain
            self.merge_gains.append(gain)

        groups = [[nodes[k] for k in group] for group in members.values()]
        logger.info(
            f"Newman: {len(groups)} módulos tras {len(self.merge_gains)} fusiones, Q={self.q:.4f}"
        )
        return Partition.from_clusters(groups)

    @staticmethod
    def _merge(
        i: int,
        j: int,
        dq: Dict[int, Dict[int, float]],
        a: Dict[int, float],
        heap: List[Tuple[float, int, int]],
    ) -> None:
        """Absorbe j en i actualizando ΔQ de los vecinos de ambos"""
        row_i = dq[i]
        row_j = dq.pop(j)
        del row_i[j]
        del row_j[i]

        for k in set(row_i) | set(row_j):
            if k in row_i and k in row_j:
                updated = row_i[k] + row_j[k]
            elif k in row_i:
                updated = row_i[k] - 2.0 * a[j] * a[k]
            else:
                updated = row_j[k] - 2.0 * a[i] * a[k]

            row_i[k] = updated
            dq[k][i] = updated
            dq[k].pop(j, None)
            heapq.heappush(heap, (-updated, min(i, k), max(i, k)))

        a[i] += a.pop(j)


def cluster_newman(graph: FunctionGraph) -> Partition:
    return NewmanClusterer(graph).run()


def _restricted_growth_strings(n: int) -> Iterator[List[int]]:
    """Particiones de n elementos como cadenas de crecimiento restringido, en orden lexicográfico"""
    if n == 0:
        yield []
        return

    def extend(prefix: List[int], highest: int) -> Iterator[List[int]]:
        if len(prefix) == n:
            yield prefix
            return
        for value in range(highest + 2):
            yield from extend(prefix + [value], max(highest, value))

    yield from extend([0], 0)


def brute_force_best_partition(graph: FunctionGraph) -> Partition:
    """Oráculo exhaustivo (número de Bell); empates: menos clusters, luego orden lexicográfico"""
    nodes = list(graph.nodes)
    n = len(nodes)
    if n > BRUTE_FORCE_MAX_NODES:
        raise TooLarge(f"{n} nodos; el oráculo admite como máximo {BRUTE_FORCE_MAX_NODES}")
    if n == 0:
        return Partition(assignment={})

    index = {node: i for i, node in enumerate(nodes)}
    adjacency = np.zeros((n, n))
    for (u, v), weight in _undirected_pairs(graph).items():
        adjacency[index[u], index[v]] += weight
        adjacency[index[v], index[u]] += weight

    strings = np.array(list(_restricted_growth_strings(n)), dtype=np.int8)
    two_m = adjacency.sum()

    if two_m == 0:
        scores = np.zeros(len(strings))
    else:
        k = adjacency.sum(axis=1)
        b = adjacency - np.outer(k, k) / two_m
        scores = np.full(len(strings), np.trace(b))
        for u in range(n):
            for v in range(u + 1, n):
                scores += 2.0 * b[u, v] * (strings[:, u] == strings[:, v])
        scores /= two_m

    cluster_counts = strings.max(axis=1) + 1
    best = scores.max()
    tied = np.flatnonzero(scores >= best - 1e-12)
    fewest = tied[cluster_counts[tied] == cluster_counts[tied].min()]
    chosen = strings[fewest[0]]

    groups: Dict[int, List[int]] = defaultdict(list)
    for node, cluster in zip(nodes, chosen):
        groups[int(cluster)].append(node)
    return Partition.from_clusters(list(groups.values()))


# ===================== DOCUMENTOS JSON =====================

def partition_to_document(p: Partition) -> Dict[str, Any]:
    return {"clusters": {str(cid): [f"{node:#010x}" for node in members] for cid, members in p.clusters().items()}}


def partition_from_document(document: Dict[str, Any]) -> Partition:
    try:
        assignment: Dict[int, int] = {}
        for cid, members in document["clusters"].items():
            for node in members:
                addr = int(node, 16)
                if addr in assignment:
                    raise InputError(f"la función {node} aparece en dos clusters")
                assignment[addr] = int(cid)
        return Partition(assignment=assignment)
    except (KeyError, TypeError, AttributeError, ValueError) as e:
        raise InputError(f"documento de partición inválido: {e}") from e
