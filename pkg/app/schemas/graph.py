# app/schemas/graph.py
from collections import defaultdict
from typing import Dict, List, Tuple

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, model_validator


class GraphWeights(BaseModel):
    """Coeficientes de la combinación lineal SG/DRG/CG"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(1.0, ge=0)
    beta: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _positive_sum(self) -> "GraphWeights":
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("alpha + beta + gamma debe ser > 0")
        return self

    def label(self) -> str:
        return f"{self.alpha:g},{self.beta:g},{self.gamma:g}"


class FunctionGraph(BaseModel):
    """
    Grafo ponderado sobre entradas de función.
    En grafos no dirigidos cada par se guarda una sola vez como (min, max).
    """
    nodes: List[int]
    edges: Dict[Tuple[int, int], float] = Field(default_factory=dict)
    directed: bool = False
    source: str = "combined"

    @model_validator(mode="after")
    def _check(self) -> "FunctionGraph":
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("nodos duplicados")
        node_set = set(self.nodes)
        for (u, v), weight in self.edges.items():
            if u == v:
                raise ValueError(f"auto-lazo en {u:#x}")
            if weight < 0:
                raise ValueError(f"peso negativo en ({u:#x}, {v:#x})")
            if u not in node_set or v not in node_set:
                raise ValueError(f"arista ({u:#x}, {v:#x}) fuera del conjunto de nodos")
            if not self.directed and u > v:
                raise ValueError("arista no dirigida sin normalizar")
        return self

    def weight(self, u: int, v: int) -> float:
        if not self.directed and u > v:
            u, v = v, u
        return self.edges.get((u, v), 0.0)

    def pair_weight(self, u: int, v: int) -> float:
        """Peso del par {u, v} sumando ambas direcciones"""
        if self.directed:
            return self.edges.get((u, v), 0.0) + self.edges.get((v, u), 0.0)
        return self.weight(u, v)

    def total_weight(self) -> float:
        return float(sum(self.edges.values()))

    def to_networkx(self) -> nx.Graph:
        graph = nx.DiGraph() if self.directed else nx.Graph()
        graph.add_nodes_from(self.nodes)
        graph.add_weighted_edges_from((u, v, w) for (u, v), w in self.edges.items())
        return graph


class Partition(BaseModel):
    """Asignación de cada función a exactamente un módulo (ids densos desde 0)"""
    assignment: Dict[int, int]

    @model_validator(mode="after")
    def _dense_ids(self) -> "Partition":
        ids = set(self.assignment.values())
        if ids != set(range(len(ids))):
            raise ValueError("los ids de cluster deben ser densos desde 0")
        return self

    @property
    def cluster_count(self) -> int:
        return len(set(self.assignment.values()))

    def clusters(self) -> Dict[int, List[int]]:
        grouped: Dict[int, List[int]] = defaultdict(list)
        for node, cluster in self.assignment.items():
            grouped[cluster].append(node)
        return {cid: sorted(members) for cid, members in sorted(grouped.items())}

    def communities(self) -> List[set]:
        return [set(members) for members in self.clusters().values()]

    @classmethod
    def from_clusters(cls, groups: List[List[int]]) -> "Partition":
        """Renumera los grupos por su menor miembro para obtener ids estables"""
        ordered = sorted((sorted(group) for group in groups if group), key=lambda g: g[0])
        return cls(assignment={node: cid for cid, group in enumerate(ordered) for node in group})


class ModularityScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: float = Field(..., ge=-0.5 - 1e-9, le=1.0 + 1e-9)
