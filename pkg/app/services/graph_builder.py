# app/services/graph_builder.py
"""
Construcción de los grafos de funciones: secuencia (SG), referencias a
datos (DRG) y llamadas (CG), y su combinación lineal en un grafo no dirigido.
"""
import logging
from collections import Counter, defaultdict
from itertools import combinations
from typing import Any, Dict, List, Literal, Optional, Tuple

from app.core.errors import InputError, InvalidWeights, NodeSetMismatch
from app.schemas.analysis import CallSite, DataRef, FunctionRecord
from app.schemas.binary import BinaryImage
from app.schemas.graph import FunctionGraph, GraphWeights

logger = logging.getLogger(__name__)


def build_sequence_graph(
    functions: List[FunctionRecord],
    image: Optional[BinaryImage] = None,
) -> FunctionGraph:
    """
    Arista dirigida de peso 1 de cada función a su sucesora en memoria dentro
    de la misma sección ejecutable. Sin imagen, dos funciones son contiguas en
    sección cuando la primera termina justo donde empieza la siguiente.
    """
    ordered = sorted(functions, key=lambda f: f.entry)
    nodes = [f.entry for f in ordered]
    edges: Dict[Tuple[int, int], float] = {}

    for current, following in zip(ordered, ordered[1:]):
        if image is not None:
            section = image.section_for(current.entry)
            same_section = section is not None and section.contains(following.entry)
        else:
            same_section = current.end == following.entry
        if same_section:
            edges[(current.entry, following.entry)] = 1.0

    return FunctionGraph(nodes=nodes, edges=edges, directed=True, source="SG")


def build_data_reference_graph(
    datarefs: List[DataRef],
    nodes: Optional[List[int]] = None,
    mode: Literal["count", "binary"] = "count",
) -> FunctionGraph:
    """Une funciones que comparten al menos una dirección; peso = direcciones compartidas"""
    by_function: Dict[int, set] = defaultdict(set)
    for ref in datarefs:
        by_function[ref.function].add(ref.data_addr)

    # índice inverso dirección -> funciones para no comparar todos los pares
    by_address: Dict[int, set] = defaultdict(set)
    for function, addresses in by_function.items():
        for addr in addresses:
            by_address[addr].add(function)

    shared: Counter = Counter()
    for functions in by_address.values():
        for u, v in combinations(sorted(functions), 2):
            shared[(u, v)] += 1

    edges = {pair: (1.0 if mode == "binary" else float(count)) for pair, count in shared.items()}
    all_nodes = nodes if nodes is not None else sorted(by_function)
    return FunctionGraph(nodes=list(all_nodes), edges=edges, directed=False, source="DRG")


def build_call_graph(callsites: List[CallSite], nodes: Optional[List[int]] = None) -> FunctionGraph:
    """Arista caller -> callee con peso igual al número de sitios de llamada"""
    counts: Counter = Counter(
        (site.caller, site.callee) for site in callsites if site.caller != site.callee
    )
    if nodes is None:
        nodes = sorted({site.caller for site in callsites} | {site.callee for site in callsites})
    edges = {pair: float(count) for pair, count in sorted(counts.items())}
    return FunctionGraph(nodes=list(nodes), edges=edges, directed=True, source="CG")


def combine(
    sg: FunctionGraph,
    drg: FunctionGraph,
    cg: FunctionGraph,
    w: GraphWeights,
) -> FunctionGraph:
    """Grafo no dirigido con peso alpha*SG + beta*DRG + gamma*CG por par {u, v}"""
    if not (set(sg.nodes) == set(drg.nodes) == set(cg.nodes)):
        raise NodeSetMismatch(
            f"conjuntos de nodos distintos: SG={len(sg.nodes)}, DRG={len(drg.nodes)}, CG={len(cg.nodes)}"
        )
    if w.alpha + w.beta + w.gamma <= 0:
        raise InvalidWeights("alpha + beta + gamma debe ser > 0")

    combined: Dict[Tuple[int, int], float] = defaultdict(float)
    for graph, coefficient in ((sg, w.alpha), (drg, w.beta), (cg, w.gamma)):
        if coefficient == 0:
            continue
        for (u, v), weight in graph.edges.items():
            combined[(min(u, v), max(u, v))] += coefficient * weight

    edges = {pair: weight for pair, weight in sorted(combined.items()) if weight > 0}
    logger.info(
        f"Grafo combinado ({w.label()}): {len(sg.nodes)} nodos, {len(edges)} aristas "
        f"(SG={len(sg.edges)}, DRG={len(drg.edges)}, CG={len(cg.edges)})"
    )
    return FunctionGraph(nodes=list(sg.nodes), edges=edges, directed=False, source="combined")


# ===================== DOCUMENTOS JSON =====================

def graph_to_document(graph: FunctionGraph) -> Dict[str, Any]:
    return {
        "nodes": [f"{node:#010x}" for node in graph.nodes],
        "directed": graph.directed,
        "source": graph.source,
        "edges": [
            {"u": f"{u:#010x}", "v": f"{v:#010x}", "weight": weight, "source": graph.source}
            for (u, v), weight in sorted(graph.edges.items())
        ],
    }


def graph_from_document(document: Dict[str, Any]) -> FunctionGraph:
    try:
        nodes = [int(node, 16) for node in document["nodes"]]
        edges: Dict[Tuple[int, int], float] = {}
        sources = set()
        for edge in document["edges"]:
            u, v = int(edge["u"], 16), int(edge["v"], 16)
            edges[(u, v)] = float(edge["weight"])
            sources.add(edge.get("source", "combined"))
        return FunctionGraph(
            nodes=nodes,
            edges=edges,
            directed=bool(document.get("directed", False)),
            source=document.get("source") or (sources.pop() if len(sources) == 1 else "combined"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"documento de grafo inválido: {e}") from e
