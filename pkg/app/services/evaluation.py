# app/services/evaluation.py
"""
Métricas de evaluación: P/R/F1 ponderados de la modularización contra el
ground truth, P/R/F1 por categoría y similitud coseno entre resúmenes.
"""
import asyncio
import logging
from collections import Counter
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np

from app.core.errors import (
    EmptyGroundTruth, InputError, MissingGroundTruth, UncoveredFunction, ZeroVector,
)
from app.schemas.categories import CANONICAL_ORDER, ModulePrediction
from app.schemas.corpus import GroundTruthCategories, GroundTruthModules
from app.schemas.evaluation import (
    CategoryReport, CategoryScore, ModularizationReport, ModuleMatch,
    SimilarityReport, SimilarityStats,
)
from app.schemas.graph import Partition
from app.services.llm_gateway import LLMGateway

logger = logging.getLogger(__name__)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _module_match(
    gt_module: str,
    members: set,
    cluster_id,
    cluster: set,
    covered: set,
) -> ModuleMatch:
    if cluster_id is None:
        tp, fp, fn = 0, 0, len(members)
    else:
        tp = len(members & cluster)
        # solo cuentan como FP las funciones que tienen etiqueta en el ground truth
        fp = len((cluster & covered) - members)
        fn = len(members - cluster)

    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return ModuleMatch(
        gt_module=gt_module, predicted_cluster=cluster_id,
        tp=tp, fp=fp, fn=fn, p_i=p, r_i=r, f1_i=_f1(p, r), n_i=len(members),
    )


def match_clusters(
    predicted: Partition,
    gt: GroundTruthModules,
    mode: Literal["max_overlap", "one_to_one"] = "max_overlap",
) -> List[ModuleMatch]:
    """
    max_overlap: cada módulo real va al cluster con el que más funciones
    comparte (empate -> menor id); varios módulos pueden ir al mismo cluster.
    one_to_one: emparejamiento voraz por solapamiento decreciente sin repetir cluster.
    """
    covered = set(gt.mapping)
    missing = covered - set(predicted.assignment)
    if missing:
        sample = ", ".join(f"{addr:#x}" for addr in sorted(missing)[:5])
        raise UncoveredFunction(f"{len(missing)} funciones del ground truth sin cluster: {sample}")

    clusters = {cid: set(members) for cid, members in predicted.clusters().items()}
    modules = gt.modules()

    overlaps: Dict[str, Counter] = {
        name: Counter(predicted.assignment[f] for f in members)
        for name, members in modules.items()
    }

    chosen: Dict[str, object] = {}
    if mode == "max_overlap":
        for name, counts in overlaps.items():
            chosen[name] = min(counts, key=lambda cid: (-counts[cid], cid))
    else:
        candidates = sorted(
            (-count, name, cid)
            for name, counts in overlaps.items()
            for cid, count in counts.items()
        )
        used = set()
        for _, name, cid in candidates:
            if name in chosen or cid in used:
                continue
            chosen[name] = cid
            used.add(cid)

    matches = []
    for name, members in modules.items():
        cid = chosen.get(name)
        matches.append(_module_match(
            name, set(members), cid, clusters.get(cid, set()), covered,
        ))
    return matches


def weighted_metrics(matches: List[ModuleMatch], device: str = "") -> ModularizationReport:
    """P_w = Σ P_i·n_i / N_f (análogo para R_w y F1_w)"""
    n_f = sum(m.n_i for m in matches)
    if n_f == 0:
        raise EmptyGroundTruth("el ground truth no contiene funciones")

    def weighted(values: Sequence[float]) -> float:
        total = sum(v * m.n_i for v, m in zip(values, matches)) / n_f
        return min(max(total, 0.0), 1.0)

    report = ModularizationReport(
        device=device,
        module_count=len(matches),
        function_count=n_f,
        p_w=weighted([m.p_i for m in matches]),
        r_w=weighted([m.r_i for m in matches]),
        f1_w=weighted([m.f1_i for m in matches]),
        matches=matches,
    )
    logger.info(
        f"📊 {device or 'modularización'}: {report.module_count} módulos, {n_f} funciones, "
        f"P_w={report.p_w:.2f} R_w={report.r_w:.2f} F1_w={report.f1_w:.2f}"
    )
    return report


def align_clusters_to_ground_truth(predicted: Partition, gt: GroundTruthModules) -> Dict[int, str]:
    """Módulo real mayoritario de cada cluster (empate -> nombre menor); clusters sin etiquetas quedan fuera"""
    aligned: Dict[int, str] = {}
    for cid, members in predicted.clusters().items():
        counts = Counter(gt.mapping[f] for f in members if f in gt.mapping)
        if counts:
            aligned[cid] = min(counts, key=lambda name: (-counts[name], name))
    return aligned


def category_metrics(
    predictions: List[ModulePrediction],
    gt: GroundTruthCategories,
    device: str = "",
    model: str = "",
    source: str = "decompiled",
) -> CategoryReport:
    counts = {c: {"tp": 0, "fp": 0, "fn": 0} for c in CANONICAL_ORDER}

    for prediction in predictions:
        key = prediction.gt_module if prediction.gt_module is not None else str(prediction.module)
        if key not in gt.mapping:
            raise MissingGroundTruth(f"módulo {key} sin categorías de ground truth")
        truth = set(gt.mapping[key])

        for category in CANONICAL_ORDER:
            selected = category in prediction.selected
            labeled = category in truth
            if selected and labeled:
                counts[category]["tp"] += 1
            elif selected:
                counts[category]["fp"] += 1
            elif labeled:
                counts[category]["fn"] += 1

    scores = {}
    for category, c in counts.items():
        precision = _ratio(c["tp"], c["tp"] + c["fp"])
        recall = _ratio(c["tp"], c["tp"] + c["fn"])
        scores[category.value] = CategoryScore(
            **c, precision=precision, recall=recall, f1=_f1(precision, recall),
        )
    return CategoryReport(device=device, model=model, source=source, scores=scores)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise InputError(f"dimensiones distintas: {a.shape} vs {b.shape}")

    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        raise ZeroVector("no se define el coseno con un vector nulo")
    return float(np.clip(np.dot(a, b) / norm, -1.0, 1.0))


async def summary_similarity(
    pairs: List[Tuple[str, str]],
    gateway: LLMGateway,
    device: str = "",
    model: str = "",
) -> SimilarityReport:
    """Media ± desviación estándar (poblacional) del coseno entre resúmenes emparejados"""
    if not pairs:
        raise InputError("no hay pares de resúmenes para comparar")

    async def one(pair: Tuple[str, str]) -> float:
        left, right = await asyncio.gather(gateway.embed(pair[0]), gateway.embed(pair[1]))
        return cosine(left.values, right.values)

    values = list(await asyncio.gather(*(one(pair) for pair in pairs)))
    stats = SimilarityStats(
        device=device,
        model=model,
        mean=float(np.clip(np.mean(values), -1.0, 1.0)),
        std=float(np.std(values)),
        pairs=len(values),
    )
    logger.info(f"Similitud {device}/{model}: {stats.mean:.2f} ± {stats.std:.2f} ({stats.pairs} pares)")
    return SimilarityReport(entries=[stats], cosines={f"{device}/{model}": values})
