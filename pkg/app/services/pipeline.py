# app/services/pipeline.py
"""
Etapas del pipeline sobre un ProjectStore:

    decompose  -> graphs/, partitions/
    normalize  -> normalized/
    summarize  -> summaries/<modelo>/<dispositivo>[.normalized]
    categorize -> rankings/<modelo>/<dispositivo>[.normalized]
    evaluate   -> reports/
    report     -> tablas de texto + reports/tables.xlsx
"""
import asyncio
import logging
import re
from collections import defaultdict
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import httpx
import pandas as pd

from app.core.config import ProjectConfig, get_settings
from app.core.errors import MissingArtifact, MissingGroundTruth, SkippedNoSummaries
from app.schemas.categories import Category, CategoryRanking, FunctionSummary, ModulePrediction
from app.schemas.corpus import DecompiledFunction
from app.schemas.evaluation import CategoryReport, ModularizationReport, SimilarityStats
from app.schemas.graph import GraphWeights, Partition
from app.services.arm_analysis import extract_calls, extract_data_refs, recover_functions
from app.services.categorizer import categorize_module, load_category_definitions, select_top_k
from app.services.community import cluster_newman, modularity, partition_from_document, partition_to_document
from app.services.corpus_loader import (
    filter_by_length, load_decompiled_corpus, load_ground_truth, write_decompiled_manifest,
)
from app.services.elf_loader import build_name_address_map, load_elf
from app.services.evaluation import (
    align_clusters_to_ground_truth, category_metrics, match_clusters,
    summary_similarity, weighted_metrics,
)
from app.services.graph_builder import (
    build_call_graph, build_data_reference_graph, build_sequence_graph, combine, graph_to_document,
)
from app.services.llm_gateway import LLMGateway, TimingLedger, format_duration, with_timing
from app.services.project_store import ProjectStore, atomic_write_text, canonical_json, model_slug
from app.services.reports import (
    category_frame, export_workbook, modularization_frame, render_category_table,
    render_modularization_table, render_similarity_table, render_timing_table,
    similarity_frame, timing_frame,
)
from app.services.source_normalizer import extract_function_bodies, normalize_corpus
from app.services.summarizer import summarize_module

logger = logging.getLogger(__name__)

Source = Literal["decompiled", "normalized"]

HISTOGRAM_BINS = [0, 1, 5, 20, 100, float("inf")]
HISTOGRAM_LABELS = ["1", "2-5", "6-20", "21-100", ">100"]

_UNSAFE_FILE_CHARS = re.compile(r"[^A-Za-z0-9_.-]")


def safe_file_name(name: str) -> str:
    """Nombre de función C++ ("ns::f") apto para archivo"""
    return _UNSAFE_FILE_CHARS.sub("_", name)


def size_histogram(partition: Partition) -> pd.Series:
    sizes = pd.Series([len(members) for members in partition.clusters().values()], dtype=float)
    buckets = pd.cut(sizes, bins=HISTOGRAM_BINS, labels=HISTOGRAM_LABELS)
    return buckets.value_counts(sort=False)


def summary_record(summary: FunctionSummary) -> Dict[str, Any]:
    # la latencia no se persiste: con la caché caliente el artefacto es idéntico
    return summary.model_dump(exclude={"latency_seconds"})


def group_by_module(
    partition: Partition,
    functions: List[DecompiledFunction],
) -> Tuple[Dict[int, List[DecompiledFunction]], int]:
    """(módulo -> funciones, funciones fuera de la partición)"""
    modules: Dict[int, List[DecompiledFunction]] = defaultdict(list)
    outside = 0
    for func in functions:
        cid = partition.assignment.get(func.entry)
        if cid is None:
            outside += 1
            continue
        modules[cid].append(func)
    return dict(sorted(modules.items())), outside


class PipelineRunner:
    """
    Ejecuta las etapas de un proyecto. `transport` permite inyectar un
    transporte httpx (p. ej. ASGITransport contra el endpoint de prueba).
    """

    def __init__(
        self,
        config: ProjectConfig,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        verbose: bool = False,
        echo: Callable[[str], None] = print,
    ):
        self.config = config
        self.store = ProjectStore(config.root)
        self.transport = transport
        self.verbose = verbose
        self.echo = echo
        self.network_requests = 0

    @property
    def device(self) -> str:
        return self.config.device

    # ===================== NOMBRES DE ARTEFACTOS =====================

    def _graph_name(self, source: str) -> str:
        return f"{self.device}.{source.lower()}"

    def _model_name(self, model: str, source: Source) -> str:
        suffix = ".normalized" if source == "normalized" else ""
        return f"{model_slug(model)}/{self.device}{suffix}"

    def _gateway(self) -> LLMGateway:
        return LLMGateway(
            settings=self.config.llm,
            base_url=self.config.base_url(),
            cache_dir=self.store.cache_dir,
            api_key=get_settings().LLM_API_KEY,
            transport=self.transport,
            verbose=self.verbose,
        )

    def _models(self, models: Optional[List[str]]) -> List[str]:
        return list(models) if models else list(self.config.llm.chat_models)

    def load_partition(self) -> Tuple[Partition, Dict[str, Any]]:
        envelope = self.store.read_artifact("partitions", self.device)
        self.store.check_upstream(envelope)
        return partition_from_document(envelope["data"]), envelope

    # ===================== DECOMPOSE =====================

    def decompose(self) -> Partition:
        binary = self.config.require("binary")
        weights = GraphWeights(**self.config.weights.model_dump())

        image = load_elf(binary)
        seeds = None
        if self.config.decompiled_manifest is not None and self.config.decompiled_manifest.exists():
            # las entradas del descompilador sirven de semillas en binarios sin símbolos
            seeds = [f.entry for f in load_decompiled_corpus(self.config.decompiled_manifest)]
        functions = recover_functions(image, seeds)
        nodes = [f.entry for f in functions]

        stats: Dict[str, int] = {}
        callsites = extract_calls(image, functions, stats)
        datarefs = extract_data_refs(image, functions)

        sg = build_sequence_graph(functions, image)
        drg = build_data_reference_graph(datarefs, nodes, mode=self.config.drg_mode)
        cg = build_call_graph(callsites, nodes)
        combined = combine(sg, drg, cg, weights)

        for graph in (sg, drg, cg, combined):
            self.store.write_artifact("graphs", self._graph_name(graph.source), graph_to_document(graph))

        partition = cluster_newman(combined)
        q = modularity(combined, partition).q
        combined_key = self.store.key("graphs", self._graph_name("combined"))
        self.store.write_artifact(
            "partitions",
            self.device,
            {
                **partition_to_document(partition),
                "weights": weights.label(),
                "drg_mode": self.config.drg_mode,
                "modularity": round(q, 12),
                "call_stats": stats,
            },
            upstream=self.store.stamp(combined_key),
        )

        self.echo(
            f"{self.device}: {partition.cluster_count} modules, {len(nodes)} functions "
            f"(weights {weights.label()}, Q={q:.4f})"
        )
        self.echo("module size histogram:")
        for label, count in size_histogram(partition).items():
            self.echo(f"  {label:>7}: {count}")
        return partition

    # ===================== NORMALIZE =====================

    def normalize(self) -> int:
        source_root = self.config.require("source_root")
        binary = self.config.require("binary")

        name_map = build_name_address_map(load_elf(binary))
        functions, not_found, ambiguous = extract_function_bodies(source_root, name_map)
        normalized = normalize_corpus(functions)

        base = self.store.root / "normalized" / self.device
        corpus: List[Tuple[int, str, str]] = []
        rename_maps: Dict[str, Dict[str, str]] = {}
        for func in normalized:
            file_name = safe_file_name(func.name)
            atomic_write_text(base / "maps" / f"{file_name}.json", canonical_json(func.rename_map))
            rename_maps[func.name] = func.rename_map
            for addr in name_map.addresses_of(func.name):
                corpus.append((addr, f"{file_name}.c", func.normalized_text + "\n"))

        manifest = write_decompiled_manifest(corpus, base)
        self.store.write_artifact(
            "normalized",
            self.device,
            {
                "manifest": manifest.relative_to(self.store.root).as_posix(),
                "functions": rename_maps,
                "not_found": not_found,
                "ambiguous": ambiguous,
            },
        )
        self.echo(
            f"{self.device}: {len(normalized)} functions normalized, "
            f"{len(not_found)} names without a source definition, "
            f"{len(ambiguous)} ambiguous names skipped"
        )
        return len(normalized)

    # ===================== SUMMARIZE =====================

    def _corpus(self, source: Source) -> Tuple[List[DecompiledFunction], Dict[str, str]]:
        """(funciones filtradas por longitud, upstream extra)"""
        if source == "normalized":
            envelope = self.store.read_artifact("normalized", self.device)
            manifest = self.store.root / envelope["data"]["manifest"]
            upstream = self.store.stamp(self.store.key("normalized", self.device))
        else:
            manifest = self.config.require("decompiled_manifest")
            upstream = {}
        functions = filter_by_length(load_decompiled_corpus(manifest), self.config.length_threshold)
        return functions, upstream

    async def summarize(self, models: Optional[List[str]] = None, source: Source = "decompiled") -> None:
        partition, _ = self.load_partition()
        functions, upstream = self._corpus(source)
        modules, outside = group_by_module(partition, functions)
        if outside:
            logger.warning(f"⚠️ {outside} funciones del corpus no están en la partición")
        upstream = {**upstream, **self.store.stamp(self.store.key("partitions", self.device))}

        ledger = self._ledger()
        async with self._gateway() as gateway:
            for model in self._models(models):
                name = self._model_name(model, source)
                done = self._resume("summaries", name, upstream)

                for cid, members in modules.items():
                    if str(cid) in done:
                        continue
                    summaries = await summarize_module(cid, members, gateway, model)
                    done[str(cid)] = [summary_record(s) for s in summaries]
                    self.store.write_partial("summaries", name, {"upstream": upstream, "modules": done})

                records = [record for cid in sorted(done, key=int) for record in done[cid]]
                self.store.write_artifact("summaries", name, records, upstream=upstream)
                self.store.clear_partial("summaries", name)

                total = ledger.record(self.device, model, _stage("summarize", source), with_timing(gateway.drain_history()))
                failed = sum(1 for r in records if r.get("error"))
                self.echo(
                    f"{self.device}/{model}: {len(records)} summaries over {len(modules)} modules "
                    f"({failed} failed), LLM time {format_duration(total.seconds)}"
                    f"{' (cached)' if total.all_cached else ''}"
                )
            self.network_requests += gateway.network_requests

        self._save_ledger(ledger)

    def _resume(self, stage: str, name: str, upstream: Dict[str, str]) -> Dict[str, Any]:
        partial = self.store.read_partial(stage, name)
        if not partial:
            return {}
        if partial.get("upstream") != upstream:
            logger.warning(f"⚠️ {stage}/{name}: el parcial corresponde a otras entradas, se descarta")
            return {}
        done = dict(partial.get("modules", {}))
        logger.info(f"Reanudando {stage}/{name}: {len(done)} módulos ya procesados")
        return done

    def _ledger(self) -> TimingLedger:
        if not self.store.exists("reports", "timing"):
            return TimingLedger()
        return TimingLedger.from_document(self.store.read_data("reports", "timing"))

    def _save_ledger(self, ledger: TimingLedger) -> None:
        self.store.write_artifact("reports", "timing", ledger.to_document())

    def load_summaries(self, model: str, source: Source = "decompiled") -> Tuple[List[FunctionSummary], str]:
        name = self._model_name(model, source)
        envelope = self.store.read_artifact("summaries", name)
        self.store.check_upstream(envelope)
        return [FunctionSummary.model_validate(r) for r in envelope["data"]], self.store.key("summaries", name)

    # ===================== CATEGORIZE =====================

    async def categorize(self, models: Optional[List[str]] = None, source: Source = "decompiled") -> None:
        defs = load_category_definitions(self.config.category_definitions)
        ledger = self._ledger()

        async with self._gateway() as gateway:
            for model in self._models(models):
                summaries, summaries_key = self.load_summaries(model, source)
                upstream = self.store.stamp(summaries_key)
                name = self._model_name(model, source)
                done = self._resume("rankings", name, upstream)

                by_module: Dict[int, List[FunctionSummary]] = defaultdict(list)
                for summary in summaries:
                    by_module[summary.module].append(summary)

                async def one(cid: int, members: List[FunctionSummary]) -> None:
                    try:
                        ranking = await categorize_module(cid, members, defs, gateway, model)
                        done[str(cid)] = {
                            "ordered": [c.value for c in ranking.ordered],
                            "raw_text": ranking.raw_text,
                        }
                    except SkippedNoSummaries as e:
                        logger.warning(f"⚠️ {e}")
                        done[str(cid)] = {"skipped": f"SkippedNoSummaries: {e}"}
                    self.store.write_partial("rankings", name, {"upstream": upstream, "modules": done})

                pending = [(cid, members) for cid, members in sorted(by_module.items()) if str(cid) not in done]
                await asyncio.gather(*(one(cid, members) for cid, members in pending))

                self.store.write_artifact(
                    "rankings", name,
                    {cid: done[cid] for cid in sorted(done, key=int)},
                    upstream=upstream,
                )
                self.store.clear_partial("rankings", name)

                total = ledger.record(self.device, model, _stage("categorize", source), with_timing(gateway.drain_history()))
                self._echo_query(model, done)
                self.echo(
                    f"{self.device}/{model}: {len(done)} modules categorized, "
                    f"LLM time {format_duration(total.seconds)}{' (cached)' if total.all_cached else ''}"
                )
            self.network_requests += gateway.network_requests

        self._save_ledger(ledger)

    def _echo_query(self, model: str, done: Dict[str, Any]) -> None:
        """Modo consulta: top-k sin ground truth"""
        k = self.config.query_k
        for cid in sorted(done, key=int):
            entry = done[cid]
            if "ordered" not in entry:
                self.echo(f"  module {cid}: skipped")
                continue
            top = entry["ordered"][:k]
            self.echo(f"  module {cid}: {', '.join(top)}")

    def load_rankings(self, model: str, source: Source = "decompiled") -> Tuple[List[CategoryRanking], int]:
        """(rankings válidos, módulos omitidos)"""
        envelope = self.store.read_artifact("rankings", self._model_name(model, source))
        self.store.check_upstream(envelope)
        rankings, skipped = [], 0
        for cid, entry in envelope["data"].items():
            if "ordered" not in entry:
                skipped += 1
                continue
            rankings.append(CategoryRanking(
                module=int(cid),
                ordered=[Category(c) for c in entry["ordered"]],
                raw_text=entry.get("raw_text", ""),
            ))
        return sorted(rankings, key=lambda r: r.module), skipped

    # ===================== EVALUATE =====================

    def _ground_truth(self):
        for key in ("ground_truth_modules", "ground_truth_categories"):
            if getattr(self.config, key) is None:
                raise MissingGroundTruth(f"falta la clave '{key}' en la configuración del proyecto")
        return load_ground_truth(self.config.ground_truth_modules, self.config.ground_truth_categories)

    async def evaluate(self, models: Optional[List[str]] = None) -> None:
        gt_modules, gt_categories = self._ground_truth()
        partition, _ = self.load_partition()
        partitions_key = self.store.key("partitions", self.device)

        matches = match_clusters(partition, gt_modules, mode=self.config.matching)
        modularization = weighted_metrics(matches, device=self.device)
        self.store.write_artifact(
            "reports", f"modularization/{self.device}",
            modularization.model_dump(), upstream=self.store.stamp(partitions_key),
        )
        self.echo(render_modularization_table([modularization]))

        aligned = align_clusters_to_ground_truth(partition, gt_modules)
        category_reports: List[CategoryReport] = []
        upper_bounds: List[CategoryReport] = []
        similarity: List[SimilarityStats] = []

        async with self._gateway() as gateway:
            for model in self._models(models):
                for source in ("decompiled", "normalized"):
                    name = self._model_name(model, source)
                    if not self.store.exists("rankings", name):
                        continue
                    report = self._category_report(model, source, aligned, gt_categories)
                    self.store.write_artifact(
                        "reports", f"categories/{name}", report.model_dump(),
                        upstream=self.store.stamp(self.store.key("rankings", name)),
                    )
                    (upper_bounds if source == "normalized" else category_reports).append(report)

                stats = await self._similarity(model, gateway)
                if stats is not None:
                    similarity.append(stats)
            self.network_requests += gateway.network_requests

        if category_reports:
            self.echo(render_category_table(category_reports, upper_bounds))
        if similarity:
            self.echo(render_similarity_table(similarity))

    def _category_report(
        self,
        model: str,
        source: Source,
        aligned: Dict[int, str],
        gt_categories,
    ) -> CategoryReport:
        rankings, skipped = self.load_rankings(model, source)
        predictions: List[ModulePrediction] = []
        unlabeled = 0
        for ranking in rankings:
            gt_module = aligned.get(ranking.module)
            if gt_module is None:
                unlabeled += 1
                continue
            k = min(max(len(gt_categories.mapping.get(gt_module, ())), 1), 5)
            predictions.append(select_top_k(ranking, k, gt_module=gt_module))

        if unlabeled or skipped:
            logger.info(
                f"{self.device}/{model} ({source}): {unlabeled} clusters sin funciones etiquetadas "
                f"y {skipped} omitidos quedan fuera de la evaluación"
            )
        return category_metrics(predictions, gt_categories, device=self.device, model=model, source=source)

    async def _similarity(self, model: str, gateway: LLMGateway) -> Optional[SimilarityStats]:
        decompiled_name = self._model_name(model, "decompiled")
        normalized_name = self._model_name(model, "normalized")
        if not (self.store.exists("summaries", decompiled_name) and self.store.exists("summaries", normalized_name)):
            return None

        decompiled, decompiled_key = self.load_summaries(model, "decompiled")
        normalized, normalized_key = self.load_summaries(model, "normalized")
        upper = {s.entry: s for s in normalized if s.ok}
        pairs = [(s.summary_text, upper[s.entry].summary_text) for s in decompiled if s.ok and s.entry in upper]
        if not pairs:
            logger.warning(f"⚠️ {self.device}/{model}: sin pares de resúmenes para comparar")
            return None

        report = await summary_similarity(pairs, gateway, device=self.device, model=model)
        self.store.write_artifact(
            "reports", f"similarity/{model_slug(model)}/{self.device}", report.model_dump(),
            upstream=self.store.stamp(decompiled_key, normalized_key),
        )
        return report.entries[0]

    # ===================== REPORT =====================

    def report(self) -> Dict[str, pd.DataFrame]:
        """Reúne todos los reportes guardados (todos los dispositivos) en tablas"""
        modularization: List[ModularizationReport] = []
        categories: List[CategoryReport] = []
        upper_bounds: List[CategoryReport] = []
        similarity: List[SimilarityStats] = []

        for name in self.store.list_names("reports"):
            kind = name.split("/", 1)[0]
            if kind == "modularization":
                modularization.append(ModularizationReport.model_validate(self.store.read_data("reports", name)))
            elif kind == "categories":
                report = CategoryReport.model_validate(self.store.read_data("reports", name))
                (upper_bounds if report.source == "normalized" else categories).append(report)
            elif kind == "similarity":
                data = self.store.read_data("reports", name)
                similarity.extend(SimilarityStats.model_validate(e) for e in data["entries"])

        if not (modularization or categories or similarity):
            raise MissingArtifact("no hay reportes en reports/; ejecute evaluate primero")

        timing = self._ledger().entries()
        self.echo(render_modularization_table(modularization))
        self.echo(render_similarity_table(similarity))
        self.echo(render_category_table(categories, upper_bounds))
        self.echo(render_timing_table(timing))

        frames = {
            "Modularization": modularization_frame(modularization),
            "Similarity": similarity_frame(similarity),
            "Categories": category_frame(categories, upper_bounds),
            "Timing": timing_frame(timing),
        }
        export_workbook(self.store.root / "reports" / "tables.xlsx", frames)
        return frames


def _stage(stage: str, source: Source) -> str:
    return stage if source == "decompiled" else f"{stage} (normalized)"
