# app/services/reports.py
"""
Tablas de resultados (texto alineado y libro Excel): modularización,
similitud de resúmenes, categorías y tiempos.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from app.schemas.categories import CANONICAL_ORDER
from app.schemas.evaluation import CategoryReport, ModularizationReport, SimilarityStats
from app.schemas.llm import TimingEntry
from app.services.llm_gateway import format_duration

logger = logging.getLogger(__name__)

CATEGORY_LABELS = {
    "data_transfer": "Data Transfer",
    "navigation": "Navigation",
    "controller": "Controller",
    "safety_check": "Safety Check",
    "other": "Other",
}

METRIC_LABELS = (("precision", "P"), ("recall", "R"), ("f1", "F1"))


# ===================== CELDAS =====================

def format_metric(value: float) -> str:
    return f"{value:.2f}"


def format_similarity(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def format_upper_bound(value: float, upper: Optional[float] = None) -> str:
    """Celda de categoría con la cota superior (fuente normalizada) entre paréntesis"""
    if upper is None:
        return format_metric(value)
    return f"{format_metric(value)} ({format_metric(upper)})"


def format_modularization_row(report: ModularizationReport) -> str:
    return (
        f"{report.module_count} modules, {report.function_count} functions, "
        f"{format_metric(report.p_w)}/{format_metric(report.r_w)}/{format_metric(report.f1_w)}"
    )


# ===================== TABLAS =====================

def modularization_frame(reports: List[ModularizationReport]) -> pd.DataFrame:
    rows = [
        {
            "Device": r.device,
            "Modules": r.module_count,
            "Functions": r.function_count,
            "P_w": format_metric(r.p_w),
            "R_w": format_metric(r.r_w),
            "F1_w": format_metric(r.f1_w),
        }
        for r in sorted(reports, key=lambda r: r.device)
    ]
    return pd.DataFrame(rows, columns=["Device", "Modules", "Functions", "P_w", "R_w", "F1_w"])


def similarity_frame(entries: List[SimilarityStats]) -> pd.DataFrame:
    """Filas por dispositivo, una columna por modelo"""
    if not entries:
        return pd.DataFrame(columns=["Device"])
    df = pd.DataFrame(
        [
            {"Device": e.device, "Model": e.model, "Cell": format_similarity(e.mean, e.std)}
            for e in entries
        ]
    )
    table = df.pivot(index="Device", columns="Model", values="Cell").sort_index()
    table.columns.name = None
    return table.reset_index()


def category_frame(
    reports: List[CategoryReport],
    upper_bounds: Optional[List[CategoryReport]] = None,
) -> pd.DataFrame:
    """
    Filas (dispositivo, categoría); por modelo columnas P/R/F1. Si hay
    reportes sobre fuente normalizada, su valor va entre paréntesis.
    """
    upper_index: Dict[tuple, CategoryReport] = {
        (r.device, r.model): r for r in (upper_bounds or [])
    }
    models = sorted({r.model for r in reports})
    devices = sorted({r.device for r in reports})
    by_key = {(r.device, r.model): r for r in reports}

    rows = []
    for device in devices:
        for category in CANONICAL_ORDER:
            row = {"Device": device, "Category": CATEGORY_LABELS[category.value]}
            for model in models:
                report = by_key.get((device, model))
                upper = upper_index.get((device, model))
                for field, label in METRIC_LABELS:
                    column = f"{model} {label}" if len(models) > 1 else label
                    if report is None:
                        row[column] = ""
                        continue
                    value = getattr(report.scores[category.value], field)
                    bound = getattr(upper.scores[category.value], field) if upper else None
                    row[column] = format_upper_bound(value, bound)
            rows.append(row)
    return pd.DataFrame(rows)


def timing_frame(entries: List[TimingEntry]) -> pd.DataFrame:
    rows = [
        {
            "Device": e.device,
            "Model": e.model,
            "Stage": e.stage,
            "Time": format_duration(e.seconds),
            "Requests": e.requests,
            "Cached": "yes" if e.all_cached else ("partial" if e.cached_requests else "no"),
        }
        for e in entries
    ]
    return pd.DataFrame(rows, columns=["Device", "Model", "Stage", "Time", "Requests", "Cached"])


def _render(df: pd.DataFrame, title: str) -> str:
    if df.empty:
        return f"{title}\n(sin datos)\n"
    return f"{title}\n{df.to_string(index=False)}\n"


def render_modularization_table(reports: List[ModularizationReport]) -> str:
    return _render(modularization_frame(reports), "Modularization (weighted P/R/F1)")


def render_similarity_table(entries: List[SimilarityStats]) -> str:
    return _render(similarity_frame(entries), "Summary similarity (cosine mean ± std)")


def render_category_table(
    reports: List[CategoryReport],
    upper_bounds: Optional[List[CategoryReport]] = None,
) -> str:
    title = "Module categorization" + (" (upper bound in parentheses)" if upper_bounds else "")
    return _render(category_frame(reports, upper_bounds), title)


def render_timing_table(entries: List[TimingEntry]) -> str:
    return _render(timing_frame(entries), "LLM time per stage")


def export_workbook(path: Path, frames: Dict[str, pd.DataFrame]) -> Path:
    """Una hoja por tabla"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        for sheet, df in frames.items():
            df.to_excel(writer, sheet_name=sheet[:31], index=False)
    logger.info(f"✅ Libro de reportes escrito en {path}")
    return path
