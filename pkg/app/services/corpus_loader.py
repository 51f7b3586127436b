# app/services/corpus_loader.py
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

from pydantic import ValidationError

from app.core.constants import DEFAULT_LENGTH_THRESHOLD
from app.core.errors import (
    BadHex, DuplicateEntry, EmptyCategorySet, InputError, MalformedJson,
    MissingFile, UnknownCategory,
)
from app.schemas.categories import Category
from app.schemas.corpus import (
    DecompiledFunction, GroundTruthCategories, GroundTruthModules, ManifestRow,
)

logger = logging.getLogger(__name__)


def parse_hex_address(value: str) -> int:
    """Dirección hexadecimal "0x08001234" (el prefijo es opcional)"""
    try:
        return int(str(value).strip(), 16)
    except ValueError as e:
        raise BadHex(f"dirección hexadecimal inválida: {value!r}") from e


def _read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"no existe {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise MalformedJson(f"{path.name}: JSON inválido ({e})") from e


def load_decompiled_corpus(manifest: Path) -> List[DecompiledFunction]:
    """Lee el manifiesto [{entry, file}] y el texto descompilado de cada función"""
    manifest = Path(manifest)
    rows = _read_json(manifest)
    if not isinstance(rows, list):
        raise MalformedJson(f"{manifest.name}: se esperaba un arreglo JSON")

    base = manifest.parent
    functions: List[DecompiledFunction] = []
    seen = set()

    for raw in rows:
        try:
            row = ManifestRow.model_validate(raw)
        except ValidationError as e:
            raise MalformedJson(f"{manifest.name}: fila inválida {raw!r}") from e

        entry = parse_hex_address(row.entry)
        if entry in seen:
            raise DuplicateEntry(f"{manifest.name}: entrada {entry:#x} repetida")
        seen.add(entry)

        path = base / row.file
        if not path.exists():
            raise MissingFile(f"falta el archivo descompilado {row.file} ({entry:#x})")

        text = path.read_text(encoding="utf-8")
        functions.append(DecompiledFunction.from_text(entry, text))

    logger.info(f"📋 Corpus descompilado: {len(functions)} funciones desde {manifest.name}")
    return functions


def write_decompiled_manifest(
    functions: List[Tuple[int, str, str]],
    directory: Path,
) -> Path:
    """
    Escribe un corpus en formato manifiesto: cada tupla (entrada, nombre de
    archivo, texto) genera un archivo bajo `directory` y una fila del manifiesto.
    """
    directory = Path(directory)
    (directory / "funcs").mkdir(parents=True, exist_ok=True)

    rows = []
    for entry, filename, text in sorted(functions):
        relative = f"funcs/{filename}"
        (directory / relative).write_text(text, encoding="utf-8")
        rows.append({"entry": f"{entry:#010x}", "file": relative})

    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return manifest


def filter_by_length(
    functions: List[DecompiledFunction],
    threshold: int = DEFAULT_LENGTH_THRESHOLD,
) -> List[DecompiledFunction]:
    if threshold < 1:
        raise InputError(f"el umbral de líneas debe ser >= 1 (recibido {threshold})")
    kept = [f for f in functions if f.line_count >= threshold]
    logger.debug(f"Filtro de longitud {threshold}: {len(kept)}/{len(functions)} funciones")
    return kept


def _parse_categories(module: str, values: Any) -> frozenset:
    if not isinstance(values, list):
        raise MalformedJson(f"{module}: se esperaba una lista de categorías")
    if not values:
        raise EmptyCategorySet(f"{module}: conjunto de categorías vacío")

    categories = set()
    for value in values:
        try:
            categories.add(Category(str(value).strip().lower()))
        except ValueError as e:
            raise UnknownCategory(f"{module}: categoría desconocida {value!r}") from e
    return frozenset(categories)


def load_ground_truth(
    modules_path: Path,
    categories_path: Path,
) -> Tuple[GroundTruthModules, GroundTruthCategories]:
    modules_raw = _read_json(modules_path)
    categories_raw = _read_json(categories_path)

    if not isinstance(modules_raw, dict) or not isinstance(categories_raw, dict):
        raise MalformedJson("los archivos de ground truth deben ser objetos JSON")

    mapping: Dict[int, str] = {}
    for entry, module in modules_raw.items():
        if not isinstance(module, str) or not module:
            raise MalformedJson(f"{entry}: nombre de módulo inválido {module!r}")
        mapping[parse_hex_address(entry)] = module

    categories = {
        module: _parse_categories(module, values) for module, values in categories_raw.items()
    }

    modules = GroundTruthModules(mapping=mapping)
    gt_categories = GroundTruthCategories(mapping=categories)

    unlabeled = set(modules.modules()) - set(categories)
    if unlabeled:
        logger.warning(f"⚠️ {len(unlabeled)} módulos sin categorías en ground truth")

    logger.info(
        f"Ground truth: {len(mapping)} funciones en {len(modules.modules())} módulos, "
        f"{len(categories)} módulos categorizados"
    )
    return modules, gt_categories
