# app/services/categorizer.py
"""
Recuperación de categorías por módulo: prompt con definiciones de experto y
resúmenes de funciones, parseo del ranking devuelto y selección top-k.
"""
import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional

from app.core.config import LLMSettings
from app.core.constants import (
    CATEGORY_INSTRUCTION, CATEGORY_SYNONYMS, CATEGORY_SYSTEM_PROMPT,
    DEFAULT_CATEGORY_DEFINITIONS, REFORMAT_INSTRUCTION,
)
from app.core.errors import (
    BadK, MalformedJson, MissingDefinition, MissingFile, NoSummaries,
    SkippedNoSummaries, UnknownCategory, UnparseableRanking,
)
from app.schemas.categories import (
    CANONICAL_ORDER, Category, CategoryDefinition, CategoryRanking,
    FunctionSummary, ModulePrediction,
)
from app.schemas.llm import ChatMessage, ChatRequest, Role
from app.services.llm_gateway import LLMGateway

logger = logging.getLogger(__name__)

_SYNONYM_PATTERN = re.compile(
    "|".join(f"(?P<{category}>\\b{pattern}\\b)" for pattern, category in CATEGORY_SYNONYMS),
    re.IGNORECASE,
)


def load_category_definitions(path: Optional[Path] = None) -> List[CategoryDefinition]:
    """Definiciones por defecto, sobrescritas por un JSON {categoria: definicion}"""
    raw: Dict[str, str] = dict(DEFAULT_CATEGORY_DEFINITIONS)

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise MissingFile(f"no existe el archivo de definiciones {path}")
        try:
            overrides = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise MalformedJson(f"{path.name}: {e}") from e
        for name, text in overrides.items():
            try:
                raw[Category(name).value] = text
            except ValueError as e:
                raise UnknownCategory(f"{path.name}: categoría desconocida {name!r}") from e

    return [CategoryDefinition(category=c, definition_text=raw[c.value]) for c in CANONICAL_ORDER]


def build_category_prompt(
    defs: List[CategoryDefinition],
    summaries: List[FunctionSummary],
    model: str = "codestral-22b",
    settings: Optional[LLMSettings] = None,
) -> ChatRequest:
    """Tres secciones en orden: definiciones, resúmenes numerados, instrucción"""
    by_category = {d.category: d for d in defs}
    missing = [c.value for c in CANONICAL_ORDER if c not in by_category]
    if missing:
        raise MissingDefinition(f"faltan definiciones para: {', '.join(missing)}")

    usable = [s for s in summaries if s.ok]
    if not usable:
        raise NoSummaries("el módulo no tiene resúmenes disponibles")

    definitions = "\n".join(f"- {by_category[c].definition_text}" for c in CANONICAL_ORDER)
    numbered = "\n".join(f"{i}. {s.summary_text}" for i, s in enumerate(usable, start=1))
    names = ", ".join(c.value for c in CANONICAL_ORDER)

    content = (
        f"### Category definitions\n{definitions}\n\n"
        f"### Function summaries\n{numbered}\n\n"
        f"### Instruction\n{CATEGORY_INSTRUCTION}\nCategory names: {names}."
    )

    settings = settings or LLMSettings()
    return ChatRequest(
        model=model,
        messages=[
            ChatMessage(role=Role.system, content=CATEGORY_SYSTEM_PROMPT),
            ChatMessage(role=Role.user, content=content),
        ],
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
    )


def parse_ranking(raw: str, module: int = 0) -> CategoryRanking:
    """
    El orden de primera aparición define el ranking; las categorías no
    mencionadas se agregan en orden canónico.
    """
    ordered: List[Category] = []
    for match in _SYNONYM_PATTERN.finditer(raw or ""):
        category = Category(match.lastgroup)
        if category not in ordered:
            ordered.append(category)

    if not ordered:
        raise UnparseableRanking(f"ninguna categoría reconocida en la respuesta: {raw[:80]!r}")

    ordered.extend(c for c in CANONICAL_ORDER if c not in ordered)
    return CategoryRanking(module=module, ordered=ordered, raw_text=raw)


def select_top_k(ranking: CategoryRanking, k: int, gt_module: Optional[str] = None) -> ModulePrediction:
    if not 1 <= k <= len(CANONICAL_ORDER):
        raise BadK(f"k debe estar entre 1 y {len(CANONICAL_ORDER)} (recibido {k})")
    return ModulePrediction(
        module=ranking.module, selected=set(ranking.ordered[:k]), k=k, gt_module=gt_module,
    )


async def categorize_module(
    module_id: int,
    summaries: List[FunctionSummary],
    defs: List[CategoryDefinition],
    gateway: LLMGateway,
    model: str,
) -> CategoryRanking:
    """Emite el prompt y parsea; ante una respuesta sin categorías reintenta una vez pidiendo el formato"""
    if not any(s.ok for s in summaries):
        raise SkippedNoSummaries(f"módulo {module_id}: todos los resúmenes fallaron")

    request = build_category_prompt(defs, summaries, model, gateway.settings)
    response = await gateway.chat(request)

    try:
        return parse_ranking(response.text, module_id)
    except UnparseableRanking:
        logger.warning(f"⚠️ Módulo {module_id}: ranking ilegible, se pide reformatear")

    retry = ChatRequest(
        model=request.model,
        messages=[
            *request.messages,
            ChatMessage(role=Role.assistant, content=response.text),
            ChatMessage(role=Role.user, content=REFORMAT_INSTRUCTION),
        ],
        temperature=request.temperature,
        max_tokens=request.max_tokens,
    )
    second = await gateway.chat(retry)
    return parse_ranking(second.text, module_id)
