# app/services/summarizer.py
import asyncio
import logging
from typing import List, Optional, Tuple

from app.core.config import LLMSettings
from app.core.constants import SUMMARY_INSTRUCTION, SUMMARY_SYSTEM_PROMPT, TRUNCATION_MARKER
from app.core.errors import EmptyText, EndpointError, EndpointUnreachable
from app.schemas.categories import FunctionSummary
from app.schemas.corpus import DecompiledFunction
from app.schemas.llm import ChatMessage, ChatRequest, Role
from app.services.llm_gateway import LLMGateway

logger = logging.getLogger(__name__)


def _fit_to_budget(text: str, budget: int) -> Tuple[str, bool]:
    if len(text) <= budget:
        return text, False
    # corta en el último salto de línea dentro del presupuesto
    cut = text.rfind("\n", 0, budget)
    body = text[:cut if cut > 0 else budget].rstrip()
    return f"{body}\n{TRUNCATION_MARKER}", True


def build_summarization_prompt(
    func: DecompiledFunction,
    model: str = "codestral-22b",
    settings: Optional[LLMSettings] = None,
) -> ChatRequest:
    """
    Prompt de resumen: contexto de ingeniería inversa en el mensaje de sistema,
    instrucción y texto verbatim de la función en el de usuario.
    """
    if not func.text.strip():
        raise EmptyText(f"función {func.entry:#x} sin texto")

    settings = settings or LLMSettings()
    code, _ = _fit_to_budget(func.text, settings.prompt_char_budget)

    request = ChatRequest(
        model=model,
        messages=[
            ChatMessage(role=Role.system, content=SUMMARY_SYSTEM_PROMPT),
            ChatMessage(role=Role.user, content=f"{SUMMARY_INSTRUCTION}\n\n{code}"),
        ],
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
    )
    return request


async def _summarize_one(
    func: DecompiledFunction,
    module_id: int,
    model: str,
    gateway: LLMGateway,
) -> FunctionSummary:
    request = build_summarization_prompt(func, model, gateway.settings)
    truncated = len(func.text) > gateway.settings.prompt_char_budget
    try:
        response = await gateway.chat(request)
    except EndpointUnreachable:
        # sin endpoint no hay nada que degradar: aborta la etapa
        raise
    except EndpointError as e:
        logger.error(f"❌ Resumen fallido para {func.entry:#x} (módulo {module_id}): {e}")
        return FunctionSummary(
            entry=func.entry, module=module_id, model=model,
            truncated=truncated, error=f"{type(e).__name__}: {e}",
        )

    text = response.text.strip()
    if not text:
        return FunctionSummary(
            entry=func.entry, module=module_id, model=model,
            truncated=truncated, latency_seconds=response.latency_seconds,
            error="EmptyText: el modelo devolvió un resumen vacío",
        )

    return FunctionSummary(
        entry=func.entry,
        module=module_id,
        summary_text=text,
        model=model,
        truncated=truncated,
        latency_seconds=response.latency_seconds,
    )


async def summarize_module(
    module_id: int,
    functions: List[DecompiledFunction],
    gateway: LLMGateway,
    model: str,
) -> List[FunctionSummary]:
    """
    Un resumen por función (ya filtrada por longitud). Los fallos tras los
    reintentos quedan como marcadores con `error`, salvo EndpointUnreachable,
    que se propaga; el resultado sale ordenado por dirección sin importar el
    orden de finalización.
    """
    ordered = sorted(functions, key=lambda f: f.entry)
    summaries = await asyncio.gather(
        *(_summarize_one(func, module_id, model, gateway) for func in ordered)
    )

    failed = sum(1 for s in summaries if not s.ok)
    if failed:
        logger.warning(f"⚠️ Módulo {module_id}: {failed}/{len(summaries)} resúmenes fallidos")
    else:
        logger.debug(f"Módulo {module_id}: {len(summaries)} resúmenes")
    return list(summaries)
