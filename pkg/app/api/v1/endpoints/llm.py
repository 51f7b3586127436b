# app/api/v1/endpoints/llm.py
"""
Endpoint LLM determinista para pruebas y demos: chat/completions y
embeddings en el esquema de facto, con contadores de uso.
"""
import asyncio
import hashlib
import logging
import re
from typing import Dict, List

import numpy as np
from fastapi import APIRouter, HTTPException

from app.core.config import get_settings
from app.schemas.categories import CANONICAL_ORDER
from app.schemas.llm import ChatRequest, EmbeddingRequest, MockStats, Role

router = APIRouter()
logger = logging.getLogger(__name__)

EMBEDDING_DIMENSION = 64

# Marcadores en el prompt para inyectar fallos desde las pruebas
FAIL_MARKER = "MOCK_FAIL"
PROSE_MARKER = "MOCK_PROSE"

KEYWORDS = {
    "data_transfer": r"\b(?:mavlink\w*|uart\w*|serial|send\w*|recv\w*|packet\w*|msg\w*|telemetry|spi|i2c|can_\w+)",
    "navigation": r"\b(?:gps\w*|waypoints?|nav\w*|position\w*|latitude|longitude|heading|route\w*|terrain)",
    "controller": r"\b(?:pid\w*|motors?|throttle|servos?|attitude|steer\w*|mix\w*)",
    "safety_check": r"\b(?:failsafe\w*|arming|battery|fence\w*|crash\w*|health\w*|checks?|emergency)",
}
_KEYWORD_PATTERNS = {name: re.compile(pattern, re.IGNORECASE) for name, pattern in KEYWORDS.items()}

SUMMARY_TEMPLATES = {
    "data_transfer": "Packs and sends a telemetry message to the ground station over a serial link.",
    "navigation": "Updates the vehicle position estimate from GPS data and tracks the next waypoint.",
    "controller": "Runs a PID control loop and writes the resulting motor and servo outputs.",
    "safety_check": "Monitors battery and sensor health and triggers the failsafe when a check fails.",
    "other": "Performs a generic helper computation on its arguments and returns the result.",
}

# contadores globales del proceso
_stats = MockStats()


def keyword_scores(text: str) -> Dict[str, int]:
    scores = {name: len(pattern.findall(text)) for name, pattern in _KEYWORD_PATTERNS.items()}
    scores["other"] = 0
    if not any(scores.values()):
        scores["other"] = 1
    return scores


def ranked_categories(text: str) -> List[str]:
    scores = keyword_scores(text)
    order = [c.value for c in CANONICAL_ORDER]
    return sorted(order, key=lambda name: (-scores[name], order.index(name)))


def summarize_text(code: str) -> str:
    return SUMMARY_TEMPLATES[ranked_categories(code)[0]]


def _summaries_section(prompt: str) -> str:
    start = prompt.find("### Function summaries")
    end = prompt.find("### Instruction")
    if start < 0:
        return prompt
    return prompt[start:end if end > start else None]


def hashed_embedding(text: str, dimension: int = EMBEDDING_DIMENSION) -> List[float]:
    """Bolsa de palabras con hashing; textos iguales dan vectores iguales"""
    vector = np.zeros(dimension)
    for word in re.findall(r"[a-z0-9_]+", text.lower()):
        index = int(hashlib.sha256(word.encode("utf-8")).hexdigest(), 16) % dimension
        vector[index] += 1.0
    return vector.tolist()


def answer(request: ChatRequest) -> str:
    """Resumen si el prompt trae código, ranking si trae definiciones de categorías"""
    prompt = "\n".join(m.content for m in request.messages if m.role == Role.user)

    if "### Category definitions" in prompt:
        retried = any(m.role == Role.assistant for m in request.messages)
        if PROSE_MARKER in prompt and not retried:
            return "I am not sure what this module does."
        return "\n".join(ranked_categories(_summaries_section(prompt)))

    return summarize_text(prompt)


def _track(kind: str):
    _stats.hits += 1
    if kind == "chat":
        _stats.chat_hits += 1
    else:
        _stats.embedding_hits += 1
    _stats.in_flight += 1
    _stats.peak_in_flight = max(_stats.peak_in_flight, _stats.in_flight)


def _release():
    _stats.in_flight -= 1


async def _simulate_latency():
    latency = get_settings().MOCK_LATENCY_SECONDS
    if latency > 0:
        await asyncio.sleep(latency)


@router.post("/chat/completions")
async def chat_completions(request: ChatRequest):
    _track("chat")
    try:
        await _simulate_latency()
        if any(FAIL_MARKER in m.content for m in request.messages):
            logger.warning("⚠️ Fallo simulado en chat/completions")
            raise HTTPException(status_code=500, detail="fallo simulado")

        text = answer(request)
        return {
            "id": "mock-" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:12],
            "object": "chat.completion",
            "model": request.model,
            "choices": [
                {"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}
            ],
            "usage": {"prompt_tokens": 0, "completion_tokens": len(text.split()), "total_tokens": 0},
        }
    finally:
        _release()


@router.post("/embeddings")
async def embeddings(request: EmbeddingRequest):
    _track("embeddings")
    try:
        await _simulate_latency()
        return {
            "object": "list",
            "model": request.model,
            "data": [
                {"object": "embedding", "index": i, "embedding": hashed_embedding(text)}
                for i, text in enumerate(request.texts())
            ],
        }
    finally:
        _release()


@router.get("/stats", response_model=MockStats)
async def get_stats():
    return _stats


@router.post("/stats/reset", response_model=MockStats)
async def reset_stats():
    for field in MockStats.model_fields:
        setattr(_stats, field, 0)
    return _stats
