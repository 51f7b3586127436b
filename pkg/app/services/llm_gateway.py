# app/services/llm_gateway.py
"""
Acceso a chat/completions y embeddings sobre HTTP con caché persistente,
reintentos con backoff exponencial y captura de tiempos.
"""
import asyncio
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, TypeVar

import httpx
from tenacity import AsyncRetrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from app.core.config import LLMSettings
from app.core.errors import (
    EmptyText, EndpointUnreachable, HttpError, MalformedResponse, RetriesExhausted,
)
from app.schemas.llm import CacheKey, ChatRequest, ChatResponse, EmbeddingVector, TimingEntry, TimingTotal
from app.services.project_store import atomic_write_text

logger = logging.getLogger(__name__)

T = TypeVar("T")


class _TransientStatus(Exception):
    """5xx o 429: se reintenta"""

    def __init__(self, status: int):
        self.status = status
        super().__init__(f"HTTP {status}")


def cache_key(kind: str, model: str, body: Dict[str, Any]) -> CacheKey:
    canonical = json.dumps(
        {"kind": kind, "model": model, "body": body},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False,
    )
    return CacheKey(digest=hashlib.sha256(canonical.encode("utf-8")).hexdigest())


class LLMGateway:
    """
    Cliente del endpoint LLM. Seguro para uso concurrente dentro de un event
    loop; las peticiones en vuelo se limitan con `settings.concurrency`.
    """

    def __init__(
        self,
        settings: LLMSettings,
        base_url: str,
        cache_dir: Optional[Path] = None,
        api_key: Optional[str] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        verbose: bool = False,
    ):
        self.settings = settings
        self.base_url = base_url.rstrip("/")
        self.cache_dir = Path(cache_dir) if cache_dir is not None and settings.cache else None
        self.verbose = verbose
        self.network_requests = 0
        self.history: List[ChatResponse] = []
        self._dimensions: Dict[str, int] = {}
        self._semaphore = asyncio.Semaphore(settings.concurrency)

        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.AsyncClient(
            transport=transport,
            headers=headers,
            timeout=httpx.Timeout(settings.timeout_seconds),
        )

    async def __aenter__(self) -> "LLMGateway":
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.aclose()

    async def aclose(self) -> None:
        await self._client.aclose()

    # ===================== CACHÉ =====================

    def _cache_path(self, key: CacheKey) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key.digest}.json"

    def _cache_get(self, key: CacheKey) -> Optional[str]:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def _cache_put(self, key: CacheKey, raw: str) -> None:
        path = self._cache_path(key)
        if path is not None:
            atomic_write_text(path, raw)

    def _cache_drop(self, key: CacheKey) -> None:
        path = self._cache_path(key)
        if path is not None:
            path.unlink(missing_ok=True)

    # ===================== HTTP =====================

    async def _post(self, route: str, body: Dict[str, Any]) -> str:
        url = f"{self.base_url}{route}"
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self.settings.max_retries + 1),
            wait=wait_exponential(multiplier=self.settings.retry_backoff_seconds, max=30),
            retry=retry_if_exception_type((_TransientStatus, httpx.TransportError)),
            reraise=True,
        )

        try:
            async for attempt in retrying:
                with attempt:
                    async with self._semaphore:
                        self.network_requests += 1
                        response = await self._client.post(url, json=body)

                    if response.status_code == 429 or response.status_code >= 500:
                        logger.warning(
                            f"⚠️ {route} respondió {response.status_code} "
                            f"(intento {attempt.retry_state.attempt_number})"
                        )
                        raise _TransientStatus(response.status_code)
                    if response.status_code >= 400:
                        raise HttpError(response.status_code, f"{route}: HTTP {response.status_code} {response.text[:200]}")
                    return response.text
        except _TransientStatus as e:
            raise RetriesExhausted(
                f"{route}: HTTP {e.status} tras {self.settings.max_retries + 1} intentos"
            ) from e
        except httpx.TransportError as e:
            raise EndpointUnreachable(f"no se pudo contactar {url}: {e}") from e

        raise RetriesExhausted(f"{route}: sin respuesta")

    async def _request(
        self,
        kind: str,
        route: str,
        model: str,
        body: Dict[str, Any],
        parse: Callable[[str], T],
    ) -> Tuple[T, float, bool]:
        """
        (respuesta parseada, latencia, desde_caché). Solo se guarda en caché
        un cuerpo que `parse` acepta; una entrada de caché que ya no parsea
        se descarta y se vuelve a pedir al endpoint.
        """
        key = cache_key(kind, model, body)
        started = time.perf_counter()

        cached = self._cache_get(key)
        if cached is not None:
            try:
                return parse(cached), time.perf_counter() - started, True
            except MalformedResponse as e:
                logger.warning(f"⚠️ entrada de caché {key.digest[:12]} inválida, se descarta: {e}")
                self._cache_drop(key)

        raw = await self._post(route, body)
        parsed = parse(raw)
        latency = time.perf_counter() - started
        self._cache_put(key, raw)
        return parsed, latency, False

    # ===================== OPERACIONES =====================

    @staticmethod
    def _chat_text(raw: str) -> str:
        try:
            text = json.loads(raw)["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as e:
            raise MalformedResponse(f"respuesta de chat inválida: {e}") from e
        if not isinstance(text, str):
            raise MalformedResponse("respuesta de chat sin texto")
        return text

    @staticmethod
    def _embedding_values(raw: str) -> List[float]:
        try:
            values = [float(v) for v in json.loads(raw)["data"][0]["embedding"]]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as e:
            raise MalformedResponse(f"respuesta de embeddings inválida: {e}") from e
        if not values:
            raise MalformedResponse("vector de embedding vacío")
        return values

    async def chat(self, request: ChatRequest) -> ChatResponse:
        body = request.body()
        digest = cache_key("chat", request.model, body).digest[:12]
        if self.verbose:
            logger.debug(f"Prompt {digest}:\n{request.messages[-1].content}")

        try:
            text, latency, from_cache = await self._request(
                "chat", "/chat/completions", request.model, body, self._chat_text,
            )
        except MalformedResponse as e:
            raise MalformedResponse(f"{e} ({digest})") from e

        response = ChatResponse(text=text, model=request.model, latency_seconds=latency, from_cache=from_cache)
        self.history.append(response)
        logger.info(
            f"chat {request.model} {digest}: {latency:.2f}s{' (caché)' if from_cache else ''}"
        )
        return response

    async def embed(self, text: str, model: Optional[str] = None) -> EmbeddingVector:
        if not text or not text.strip():
            raise EmptyText("no se puede generar el embedding de un texto vacío")

        model = model or self.settings.embedding_model
        body = {"model": model, "input": text}
        values, _, _ = await self._request("embeddings", "/embeddings", model, body, self._embedding_values)

        expected = self._dimensions.setdefault(model, len(values))
        if len(values) != expected:
            raise MalformedResponse(f"{model}: dimensión {len(values)}, se esperaba {expected}")
        return EmbeddingVector(values=values, model=model)

    def drain_history(self) -> List[ChatResponse]:
        drained, self.history = self.history, []
        return drained


# ===================== TIEMPOS =====================

def with_timing(responses: Iterable[ChatResponse]) -> TimingTotal:
    """Suma las latencias de un lote; con todo en caché solo cuenta el tiempo de búsqueda"""
    total = TimingTotal()
    for response in responses:
        total.seconds += response.latency_seconds
        total.requests += 1
        if response.from_cache:
            total.cached_requests += 1
    return total


class TimingLedger:
    """Totales por (dispositivo, modelo, etapa) para reports/timing.json"""

    def __init__(self, entries: Optional[List[TimingEntry]] = None):
        self._entries: Dict[Tuple[str, str, str], TimingEntry] = {}
        for entry in entries or []:
            self._entries[(entry.device, entry.model, entry.stage)] = entry

    def record(self, device: str, model: str, stage: str, total: TimingTotal) -> TimingEntry:
        entry = TimingEntry(device=device, model=model, stage=stage, **total.model_dump())
        self._entries[(device, model, stage)] = entry
        return entry

    def entries(self) -> List[TimingEntry]:
        return [self._entries[key] for key in sorted(self._entries)]

    def to_document(self) -> List[Dict[str, Any]]:
        return [
            {**entry.model_dump(), "all_cached": entry.all_cached}
            for entry in self.entries()
        ]

    @classmethod
    def from_document(cls, document: List[Dict[str, Any]]) -> "TimingLedger":
        return cls([TimingEntry.model_validate(row) for row in document or []])


def format_duration(seconds: float) -> str:
    if seconds >= 3600:
        return f"{seconds / 3600:.1f} h"
    if seconds >= 60:
        return f"{seconds / 60:.1f} min"
    return f"{seconds:.1f} s"
