# app/schemas/llm.py
from enum import Enum
from typing import Any, Dict, List, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Role(str, Enum):
    system = "system"
    user = "user"
    assistant = "assistant"


class ChatMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    role: Role
    content: str


class ChatRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    messages: List[ChatMessage]
    temperature: float = Field(0.0, ge=0)
    max_tokens: int = Field(512, ge=1)

    @field_validator("messages")
    @classmethod
    def _non_empty(cls, value: List[ChatMessage]) -> List[ChatMessage]:
        if not value:
            raise ValueError("messages no puede estar vacío")
        return value

    def body(self) -> Dict[str, Any]:
        """Cuerpo JSON del esquema chat/completions"""
        return {
            "model": self.model,
            "messages": [{"role": m.role.value, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


class ChatResponse(BaseModel):
    text: str
    model: str
    latency_seconds: float = Field(..., ge=0)
    from_cache: bool = False


class EmbeddingVector(BaseModel):
    values: List[float]
    model: str

    @field_validator("values")
    @classmethod
    def _non_empty(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("vector vacío")
        return value


class CacheKey(BaseModel):
    model_config = ConfigDict(frozen=True)

    digest: str = Field(..., min_length=64, max_length=64)


class TimingTotal(BaseModel):
    """Segundos acumulados de un lote de respuestas"""
    seconds: float = 0.0
    requests: int = 0
    cached_requests: int = 0

    @property
    def all_cached(self) -> bool:
        return self.requests > 0 and self.cached_requests == self.requests


class TimingEntry(TimingTotal):
    device: str
    model: str
    stage: str


class EmbeddingRequest(BaseModel):
    model: str
    input: Union[str, List[str]]

    def texts(self) -> List[str]:
        return [self.input] if isinstance(self.input, str) else list(self.input)


class MockStats(BaseModel):
    """Contadores del endpoint de prueba"""
    hits: int = 0
    chat_hits: int = 0
    embedding_hits: int = 0
    in_flight: int = 0
    peak_in_flight: int = 0
