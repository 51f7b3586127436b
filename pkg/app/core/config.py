# app/core/config.py
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from app.core.constants import DEFAULT_LENGTH_THRESHOLD, PROJECT_FILES
from app.core.errors import ConfigError


class Settings(BaseSettings):
    # API
    PROJECT_NAME: str = "Firmware Module Retrieval"
    VERSION: str = "1.0.0"
    API_V1_STR: str = "/v1"

    # Endpoint LLM (la clave nunca va en el archivo del proyecto)
    LLM_BASE_URL: str = "http://localhost:8000/v1"
    LLM_API_KEY: Optional[str] = None

    LOG_LEVEL: str = "INFO"

    # Latencia artificial del endpoint de prueba (segundos)
    MOCK_LATENCY_SECONDS: float = 0.0

    class Config:
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    return Settings()


class GraphWeightsConfig(BaseModel):
    alpha: float = Field(1.0, ge=0)
    beta: float = Field(1.0, ge=0)
    gamma: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _positive_sum(self) -> "GraphWeightsConfig":
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("alpha + beta + gamma debe ser > 0")
        return self


class LLMSettings(BaseModel):
    """Parámetros del endpoint de chat/embeddings"""
    base_url: Optional[str] = None
    chat_models: List[str] = Field(default_factory=lambda: ["codestral-22b"])
    embedding_model: str = "text-embedding"
    max_retries: int = Field(3, ge=0)
    retry_backoff_seconds: float = Field(0.5, ge=0)
    concurrency: int = Field(4, ge=1)
    timeout_seconds: float = Field(120.0, gt=0)
    max_tokens: int = Field(512, ge=1)
    temperature: float = Field(0.0, ge=0)
    prompt_char_budget: int = Field(48_000, ge=256)
    cache: bool = True


class ProjectConfig(BaseModel):
    """Configuración de un proyecto (project.toml / project.json)"""
    root: Path
    device: str = "device"
    binary: Optional[Path] = None
    decompiled_manifest: Optional[Path] = None
    ground_truth_modules: Optional[Path] = None
    ground_truth_categories: Optional[Path] = None
    source_root: Optional[Path] = None
    category_definitions: Optional[Path] = None
    weights: GraphWeightsConfig = Field(default_factory=GraphWeightsConfig)
    drg_mode: Literal["count", "binary"] = "count"
    matching: Literal["max_overlap", "one_to_one"] = "max_overlap"
    length_threshold: int = Field(DEFAULT_LENGTH_THRESHOLD, ge=1)
    query_k: int = Field(1, ge=1, le=5)
    llm: LLMSettings = Field(default_factory=LLMSettings)

    @field_validator("device")
    @classmethod
    def _device_not_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("device no puede estar vacío")
        return value

    def require(self, key: str) -> Path:
        """Devuelve una ruta obligatoria para el comando o falla nombrando la clave"""
        value = getattr(self, key)
        if value is None:
            raise ConfigError(f"falta la clave '{key}' en la configuración del proyecto")
        return value

    def base_url(self) -> str:
        return self.llm.base_url or get_settings().LLM_BASE_URL


def _read_project_file(path: Path) -> Dict[str, Any]:
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as f:
                return tomllib.load(f)
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"archivo de proyecto inválido {path}: {e}") from e


def _resolve_paths(raw: Dict[str, Any], base: Path) -> Dict[str, Any]:
    resolved = dict(raw)
    for key in ("binary", "decompiled_manifest", "ground_truth_modules",
                "ground_truth_categories", "source_root", "category_definitions"):
        value = resolved.get(key)
        if value and not Path(value).is_absolute():
            resolved[key] = str(base / value)
    return resolved


def load_project_config(
    root: Path,
    config_path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ProjectConfig:
    """Carga la configuración del proyecto; los flags de la CLI pisan las claves del archivo"""
    root = Path(root)
    raw: Dict[str, Any] = {}

    if config_path is None:
        for name in PROJECT_FILES:
            candidate = root / name
            if candidate.exists():
                config_path = candidate
                break

    if config_path is not None:
        if not Path(config_path).exists():
            raise ConfigError(f"no existe el archivo de configuración {config_path}")
        raw = _resolve_paths(_read_project_file(Path(config_path)), Path(config_path).parent)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "llm":
            raw["llm"] = {**raw.get("llm", {}), **value}
        else:
            raw[key] = value

    raw["root"] = str(root)
    try:
        return ProjectConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"configuración inválida: {e}") from e
