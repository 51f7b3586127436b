# app/services/project_store.py
"""
Almacén de artefactos del proyecto.

Cada artefacto es JSON canónico (claves ordenadas, sangría 2) envuelto en
{stage, digest, upstream, data}. `digest` es el sha256 de los datos y
`upstream` registra los digests de los artefactos de los que se derivó.
"""
import hashlib
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from app.core.constants import LOCK_FILE, STORE_DIRS
from app.core.errors import MalformedJson, MissingArtifact, ProjectLocked, StaleArtifact

logger = logging.getLogger(__name__)


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def content_digest(data: Any) -> str:
    compact = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(compact.encode("utf-8")).hexdigest()


def model_slug(model: str) -> str:
    """Nombre de modelo apto para rutas ("org/model" -> "org__model")"""
    return model.replace("/", "__").replace(":", "_")


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ProjectStore:
    """Directorio raíz con graphs/, partitions/, summaries/, rankings/, reports/, cache/, normalized/"""

    def __init__(self, root: Path):
        self.root = Path(root)

    def ensure_layout(self) -> None:
        for name in STORE_DIRS:
            (self.root / name).mkdir(parents=True, exist_ok=True)

    @property
    def cache_dir(self) -> Path:
        return self.root / "cache"

    def path(self, stage: str, name: str) -> Path:
        return self.root / stage / f"{name}.json"

    def exists(self, stage: str, name: str) -> bool:
        return self.path(stage, name).exists()

    # ===================== ARTEFACTOS =====================

    def write_artifact(
        self,
        stage: str,
        name: str,
        data: Any,
        upstream: Optional[Dict[str, str]] = None,
    ) -> Path:
        """Escribe el artefacto; con entradas idénticas el archivo resultante es idéntico byte a byte"""
        envelope = {
            "stage": stage,
            "digest": content_digest(data),
            "upstream": dict(sorted((upstream or {}).items())),
            "data": data,
        }
        path = self.path(stage, name)
        atomic_write_text(path, canonical_json(envelope))
        logger.debug(f"Artefacto {stage}/{name} escrito ({envelope['digest'][:12]})")
        return path

    def read_artifact(self, stage: str, name: str) -> Dict[str, Any]:
        path = self.path(stage, name)
        if not path.exists():
            raise MissingArtifact(f"falta el artefacto {stage}/{name} ({path})")
        try:
            with open(path, "r", encoding="utf-8") as f:
                envelope = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedJson(f"artefacto corrupto {path}: {e}") from e

        if not isinstance(envelope, dict) or "data" not in envelope:
            raise MalformedJson(f"artefacto sin sobre {stage}/{name}")
        return envelope

    def read_data(self, stage: str, name: str) -> Any:
        return self.read_artifact(stage, name)["data"]

    def digest_of(self, stage: str, name: str) -> str:
        return self.read_artifact(stage, name)["digest"]

    def key(self, stage: str, name: str) -> str:
        return f"{stage}/{name}"

    def stamp(self, *keys: str) -> Dict[str, str]:
        """Digests actuales de los artefactos indicados como "stage/name" """
        stamps = {}
        for key in keys:
            stage, name = key.split("/", 1)
            stamps[key] = self.digest_of(stage, name)
        return stamps

    def check_upstream(self, envelope: Dict[str, Any]) -> None:
        """Falla si algún artefacto de origen cambió desde que se generó este"""
        for key, recorded in envelope.get("upstream", {}).items():
            stage, name = key.split("/", 1)
            current = self.digest_of(stage, name)
            if current != recorded:
                raise StaleArtifact(
                    f"{envelope.get('stage')}: {key} cambió ({recorded[:12]} -> {current[:12]}); "
                    f"vuelva a ejecutar la etapa"
                )

    def list_names(self, stage: str) -> List[str]:
        base = self.root / stage
        if not base.exists():
            return []
        return sorted(
            p.relative_to(base).with_suffix("").as_posix()
            for p in base.rglob("*.json")
            if not p.name.endswith(".partial.json")
        )

    # ===================== REANUDACIÓN =====================

    def partial_path(self, stage: str, name: str) -> Path:
        return self.root / stage / f"{name}.partial.json"

    def write_partial(self, stage: str, name: str, data: Any) -> None:
        atomic_write_text(self.partial_path(stage, name), canonical_json(data))

    def read_partial(self, stage: str, name: str) -> Optional[Any]:
        path = self.partial_path(stage, name)
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError:
            logger.warning(f"⚠️ Archivo parcial ilegible, se descarta: {path}")
            return None

    def clear_partial(self, stage: str, name: str) -> None:
        path = self.partial_path(stage, name)
        if path.exists():
            path.unlink()

    # ===================== BLOQUEO =====================

    @contextmanager
    def lock(self) -> Iterator[Path]:
        """
        Un solo comando a la vez por proyecto. El archivo guarda el PID del
        dueño; un lock cuyo proceso ya no existe se reemplaza.
        """
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / LOCK_FILE

        if not self._try_lock(path):
            holder = _lock_holder(path)
            if holder is not None and _process_alive(holder):
                raise ProjectLocked(f"el proyecto {self.root} está en uso por el proceso {holder} ({path})")
            logger.warning(f"⚠️ lock huérfano en {path} (proceso {holder}), se reemplaza")
            path.unlink(missing_ok=True)
            if not self._try_lock(path):
                raise ProjectLocked(f"el proyecto {self.root} está en uso ({path})")

        try:
            yield path
        finally:
            if _lock_holder(path) == os.getpid():
                path.unlink()

    @staticmethod
    def _try_lock(path: Path) -> bool:
        """Publica el lock ya escrito con link(2), que falla si el destino existe"""
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f"{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as f:
                f.write(str(os.getpid()))
            os.link(tmp, path)
            return True
        except FileExistsError:
            return False
        finally:
            os.unlink(tmp)


def _lock_holder(path: Path) -> Optional[int]:
    try:
        return int(path.read_text().strip())
    except (OSError, ValueError):
        return None


def _process_alive(pid: int) -> bool:
    if pid <= 0:
        return False
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True
