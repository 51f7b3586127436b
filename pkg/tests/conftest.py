import asyncio
import json
from pathlib import Path
from typing import Dict, List

import httpx
import pytest

from app.api.v1.endpoints.llm import reset_stats
from app.core.config import LLMSettings
from app.main import app
from app.services.llm_gateway import LLMGateway

FIXTURES = Path(__file__).parent / "fixtures"

START, MAIN, HELPER, LEAF, THUNK = 0x08000000, 0x08000008, 0x0800002C, 0x08000048, 0x08000054
TABLE, COUNTER, HOOK, MESSAGE = 0x20000000, 0x20000010, 0x20000014, 0x08000058

MOCK_BASE_URL = "http://mock/v1"

# Cuerpos descompilados del proyecto sintético: las palabras clave guían al endpoint de prueba
DECOMPILED_TEXTS = {
    START: ["void entry(void) {", "  memset(bss, 0, size);", "  copy_init_data();"],
    MAIN: ["int run(void) {", "  mavlink_msg_pack(&msg);", "  send_packet(uart, &msg);"],
    HELPER: ["void tick(void) {", "  mavlink_msg_finalize(&msg);", "  serial_send(&msg);"],
    LEAF: ["float step(float e) {", "  pid_update(&pid, e);", "  motor_write(throttle);"],
    THUNK: ["void out(void) {", "  servo_mix(servo, 4);", "  motor_write(throttle);"],
}


def long_body(lines: List[str], total: int = 16) -> str:
    """Completa con sentencias hasta `total` líneas no vacías"""
    body = list(lines)
    while len(body) < total - 1:
        body.append(f"  local_{len(body)} = local_{len(body) - 1} + 1;")
    body.append("}")
    return "\n".join(body) + "\n"


@pytest.fixture
def tiny_arm_elf() -> Path:
    return FIXTURES / "tiny_arm.elf"


@pytest.fixture
def tiny_arm_stripped() -> Path:
    return FIXTURES / "tiny_arm_stripped.elf"


@pytest.fixture
def x86_object() -> Path:
    return FIXTURES / "x86_64.o"


@pytest.fixture
def mock_transport():
    """Transporte ASGI contra el endpoint de prueba, con contadores en cero"""
    asyncio.run(reset_stats())
    return httpx.ASGITransport(app=app)


def mock_stats(transport: httpx.ASGITransport) -> Dict[str, int]:
    async def fetch():
        async with httpx.AsyncClient(transport=transport, base_url="http://mock") as client:
            return (await client.get("/v1/stats")).json()

    return asyncio.run(fetch())


def make_gateway(tmp_path: Path, transport, **llm) -> LLMGateway:
    settings = LLMSettings(**{"retry_backoff_seconds": 0.0, **llm})
    return LLMGateway(settings, MOCK_BASE_URL, cache_dir=tmp_path / "cache", transport=transport)


def write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def synthetic_project(tmp_path, tiny_arm_elf) -> Path:
    """
    Proyecto de tres módulos reales sobre el binario de prueba: arranque,
    comunicaciones (main, helper) y motores (leaf, thunk).
    """
    root = tmp_path / "project"
    corpus = root / "corpus"
    (corpus / "funcs").mkdir(parents=True)

    rows = []
    for entry, lines in DECOMPILED_TEXTS.items():
        name = f"funcs/{entry:08x}.c"
        (corpus / name).write_text(long_body(lines), encoding="utf-8")
        rows.append({"entry": f"{entry:#010x}", "file": name})
    write_json(corpus / "manifest.json", rows)

    write_json(root / "gt" / "modules.json", {
        f"{START:#010x}": "Boot",
        f"{MAIN:#010x}": "GCS_MAVLink",
        f"{HELPER:#010x}": "GCS_MAVLink",
        f"{LEAF:#010x}": "AP_Motors",
        f"{THUNK:#010x}": "AP_Motors",
    })
    write_json(root / "gt" / "categories.json", {
        "Boot": ["other"],
        "GCS_MAVLink": ["data_transfer"],
        "AP_Motors": ["controller"],
    })

    (root / "project.toml").write_text(
        "\n".join([
            'device = "QuadCopter"',
            f'binary = "{tiny_arm_elf.as_posix()}"',
            'decompiled_manifest = "corpus/manifest.json"',
            'ground_truth_modules = "gt/modules.json"',
            'ground_truth_categories = "gt/categories.json"',
            "",
            "[llm]",
            f'base_url = "{MOCK_BASE_URL}"',
            'chat_models = ["codestral-22b"]',
            "retry_backoff_seconds = 0.0",
            "max_retries = 1",
            "",
        ]),
        encoding="utf-8",
    )
    return root
