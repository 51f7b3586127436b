import json
import os

import httpx
import pandas as pd
import pytest

from app.cli import main, parse_weights
from app.core.errors import ConfigError
from app.services.pipeline import summary_record
from app.schemas.categories import FunctionSummary
from tests.conftest import DECOMPILED_TEXTS, HELPER, LEAF, MAIN, START, THUNK, long_body, mock_stats

SUMMARIES = "summaries/codestral-22b/QuadCopter.json"
RANKINGS = "rankings/codestral-22b/QuadCopter.json"


def cli(root, command, *args, transport=None):
    return main([command, "--root", str(root), *args], transport=transport)


def read(root, relative):
    return json.loads((root / relative).read_text(encoding="utf-8"))


def set_keys(root, drop=(), **keys):
    """Reescribe project.toml quitando claves de nivel superior y agregando otras"""
    path = root / "project.toml"
    lines = [
        line for line in path.read_text(encoding="utf-8").splitlines()
        if not any(line.startswith(f"{key} ") for key in drop)
    ]
    path.write_text("\n".join([f'{k} = "{v}"' for k, v in keys.items()] + lines) + "\n", encoding="utf-8")


def run_all(root, transport, *commands):
    for command in commands:
        assert cli(root, command, transport=transport) == 0, command


# ===================== FLUJO COMPLETO =====================

def test_full_pipeline(synthetic_project, mock_transport, capsys):
    root = synthetic_project

    assert cli(root, "decompose") == 0
    out = capsys.readouterr().out
    assert "QuadCopter: 2 modules, 5 functions (weights 1,1,1" in out
    assert "module size histogram:" in out

    partition = read(root, "partitions/QuadCopter.json")["data"]
    assert partition["clusters"] == {
        "0": [f"{START:#010x}", f"{MAIN:#010x}", f"{HELPER:#010x}"],
        "1": [f"{LEAF:#010x}", f"{THUNK:#010x}"],
    }
    assert partition["call_stats"]["indirect_calls"] == 1
    for source in ("sg", "drg", "cg", "combined"):
        assert (root / "graphs" / f"QuadCopter.{source}.json").exists()

    run_all(root, mock_transport, "summarize", "categorize")
    summaries = read(root, SUMMARIES)["data"]
    assert [s["entry"] for s in summaries] == [START, MAIN, HELPER, LEAF, THUNK]
    assert all(s["error"] is None and "latency_seconds" not in s for s in summaries)

    rankings = read(root, RANKINGS)["data"]
    assert rankings["0"]["ordered"][0] == "data_transfer"
    assert rankings["1"]["ordered"][0] == "controller"
    assert mock_stats(mock_transport)["chat_hits"] == 5 + 2

    capsys.readouterr()
    assert cli(root, "evaluate", transport=mock_transport) == 0
    out = capsys.readouterr().out
    assert "Modularization" in out
    assert "Module categorization" in out

    modularization = read(root, "reports/modularization/QuadCopter.json")["data"]
    assert modularization["module_count"] == 3
    assert modularization["function_count"] == 5
    assert modularization["p_w"] == pytest.approx(11 / 15)
    assert modularization["r_w"] == pytest.approx(1.0)
    assert modularization["f1_w"] == pytest.approx(0.82)

    scores = read(root, "reports/categories/codestral-22b/QuadCopter.json")["data"]["scores"]
    assert scores["data_transfer"]["tp"] == 1
    assert scores["controller"]["tp"] == 1
    assert sum(s["fp"] for s in scores.values()) == 0

    assert cli(root, "report") == 0
    sheets = pd.read_excel(root / "reports" / "tables.xlsx", sheet_name=None, dtype=str)
    assert set(sheets) == {"Modularization", "Similarity", "Categories", "Timing"}
    assert set(sheets["Timing"]["Stage"]) == {"summarize", "categorize"}


def test_rerun_is_cached_and_identical(synthetic_project, mock_transport):
    root = synthetic_project
    run_all(root, mock_transport, "decompose", "summarize", "categorize")
    before = {p: (root / p).read_bytes() for p in ("partitions/QuadCopter.json", SUMMARIES, RANKINGS)}
    hits = mock_stats(mock_transport)["hits"]

    run_all(root, mock_transport, "decompose", "summarize", "categorize")
    assert {p: (root / p).read_bytes() for p in before} == before
    assert mock_stats(mock_transport)["hits"] == hits


def test_resume_completes_remaining_modules(synthetic_project, mock_transport):
    root = synthetic_project
    run_all(root, mock_transport, "decompose")

    digest = read(root, "partitions/QuadCopter.json")["digest"]
    done = [
        summary_record(FunctionSummary(entry=e, module=0, summary_text="resumed", model="codestral-22b"))
        for e in (START, MAIN, HELPER)
    ]
    partial = root / "summaries" / "codestral-22b" / "QuadCopter.partial.json"
    partial.parent.mkdir(parents=True, exist_ok=True)
    partial.write_text(json.dumps({"upstream": {"partitions/QuadCopter": digest}, "modules": {"0": done}}))

    run_all(root, mock_transport, "summarize")
    summaries = read(root, SUMMARIES)["data"]
    assert [s["summary_text"] for s in summaries[:3]] == ["resumed"] * 3
    assert "PID" in summaries[3]["summary_text"]
    assert mock_stats(mock_transport)["chat_hits"] == 2
    assert not partial.exists()


def test_partial_from_other_inputs_is_discarded(synthetic_project, mock_transport):
    root = synthetic_project
    run_all(root, mock_transport, "decompose")
    partial = root / "summaries" / "codestral-22b" / "QuadCopter.partial.json"
    partial.parent.mkdir(parents=True, exist_ok=True)
    partial.write_text(json.dumps({"upstream": {"partitions/QuadCopter": "0" * 64}, "modules": {"0": []}}))

    run_all(root, mock_transport, "summarize")
    assert len(read(root, SUMMARIES)["data"]) == 5
    assert mock_stats(mock_transport)["chat_hits"] == 5


# ===================== CONFIGURACIÓN =====================

def test_weights_flag(synthetic_project, capsys):
    assert cli(synthetic_project, "decompose", "--weights", "1,0,0") == 0
    assert read(synthetic_project, "partitions/QuadCopter.json")["data"]["weights"] == "1,0,0"
    assert "(weights 1,0,0" in capsys.readouterr().out


@pytest.mark.parametrize("value", ["1,0", "a,b,c", "0,0,0", "-1,1,1"])
def test_bad_weights(synthetic_project, value, capsys):
    assert cli(synthetic_project, "decompose", "--weights", value) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_parse_weights():
    assert parse_weights("1, 0.5 ,0") == {"alpha": 1.0, "beta": 0.5, "gamma": 0.0}
    with pytest.raises(ConfigError):
        parse_weights("1,2")


def test_missing_binary(tmp_path, capsys):
    assert cli(tmp_path / "empty", "decompose") == 2
    assert "binary" in capsys.readouterr().err


def test_unknown_command(tmp_path):
    assert main(["explode", "--root", str(tmp_path)]) == 2


def test_device_flag_overrides_config(synthetic_project):
    assert cli(synthetic_project, "decompose", "--device", "Rover") == 0
    assert (synthetic_project / "partitions" / "Rover.json").exists()


def test_locked_project(synthetic_project, capsys):
    (synthetic_project / ".lock").write_text(str(os.getppid()))
    assert cli(synthetic_project, "decompose") == 2
    assert "ProjectLocked" in capsys.readouterr().err
    assert (synthetic_project / ".lock").exists()


# ===================== ARTEFACTOS FALTANTES =====================

def test_summarize_before_decompose(synthetic_project, mock_transport):
    assert cli(synthetic_project, "summarize", transport=mock_transport) == 3


def test_evaluate_without_ground_truth(synthetic_project, mock_transport, capsys):
    root = synthetic_project
    run_all(root, mock_transport, "decompose")
    set_keys(root, drop=("ground_truth_modules", "ground_truth_categories"))

    assert cli(root, "evaluate", transport=mock_transport) == 3
    err = capsys.readouterr().err
    assert "MissingGroundTruth" in err
    assert "ground_truth_modules" in err


def test_stale_summaries_are_rejected(synthetic_project, mock_transport, capsys):
    root = synthetic_project
    run_all(root, mock_transport, "decompose", "summarize")
    assert cli(root, "decompose", "--weights", "1,0,0") == 0

    assert cli(root, "categorize", transport=mock_transport) == 3
    assert "StaleArtifact" in capsys.readouterr().err


def test_report_without_reports(synthetic_project):
    assert cli(synthetic_project, "report") == 3


# ===================== ENDPOINT =====================

def test_unreachable_endpoint(synthetic_project, mock_transport, capsys):
    def refuse(request):
        raise httpx.ConnectError("connection refused", request=request)

    root = synthetic_project
    run_all(root, mock_transport, "decompose")
    assert cli(root, "summarize", "--mock-endpoint", "http://127.0.0.1:9/v1", transport=httpx.MockTransport(refuse)) == 4
    assert "EndpointUnreachable" in capsys.readouterr().err
    assert not (root / SUMMARIES).exists()


# ===================== NORMALIZACIÓN =====================

SOURCE_NAMES = {START: "_start", MAIN: "main", HELPER: "helper", LEAF: "leaf", THUNK: "leaf_trampoline"}


def test_normalize_add_fixture(synthetic_project, capsys):
    root = synthetic_project
    (root / "src").mkdir()
    (root / "src" / "util.c").write_text("int helper(int a,int b){return a+b;}\n", encoding="utf-8")
    set_keys(root, source_root="src")

    assert cli(root, "normalize") == 0
    assert "1 functions normalized, 4 names without a source definition" in capsys.readouterr().out

    device = root / "normalized" / "QuadCopter"
    assert (device / "funcs" / "helper.c").read_text() == "int FUNC_0(int ID_0,int ID_1){return ID_0+ID_1;}\n"
    assert read(device, "maps/helper.json") == {"a": "ID_0", "b": "ID_1", "helper": "FUNC_0"}
    assert read(device, "manifest.json") == [{"entry": f"{HELPER:#010x}", "file": "funcs/helper.c"}]
    summary = read(root, "normalized/QuadCopter.json")["data"]
    assert summary["not_found"] == ["_start", "leaf", "leaf_trampoline", "main"]
    assert summary["ambiguous"] == []


def test_normalized_upper_bound_and_similarity(synthetic_project, mock_transport, capsys):
    root = synthetic_project
    (root / "src").mkdir()
    with open(root / "src" / "firmware.c", "w", encoding="utf-8") as f:
        for entry, lines in DECOMPILED_TEXTS.items():
            signature = f"void {SOURCE_NAMES[entry]}(void) {{"
            f.write(long_body([signature, *lines[1:]]) + "\n")
    set_keys(root, source_root="src")

    run_all(root, mock_transport, "decompose", "normalize", "summarize", "categorize")
    for command in ("summarize", "categorize"):
        assert main([command, "--root", str(root), "--source", "normalized"], transport=mock_transport) == 0

    normalized = read(root, "summaries/codestral-22b/QuadCopter.normalized.json")["data"]
    assert len(normalized) == 5

    capsys.readouterr()
    assert cli(root, "evaluate", transport=mock_transport) == 0
    out = capsys.readouterr().out
    assert "upper bound in parentheses" in out
    assert "Summary similarity" in out

    similarity = read(root, "reports/similarity/codestral-22b/QuadCopter.json")["data"]
    (entry,) = similarity["entries"]
    assert entry["pairs"] == 5
    assert -1.0 <= entry["mean"] <= 1.0
    assert (root / "reports" / "categories" / "codestral-22b" / "QuadCopter.normalized.json").exists()
