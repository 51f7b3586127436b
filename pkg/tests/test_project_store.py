import os
import subprocess
import sys

import pytest

from app.core.constants import LOCK_FILE
from app.core.errors import MalformedJson, MissingArtifact, ProjectLocked, StaleArtifact
from app.services.project_store import ProjectStore, content_digest, model_slug


@pytest.fixture
def store(tmp_path):
    store = ProjectStore(tmp_path / "project")
    store.ensure_layout()
    return store


def test_layout(store):
    for name in ("graphs", "partitions", "summaries", "rankings", "reports", "cache", "normalized"):
        assert (store.root / name).is_dir()


def test_identical_inputs_give_identical_bytes(store):
    data = {"b": [3, 2, 1], "a": {"y": 1.5, "x": "ñ"}}
    first = store.write_artifact("graphs", "dev.sg", data).read_bytes()
    second = store.write_artifact("graphs", "dev.sg", dict(reversed(list(data.items())))).read_bytes()
    assert first == second


def test_envelope(store):
    store.write_artifact("graphs", "dev.sg", {"nodes": [1]})
    envelope = store.read_artifact("graphs", "dev.sg")

    assert envelope["stage"] == "graphs"
    assert envelope["digest"] == content_digest({"nodes": [1]})
    assert store.read_data("graphs", "dev.sg") == {"nodes": [1]}


def test_missing_and_corrupt_artifacts(store):
    with pytest.raises(MissingArtifact):
        store.read_artifact("graphs", "absent")

    store.path("graphs", "broken").write_text("{", encoding="utf-8")
    with pytest.raises(MalformedJson):
        store.read_artifact("graphs", "broken")


def test_upstream_digests_detect_stale_artifacts(store):
    store.write_artifact("graphs", "dev.combined", {"v": 1})
    upstream = store.stamp(store.key("graphs", "dev.combined"))
    store.write_artifact("partitions", "dev", {"clusters": {}}, upstream=upstream)

    store.check_upstream(store.read_artifact("partitions", "dev"))

    store.write_artifact("graphs", "dev.combined", {"v": 2})
    with pytest.raises(StaleArtifact):
        store.check_upstream(store.read_artifact("partitions", "dev"))


def test_nested_names_and_partials(store):
    store.write_artifact("summaries", "codestral-22b/dev", [])
    store.write_partial("summaries", "org__model/dev", {"done": {}})

    assert store.list_names("summaries") == ["codestral-22b/dev"]
    assert store.read_partial("summaries", "org__model/dev") == {"done": {}}

    store.clear_partial("summaries", "org__model/dev")
    assert store.read_partial("summaries", "org__model/dev") is None
    assert store.list_names("absent") == []


def test_unreadable_partial_is_discarded(store):
    path = store.partial_path("summaries", "m/dev")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("{half", encoding="utf-8")
    assert store.read_partial("summaries", "m/dev") is None


def test_model_slug():
    assert model_slug("deepseek-ai/deepseek-coder:33b") == "deepseek-ai__deepseek-coder_33b"


def test_lock(store):
    with store.lock() as path:
        assert path.exists()
        with pytest.raises(ProjectLocked):
            with store.lock():
                pass
    assert not path.exists()

    with store.lock():
        pass


def _finished_pid() -> int:
    child = subprocess.Popen([sys.executable, "-c", "pass"])
    child.wait()
    return child.pid


def test_stale_lock_is_taken_over(store):
    stale = store.root / LOCK_FILE
    stale.write_text(str(_finished_pid()))

    with store.lock() as path:
        assert path.read_text() == str(os.getpid())
    assert not path.exists()


def test_unreadable_lock_is_taken_over(store):
    (store.root / LOCK_FILE).write_text("garbage")
    with store.lock():
        pass


def test_lock_held_by_live_process(store):
    held = store.root / LOCK_FILE
    held.write_text(str(os.getppid()))

    with pytest.raises(ProjectLocked):
        with store.lock():
            pass
    assert held.read_text() == str(os.getppid())
