import pytest

from app.core.errors import (
    BadHex, DuplicateEntry, EmptyCategorySet, InputError, MalformedJson,
    MissingFile, UnknownCategory,
)
from app.schemas.categories import Category
from app.schemas.corpus import DecompiledFunction
from app.services.corpus_loader import (
    filter_by_length, load_decompiled_corpus, load_ground_truth,
    parse_hex_address, write_decompiled_manifest,
)
from tests.conftest import write_json


def lines(count: int) -> str:
    return "".join(f"x{i} = {i};\n" for i in range(count))


def make_corpus(tmp_path, rows, files):
    for name, text in files.items():
        (tmp_path / name).parent.mkdir(parents=True, exist_ok=True)
        (tmp_path / name).write_text(text, encoding="utf-8")
    return write_json(tmp_path / "manifest.json", rows)


def test_load_corpus(tmp_path):
    manifest = make_corpus(
        tmp_path,
        [{"entry": "0x8000", "file": "a.c"}, {"entry": "0x8010", "file": "b.c"}, {"entry": "8020", "file": "c.c"}],
        {"a.c": lines(3), "b.c": lines(1), "c.c": lines(20)},
    )
    functions = load_decompiled_corpus(manifest)

    assert [f.entry for f in functions] == [0x8000, 0x8010, 0x8020]
    assert [f.line_count for f in functions] == [3, 1, 20]


def test_blank_lines_are_not_counted(tmp_path):
    text = "\n".join(["stmt;"] * 17 + ["", "   ", "\t"]) + "\n"
    manifest = make_corpus(tmp_path, [{"entry": "0x8000", "file": "a.c"}], {"a.c": text})
    (function,) = load_decompiled_corpus(manifest)
    assert function.line_count == 17


def test_duplicate_entry(tmp_path):
    manifest = make_corpus(
        tmp_path,
        [{"entry": "0x8000", "file": "a.c"}, {"entry": "0x8000", "file": "b.c"}],
        {"a.c": "a;\n", "b.c": "b;\n"},
    )
    with pytest.raises(DuplicateEntry):
        load_decompiled_corpus(manifest)


def test_missing_function_file(tmp_path):
    manifest = make_corpus(tmp_path, [{"entry": "0x8000", "file": "gone.c"}], {})
    with pytest.raises(MissingFile):
        load_decompiled_corpus(manifest)


def test_bad_hex(tmp_path):
    manifest = make_corpus(tmp_path, [{"entry": "main", "file": "a.c"}], {"a.c": "a;\n"})
    with pytest.raises(BadHex):
        load_decompiled_corpus(manifest)


def test_malformed_manifest(tmp_path):
    with pytest.raises(MalformedJson):
        load_decompiled_corpus(write_json(tmp_path / "manifest.json", {"entry": "0x1"}))
    with pytest.raises(MalformedJson):
        load_decompiled_corpus(write_json(tmp_path / "manifest.json", [{"address": "0x1"}]))
    with pytest.raises(MissingFile):
        load_decompiled_corpus(tmp_path / "absent.json")


def test_parse_hex_address():
    assert parse_hex_address("0x08001234") == 0x08001234
    assert parse_hex_address(" 8000 ") == 0x8000
    with pytest.raises(BadHex):
        parse_hex_address("0xZZ")


def test_manifest_round_trip(tmp_path):
    originals = [(0x8010, "b.c", lines(4)), (0x8000, "a.c", lines(16))]
    manifest = write_decompiled_manifest(originals, tmp_path / "corpus")
    reloaded = load_decompiled_corpus(manifest)

    assert reloaded == [DecompiledFunction.from_text(e, t) for e, _, t in sorted(originals)]


# ===================== FILTRO DE LONGITUD =====================

def corpus(*counts):
    return [DecompiledFunction.from_text(0x1000 + i, lines(c)) for i, c in enumerate(counts)]


def test_filter_keeps_threshold_and_above():
    kept = filter_by_length(corpus(14, 15, 40))
    assert [f.line_count for f in kept] == [15, 40]


def test_filter_edge_cases():
    functions = corpus(1, 3, 2)
    assert filter_by_length(functions, 1) == functions
    assert filter_by_length([]) == []
    with pytest.raises(InputError):
        filter_by_length(functions, 0)


def test_filter_is_idempotent_and_monotone():
    functions = corpus(*range(0, 40, 3))
    for low in range(1, 40, 4):
        once = filter_by_length(functions, low)
        assert filter_by_length(once, low) == once
        for high in range(low, 40, 5):
            assert set(f.entry for f in filter_by_length(functions, high)) <= set(f.entry for f in once)


# ===================== GROUND TRUTH =====================

def test_load_ground_truth(tmp_path):
    modules, categories = load_ground_truth(
        write_json(tmp_path / "modules.json", {"0x8000": "AC_WPNav", "0x8010": "AC_WPNav", "0x8020": "AP_Motors"}),
        write_json(tmp_path / "categories.json", {"AC_WPNav": ["navigation"], "AP_Motors": ["Controller", "safety_check"]}),
    )
    assert modules.modules()["AC_WPNav"] == frozenset({0x8000, 0x8010})
    assert categories.mapping["AC_WPNav"] == frozenset({Category.navigation})
    assert categories.mapping["AP_Motors"] == frozenset({Category.controller, Category.safety_check})


@pytest.mark.parametrize("values, error", [
    (["telemetry"], UnknownCategory),
    ([], EmptyCategorySet),
    ("navigation", MalformedJson),
])
def test_invalid_category_ground_truth(tmp_path, values, error):
    with pytest.raises(error):
        load_ground_truth(
            write_json(tmp_path / "modules.json", {"0x8000": "AC_WPNav"}),
            write_json(tmp_path / "categories.json", {"AC_WPNav": values}),
        )


def test_invalid_module_ground_truth(tmp_path):
    categories = write_json(tmp_path / "categories.json", {})
    with pytest.raises(MalformedJson):
        load_ground_truth(write_json(tmp_path / "modules.json", ["0x8000"]), categories)
    with pytest.raises(BadHex):
        load_ground_truth(write_json(tmp_path / "modules.json", {"nope": "A"}), categories)
