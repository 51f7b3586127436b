import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.errors import UnterminatedComment
from app.schemas.binary import NameAddressMap
from app.schemas.source import SourceFunction
from app.services.source_normalizer import (
    anonymize_identifiers, extract_function_bodies, identifiers_of,
    normalize_corpus, normalize_function, strip_comments, tokens_of,
)


def source(name: str, body: str) -> SourceFunction:
    return SourceFunction(name=name, file="x.c", body_text=body)


def wanted(*names: str) -> NameAddressMap:
    return NameAddressMap(entries=[(name, 0x8000 + 4 * i) for i, name in enumerate(names)])


# ===================== COMENTARIOS =====================

def test_strip_line_comment():
    assert strip_comments("x = 1; // set\ny = 2;") == "x = 1; \ny = 2;"


def test_strip_block_comment():
    assert strip_comments("a = /* one\ntwo */ b;") == "a =   b;"


def test_comment_markers_inside_literals():
    text = 's = "// not a comment"; c = \'/\'; t = "/* nor this */";'
    assert strip_comments(text) == text


def test_unterminated_comment():
    with pytest.raises(UnterminatedComment):
        strip_comments("int x; /* open")


# ===================== ANONIMIZACIÓN =====================

def test_anonymize_add():
    result = anonymize_identifiers(source("add", "int add(int a,int b){return a+b;}"))
    assert result.normalized_text == "int FUNC_0(int ID_0,int ID_1){return ID_0+ID_1;}"
    assert result.rename_map == {"add": "FUNC_0", "a": "ID_0", "b": "ID_1"}


def test_repeated_identifier():
    assert anonymize_identifiers(source("f", "a+a")).normalized_text == "ID_0+ID_0"


def test_reserved_words_untouched():
    result = anonymize_identifiers(source("f", "return 0;"))
    assert result.normalized_text == "return 0;"
    assert result.rename_map == {}

    typed = anonymize_identifiers(source("f", "uint32_t n = sizeof(size_t) ? nullptr : NULL;"))
    assert typed.normalized_text == "uint32_t ID_0 = sizeof(size_t) ? nullptr : NULL;"


def test_literals_are_not_renamed():
    result = anonymize_identifiers(source("f", 'log("speed", speed, 0x1Fu, 1e-3f);'))
    assert result.normalized_text == 'ID_0("speed", ID_1, 0x1Fu, 1e-3f);'


def test_qualified_name_maps_own_name():
    body = "void AP_Motors::output(void) { output_armed(); }"
    result = normalize_function(source("AP_Motors::output", body))
    assert result.normalized_text == "void ID_0::FUNC_0(void) { ID_1(); }"


def test_new_names_skip_existing_identifiers():
    result = anonymize_identifiers(source("f", "int f(int b,int ID_0){return b+ID_0;}"))
    assert result.normalized_text == "int FUNC_0(int ID_1,int ID_0){return ID_1+ID_0;}"
    assert result.rename_map == {"f": "FUNC_0", "b": "ID_1"}
    assert not set(result.rename_map) & identifiers_of(result.normalized_text)

    again = anonymize_identifiers(source("f", result.normalized_text))
    assert again.normalized_text == result.normalized_text


def test_own_name_skips_existing_func_name():
    result = anonymize_identifiers(source("g", "int g(void){return FUNC_0();}"))
    assert result.normalized_text == "int FUNC_1(void){return FUNC_0();}"
    assert result.rename_map == {"g": "FUNC_1"}


@settings(max_examples=500, deadline=None)
@given(st.lists(st.sampled_from(["f", "b", "speed", "gps_read", "ID_0", "ID_1", "FUNC_0"]), min_size=1, max_size=12))
def test_no_leakage_with_anonymous_looking_names(names):
    result = anonymize_identifiers(source("f", "int f(void){return " + "+".join(names) + ";}"))
    assert not set(result.rename_map) & identifiers_of(result.normalized_text)

    again = anonymize_identifiers(source("f", result.normalized_text))
    assert again.normalized_text == result.normalized_text


# ===================== EXTRACCIÓN =====================

def test_extract_simple_definition(tmp_path):
    (tmp_path / "math.c").write_text("int add(int a,int b){return a+b;}\n", encoding="utf-8")
    functions, missing, _ = extract_function_bodies(tmp_path, wanted("add"))

    assert missing == []
    (add,) = functions
    assert add.body_text == "int add(int a,int b){return a+b;}"
    assert add.file == tmp_path / "math.c"


def test_call_site_is_not_a_definition(tmp_path):
    (tmp_path / "main.c").write_text(
        "int helper(int);\nint main(void) {\n  return helper(3);\n}\n", encoding="utf-8",
    )
    functions, missing, _ = extract_function_bodies(tmp_path, wanted("helper", "main"))
    assert [f.name for f in functions] == ["main"]
    assert missing == ["helper"]


def test_braces_inside_literals_and_comments(tmp_path):
    text = (
        "#include <stdio.h>\n"
        "static const char *brace(void) {\n"
        "  /* } */\n"
        "  char c = '}';\n"
        "  return \"}{}\"; // }\n"
        "}\n"
        "int after(void) { return 1; }\n"
    )
    (tmp_path / "tricky.c").write_text(text, encoding="utf-8")
    functions, _, _ = extract_function_bodies(tmp_path, wanted("brace", "after"))

    bodies = {f.name: f.body_text for f in functions}
    assert bodies["brace"].startswith("static const char *brace(void) {")
    assert bodies["brace"].endswith("return \"}{}\"; // }\n}")
    assert bodies["after"] == "int after(void) { return 1; }"


def test_cpp_methods(tmp_path):
    text = (
        "class Copter {\npublic:\n  void arm() { armed = true; }\n  bool armed;\n};\n"
        "Copter::Copter(int rate) : rate_hz(rate), state{0} {\n  init();\n}\n"
        "void Copter::update() const noexcept {\n  tick();\n}\n"
    )
    (tmp_path / "copter.cpp").write_text(text, encoding="utf-8")
    (tmp_path / "notes.txt").write_text("void ignored() {}\n", encoding="utf-8")
    functions, missing, _ = extract_function_bodies(tmp_path, wanted("Copter::arm", "Copter::update", "ignored"))

    bodies = {f.name: f.body_text for f in functions}
    assert bodies["Copter::arm"] == "void arm() { armed = true; }"
    assert bodies["Copter::update"] == "void Copter::update() const noexcept {\n  tick();\n}"
    assert missing == ["ignored"]


def test_file_with_unterminated_comment_is_skipped(tmp_path):
    (tmp_path / "a_broken.c").write_text("int f(void) { return 0; } /* open", encoding="utf-8")
    (tmp_path / "b_good.c").write_text("int g(void) { return 1; }", encoding="utf-8")
    functions, missing, _ = extract_function_bodies(tmp_path, wanted("f", "g"))
    assert [f.name for f in functions] == ["g"]
    assert missing == ["f"]


def test_static_name_at_two_addresses_is_ambiguous(tmp_path):
    (tmp_path / "gps.c").write_text("static int init(void) { return 1; }\n", encoding="utf-8")
    (tmp_path / "imu.c").write_text("static int init(void) { return 2; }\nint run(void) { return 0; }\n", encoding="utf-8")
    name_map = NameAddressMap(entries=[("init", 0x8000), ("init", 0x8040), ("run", 0x8080)])

    functions, missing, ambiguous = extract_function_bodies(tmp_path, name_map)
    assert [f.name for f in functions] == ["run"]
    assert missing == []
    assert ambiguous == ["init"]


def test_two_definitions_for_one_address_are_ambiguous(tmp_path):
    (tmp_path / "a.c").write_text("static int init(void) { return 1; }\n", encoding="utf-8")
    (tmp_path / "b.c").write_text("static int init(void) { return 2; }\n", encoding="utf-8")

    functions, missing, ambiguous = extract_function_bodies(tmp_path, wanted("init"))
    assert functions == []
    assert ambiguous == ["init"]


def test_methods_sharing_a_short_name_are_ambiguous(tmp_path):
    text = "void Gps::init() { open_port(); }\nvoid Imu::init() { reset(); }\n"
    (tmp_path / "drivers.cpp").write_text(text, encoding="utf-8")

    functions, _, ambiguous = extract_function_bodies(tmp_path, wanted("Gps::init", "Imu::init"))
    assert functions == []
    assert ambiguous == ["Gps::init", "Imu::init"]


# ===================== PROPIEDADES SOBRE UN CORPUS =====================

def corpus_function(i: int) -> str:
    return (
        f"static int32_t handler_{i}(int32_t value_{i}, const char *name)\n"
        "{\n"
        f"    /* brace }} in a comment for handler_{i} */\n"
        '    const char *trap = "}{ // not a comment";\n'
        f"    if (value_{i} > {i}) {{ // keep }}\n"
        f"        return gps_read(name) + value_{i} * {i};\n"
        "    }\n"
        f"    uint8_t mask = '}}' ^ 0x{i:02x}u;\n"
        f"    return handler_{i}(mask, trap) + AP_HAL::millis();\n"
        "}\n"
    )


@pytest.fixture
def corpus_tree(tmp_path):
    for i in range(50):
        folder = tmp_path / f"libraries/Lib{i % 5}"
        folder.mkdir(parents=True, exist_ok=True)
        with open(folder / f"unit{i % 3}.cpp", "a", encoding="utf-8") as f:
            f.write(corpus_function(i) + "\n")
    return tmp_path


def test_corpus_extraction_and_normalization(corpus_tree):
    names = [f"handler_{i}" for i in range(50)]
    functions, missing, _ = extract_function_bodies(corpus_tree, wanted(*names))

    assert missing == []
    assert len(functions) == 50
    for func in functions:
        assert func.body_text.startswith(f"static int32_t {func.name}(")
        assert func.body_text.endswith("}")

    normalized = normalize_corpus(functions)
    assert len(normalized) == 50

    for func, result in zip(functions, normalized):
        text = result.normalized_text
        # sin comentarios, salvo el texto dentro del literal
        assert "/*" not in text
        assert "// keep" not in text
        assert '"}{ // not a comment"' in text

        # sin fugas de nombres originales
        assert not set(result.rename_map) & identifiers_of(text)
        assert result.rename_map[func.name] == "FUNC_0"

        # mismo número de tokens que el original sin comentarios
        assert len(tokens_of(text)) == len(tokens_of(func.body_text))

        # idempotencia
        again = normalize_function(func.model_copy(update={"body_text": text}))
        assert again.normalized_text == text


def test_renaming_is_consistent(corpus_tree):
    functions, _, _ = extract_function_bodies(corpus_tree, wanted("handler_7"))
    result = normalize_function(functions[0])

    assert len(set(result.rename_map.values())) == len(result.rename_map)
    assert result.normalized_text.count(result.rename_map["value_7"]) == 3
