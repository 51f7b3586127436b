# app/services/source_normalizer.py
"""
Normalización de código fuente C/C++: extracción de cuerpos de función,
eliminación de comentarios y anonimización léxica de identificadores.
"""
import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Set, Tuple

from app.core.constants import RESERVED_IDENTIFIERS, SOURCE_SUFFIXES
from app.core.errors import UnterminatedComment
from app.schemas.binary import NameAddressMap
from app.schemas.source import NormalizedFunction, SourceFunction

logger = logging.getLogger(__name__)

_TOKEN_SPEC = [
    ("block_comment", r"/\*.*?\*/"),
    ("unterminated", r"/\*"),
    ("line_comment", r"//(?:[^\n\\]|\\.)*"),
    ("string", r'(?:u8|u|U|L)?"(?:[^"\\\n]|\\.)*"'),
    ("char", r"(?:u8|u|U|L)?'(?:[^'\\\n]|\\.)*'"),
    ("number", r"\.?[0-9](?:[eEpP][+-]|[0-9A-Za-z_.'])*"),
    ("identifier", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("whitespace", r"\s+"),
    ("punct", r"->|\+\+|--|<<=|>>=|<<|>>|<=|>=|==|!=|&&|\|\||::|[-+*/%&|^]=|."),
]
_MASTER = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC), re.DOTALL)

_COMMENTS = ("block_comment", "line_comment")
_TRIVIA = ("whitespace",) + _COMMENTS
_ACCESS_SPECIFIERS = {"public", "private", "protected"}
_ANONYMIZED = re.compile(r"(?:FUNC|ID)_[0-9]+")


class Token(NamedTuple):
    kind: str
    value: str
    start: int


def tokenize(text: str) -> List[Token]:
    tokens = []
    for match in _MASTER.finditer(text):
        kind = match.lastgroup
        if kind == "unterminated":
            line = text.count("\n", 0, match.start()) + 1
            raise UnterminatedComment(f"comentario /* sin cerrar en la línea {line}")
        tokens.append(Token(kind, match.group(), match.start()))
    return tokens


def significant_tokens(text: str) -> List[Token]:
    return [t for t in tokenize(text) if t.kind not in _TRIVIA]


def strip_comments(text: str) -> str:
    """Quita /*...*/ (reemplazado por un espacio) y //... respetando literales"""
    parts = []
    for token in tokenize(text):
        if token.kind == "block_comment":
            parts.append(" ")
        elif token.kind == "line_comment":
            continue
        else:
            parts.append(token.value)
    return "".join(parts)


def _fresh_name(prefix: str, counter: int, taken: Set[str]) -> Tuple[str, int]:
    """Primer `prefix_n` con n >= counter que no es un identificador del cuerpo"""
    while f"{prefix}_{counter}" in taken:
        counter += 1
    return f"{prefix}_{counter}", counter + 1


def anonymize_identifiers(func: SourceFunction) -> NormalizedFunction:
    """
    Renombra todo identificador no reservado: el nombre propio a FUNC_0 y el
    resto a ID_0, ID_1... por orden de primera aparición. Los nombres que ya
    tienen forma anónima se conservan y los nuevos saltan los existentes,
    así ningún original renombrado reaparece en el resultado.
    """
    own = func.name.split("::")[-1]
    tokens = tokenize(func.body_text)
    originals = {t.value for t in tokens if t.kind == "identifier" and t.value not in RESERVED_IDENTIFIERS}

    own_name, _ = _fresh_name("FUNC", 0, originals - {own})
    mapping: Dict[str, str] = {own: own_name}
    counter = 0
    parts = []

    for token in tokens:
        if token.kind != "identifier" or token.value in RESERVED_IDENTIFIERS:
            parts.append(token.value)
            continue

        renamed = mapping.get(token.value)
        if renamed is None:
            if _ANONYMIZED.fullmatch(token.value):
                renamed = token.value
            else:
                renamed, counter = _fresh_name("ID", counter, originals)
            mapping[token.value] = renamed
        parts.append(renamed)

    rename_map = {
        original: new for original, new in mapping.items()
        if original != new and original in originals
    }
    return NormalizedFunction(name=func.name, normalized_text="".join(parts), rename_map=rename_map)


def normalize_function(func: SourceFunction) -> NormalizedFunction:
    stripped = SourceFunction(name=func.name, file=func.file, body_text=strip_comments(func.body_text))
    return anonymize_identifiers(stripped)


# ===================== EXTRACCIÓN =====================

def _matching(tokens: List[Token], index: int, open_: str, close: str) -> Optional[int]:
    depth = 0
    for i in range(index, len(tokens)):
        if tokens[i].value == open_:
            depth += 1
        elif tokens[i].value == close:
            depth -= 1
            if depth == 0:
                return i
    return None


def _body_open(tokens: List[Token], after_params: int) -> Optional[int]:
    """
    Índice de la '{' que abre el cuerpo si lo que sigue a la lista de
    parámetros es una definición (calificadores, noexcept(...), lista de
    inicialización de constructor); None si es una declaración o un uso.
    """
    in_init_list = False
    i = after_params
    while i < len(tokens):
        value = tokens[i].value
        if value == "{":
            previous = tokens[i - 1]
            if in_init_list and (previous.kind == "identifier" or previous.value == ">"):
                # inicialización con llaves de un miembro: b{y}
                close = _matching(tokens, i, "{", "}")
                if close is None:
                    return None
                i = close + 1
                continue
            return i
        if value in (";", "=", "}", ")") or (value == "," and not in_init_list):
            return None
        if value == ":":
            in_init_list = True
        elif value in ("(", "["):
            close = _matching(tokens, i, value, ")" if value == "(" else "]")
            if close is None:
                return None
            i = close
        i += 1
    return None


def _definition_start(text: str, tokens: List[Token], name_index: int) -> int:
    """Inicio del texto de la definición: tras el ';', '}', '{', 'public:' o la directiva anterior"""
    start_index = 0
    for i in range(name_index - 1, -1, -1):
        token = tokens[i]
        line_start = text.rfind("\n", 0, token.start) + 1
        if text[line_start:token.start].strip() == "" and token.value == "#":
            start_index = i
            # la directiva ocupa su línea: el cuerpo empieza en el siguiente token
            line_end = text.find("\n", token.start)
            while start_index < name_index and (line_end == -1 or tokens[start_index].start < line_end):
                start_index += 1
            break
        if token.value in (";", "}", "{"):
            start_index = i + 1
            break
        if token.value == ":" and i > 0 and tokens[i - 1].value in _ACCESS_SPECIFIERS:
            start_index = i + 1
            break
    return tokens[start_index].start


def _definitions_in_file(text: str, wanted: Set[str]) -> Iterator[Tuple[str, str]]:
    """(nombre corto, texto de la definición) para cada definición encontrada"""
    tokens = significant_tokens(text)
    for i, token in enumerate(tokens):
        if token.kind != "identifier" or token.value not in wanted:
            continue
        if i + 1 >= len(tokens) or tokens[i + 1].value != "(":
            continue

        params_close = _matching(tokens, i + 1, "(", ")")
        if params_close is None:
            continue
        body_open = _body_open(tokens, params_close + 1)
        if body_open is None:
            continue
        body_close = _matching(tokens, body_open, "{", "}")
        if body_close is None:
            continue

        start = _definition_start(text, tokens, i)
        end = tokens[body_close].start + 1
        yield token.value, text[start:end]


def source_files(source_root: Path) -> List[Path]:
    return sorted(
        p for p in Path(source_root).rglob("*")
        if p.is_file() and p.suffix in SOURCE_SUFFIXES
    )


def extract_function_bodies(
    source_root: Path,
    wanted: NameAddressMap,
) -> Tuple[List[SourceFunction], List[str], List[str]]:
    """
    Busca la definición de cada nombre del mapa en los fuentes .c/.cpp/.h/.hpp.
    Devuelve (funciones encontradas, nombres no encontrados, nombres ambiguos).
    Un nombre es ambiguo si está en varias direcciones (funciones static), si
    tiene varias definiciones o si comparte nombre corto con otro buscado; no
    se extrae porque no hay forma de saber qué cuerpo va con qué dirección.
    """
    by_bare: Dict[str, List[str]] = defaultdict(list)
    for name in wanted.names():
        by_bare[name.split("::")[-1]].append(name)

    definitions: Dict[str, List[Tuple[Path, str]]] = defaultdict(list)
    for path in source_files(source_root):
        try:
            text = path.read_text(encoding="utf-8", errors="replace")
            for bare, body in _definitions_in_file(text, set(by_bare)):
                definitions[bare].append((path, body))
        except UnterminatedComment as e:
            logger.warning(f"⚠️ {path}: {e}; se omite el archivo")

    found: List[SourceFunction] = []
    not_found: List[str] = []
    ambiguous: List[str] = []
    for name in wanted.names():
        bare = name.split("::")[-1]
        candidates = definitions.get(bare, [])
        if not candidates:
            not_found.append(name)
        elif len(candidates) > 1 or len(by_bare[bare]) > 1 or len(wanted.addresses_of(name)) > 1:
            ambiguous.append(name)
        else:
            path, body = candidates[0]
            found.append(SourceFunction(name=name, file=path, body_text=body))

    if ambiguous:
        logger.warning(f"⚠️ {len(ambiguous)} nombres ambiguos sin extraer: {', '.join(ambiguous[:5])}")
    logger.info(
        f"Fuentes: {len(found)} funciones extraídas, {len(not_found)} no encontradas, "
        f"{len(ambiguous)} ambiguas"
    )
    return found, not_found, ambiguous


def normalize_corpus(functions: List[SourceFunction]) -> List[NormalizedFunction]:
    normalized = []
    for func in functions:
        try:
            normalized.append(normalize_function(func))
        except UnterminatedComment as e:
            logger.warning(f"⚠️ {func.name}: {e}")
    return normalized


def tokens_of(text: str) -> List[str]:
    """Tokens sin espacios ni comentarios (para comparar conteos)"""
    return [t.value for t in significant_tokens(text)]


def identifiers_of(text: str) -> Set[str]:
    return {t.value for t in tokenize(text) if t.kind == "identifier"}
