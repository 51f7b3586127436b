# app/core/constants.py
"""
Constantes del pipeline de módulos de firmware
"""

# ===================== PROYECTO =====================
PROJECT_FILES = ("project.toml", "project.json")

# Subdirectorios del ProjectStore
STORE_DIRS = ("graphs", "partitions", "summaries", "rankings", "reports", "cache", "normalized")

LOCK_FILE = ".lock"

# ===================== BINARIO =====================
# Secciones que contienen variables globales/estáticas y literales
DATA_SECTION_NAMES = (".data", ".bss", ".rodata")

# e_machine aceptado
ARM_MACHINE = "EM_ARM"

# ===================== CORPUS =====================
# Mínimo de líneas no vacías para resumir una función
DEFAULT_LENGTH_THRESHOLD = 15

# ===================== GRAFOS =====================
GRAPH_SOURCES = ("SG", "DRG", "CG", "combined")

# Límite del oráculo de fuerza bruta (Bell(10) = 115975 particiones)
BRUTE_FORCE_MAX_NODES = 10

# ===================== LLM =====================
TRUNCATION_MARKER = "[function text truncated]"

REFORMAT_INSTRUCTION = "Answer with only the five category names, ranked, one per line."

SUMMARY_SYSTEM_PROMPT = (
    "You are an expert reverse engineer analyzing decompiled code recovered from a "
    "stripped ARM firmware binary of a robotic vehicle. Identifier names were lost "
    "during compilation, so rely on the operations, constants and control flow."
)

SUMMARY_INSTRUCTION = (
    "Summarize the purpose of the following decompiled function concisely, in two to "
    "four sentences of plain prose. Do not include code."
)

CATEGORY_SYSTEM_PROMPT = (
    "You are an expert in cyber-physical systems firmware. You classify software "
    "modules of robotic vehicles from summaries of the functions they contain."
)

CATEGORY_INSTRUCTION = (
    "The functions above belong to one module of a stripped robotic firmware binary. "
    "Using only the category definitions, rank all five categories from most to least "
    "likely for this module. Output the five category names, one per line, most "
    "likely first, and nothing else."
)

# Definiciones por defecto (sobrescribibles con un JSON {categoria: definicion})
DEFAULT_CATEGORY_DEFINITIONS = {
    "data_transfer": (
        "Data Transfer: communication between the vehicle, its sensors, peripherals and "
        "ground stations, e.g. MAVLink message packing, sending and parsing, serial/UART, "
        "SPI, I2C and CAN drivers, telemetry streams and logging transports."
    ),
    "navigation": (
        "Navigation: estimating and planning where the vehicle is and goes, e.g. GPS "
        "processing, position and velocity estimation, waypoint and path following, "
        "route optimization, geofence geometry and terrain data."
    ),
    "controller": (
        "Controller: commanding the vehicle's behavior and dynamics, e.g. attitude and "
        "rate PID loops, motor and servo output mixing, throttle, steering and braking, "
        "flight or drive modes that translate targets into actuator commands."
    ),
    "safety_check": (
        "Safety Check: monitoring the integrity of the system and its environment to "
        "prevent accidents, e.g. arming checks, failsafes, battery and sensor health "
        "monitoring, crash detection and emergency landing or stop logic."
    ),
    "other": (
        "Other: functionality that fits none of the categories above, e.g. generic "
        "math and container utilities, memory management, scheduling and runtime support."
    ),
}

# Sinónimos reconocidos en las respuestas (patrón regex -> categoría)
CATEGORY_SYNONYMS = (
    (r"data[\s_-]*transfers?", "data_transfer"),
    (r"navigation", "navigation"),
    (r"control(?:lers?|s)?", "controller"),
    (r"safety(?:[\s_-]*checks?)?", "safety_check"),
    (r"others?", "other"),
)

# ===================== NORMALIZACIÓN =====================
C_KEYWORDS = {
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double",
    "else", "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long",
    "register", "restrict", "return", "short", "signed", "sizeof", "static", "struct",
    "switch", "typedef", "union", "unsigned", "void", "volatile", "while",
    "_Alignas", "_Alignof", "_Atomic", "_Bool", "_Complex", "_Generic", "_Imaginary",
    "_Noreturn", "_Static_assert", "_Thread_local",
}

CPP_KEYWORDS = {
    "alignas", "alignof", "and", "and_eq", "asm", "bitand", "bitor", "bool", "catch",
    "char16_t", "char32_t", "class", "compl", "constexpr", "const_cast", "decltype",
    "delete", "dynamic_cast", "explicit", "export", "false", "final", "friend",
    "mutable", "namespace", "new", "noexcept", "not", "not_eq", "nullptr", "operator",
    "or", "or_eq", "override", "private", "protected", "public", "reinterpret_cast",
    "static_assert", "static_cast", "template", "this", "thread_local", "throw",
    "true", "try", "typeid", "typename", "using", "virtual", "wchar_t", "xor", "xor_eq",
}

FIXED_WIDTH_TYPES = {
    "int8_t", "int16_t", "int32_t", "int64_t",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "size_t", "bool", "true", "false", "NULL", "nullptr",
}

PREPROCESSOR_DIRECTIVES = {
    "include", "define", "undef", "ifdef", "ifndef", "elif", "endif", "pragma",
    "error", "warning", "line", "defined",
}

RESERVED_IDENTIFIERS = frozenset(C_KEYWORDS | CPP_KEYWORDS | FIXED_WIDTH_TYPES | PREPROCESSOR_DIRECTIVES)

SOURCE_SUFFIXES = (".c", ".cpp", ".cc", ".h", ".hpp")
