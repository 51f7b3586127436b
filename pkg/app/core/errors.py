# app/core/errors.py
"""
Jerarquía de errores del pipeline. Cada familia lleva su código de salida.
"""
from typing import Optional


class FirmwareAnalysisError(Exception):
    exit_code = 1


# ===================== FAMILIAS =====================

class InputError(FirmwareAnalysisError):
    """Entradas mal formadas (binarios, corpus, grafos, particiones)"""
    exit_code = 1


class ConfigError(FirmwareAnalysisError):
    exit_code = 2


class MissingArtifact(FirmwareAnalysisError):
    exit_code = 3


class EndpointError(FirmwareAnalysisError):
    exit_code = 4


# ===================== BINARIO =====================

class NotElf(InputError):
    pass


class UnsupportedMachine(InputError):
    pass


class TruncatedFile(InputError):
    pass


class OverlappingSections(InputError):
    pass


class NoSymbolInformation(InputError):
    pass


class NoExecutableSection(InputError):
    pass


# ===================== GRAFOS / CLUSTERING =====================

class NodeSetMismatch(InputError):
    pass


class InvalidWeights(InputError):
    pass


class IncompletePartition(InputError):
    pass


class TooLarge(InputError):
    pass


# ===================== CORPUS =====================

class DuplicateEntry(InputError):
    pass


class BadHex(InputError):
    pass


class UnknownCategory(InputError):
    pass


class EmptyCategorySet(InputError):
    pass


class MalformedJson(InputError):
    pass


class MissingFile(MissingArtifact):
    pass


# ===================== LLM =====================

class EndpointUnreachable(EndpointError):
    pass


class HttpError(EndpointError):
    def __init__(self, status: int, message: Optional[str] = None):
        self.status = status
        super().__init__(message or f"HTTP {status}")


class MalformedResponse(EndpointError):
    pass


class RetriesExhausted(EndpointError):
    pass


class EmptyText(InputError):
    pass


# ===================== CATEGORIZACIÓN =====================

class MissingDefinition(InputError):
    pass


class NoSummaries(InputError):
    pass


class UnparseableRanking(InputError):
    pass


class BadK(InputError):
    pass


class SkippedNoSummaries(InputError):
    pass


# ===================== NORMALIZACIÓN =====================

class UnterminatedComment(InputError):
    pass


# ===================== EVALUACIÓN =====================

class UncoveredFunction(InputError):
    pass


class EmptyGroundTruth(InputError):
    pass


class MissingGroundTruth(MissingArtifact):
    pass


class ZeroVector(InputError):
    pass


# ===================== PROYECTO =====================

class StaleArtifact(MissingArtifact):
    pass


class ProjectLocked(ConfigError):
    pass
