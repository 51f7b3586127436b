# app/schemas/corpus.py
from typing import Dict, FrozenSet

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.categories import Category


def count_non_blank_lines(text: str) -> int:
    return sum(1 for line in text.splitlines() if line.strip())


class ManifestRow(BaseModel):
    entry: str
    file: str


class DecompiledFunction(BaseModel):
    model_config = ConfigDict(frozen=True)

    entry: int
    text: str
    line_count: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_lines(self) -> "DecompiledFunction":
        if self.line_count != count_non_blank_lines(self.text):
            raise ValueError(f"line_count inconsistente para {self.entry:#x}")
        return self

    @classmethod
    def from_text(cls, entry: int, text: str) -> "DecompiledFunction":
        return cls(entry=entry, text=text, line_count=count_non_blank_lines(text))


class GroundTruthModules(BaseModel):
    """entrada de función -> nombre del módulo real"""
    mapping: Dict[int, str]

    def modules(self) -> Dict[str, FrozenSet[int]]:
        grouped: Dict[str, set] = {}
        for entry, module in self.mapping.items():
            grouped.setdefault(module, set()).add(entry)
        return {name: frozenset(members) for name, members in sorted(grouped.items())}


class GroundTruthCategories(BaseModel):
    """nombre de módulo -> conjunto no vacío de categorías"""
    mapping: Dict[str, FrozenSet[Category]]

    @model_validator(mode="after")
    def _non_empty(self) -> "GroundTruthCategories":
        for module, categories in self.mapping.items():
            if not categories:
                raise ValueError(f"{module}: conjunto de categorías vacío")
        return self
