# app/schemas/categories.py
from enum import Enum
from typing import List, Optional, Set

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Category(str, Enum):
    data_transfer = "data_transfer"
    navigation = "navigation"
    controller = "controller"
    safety_check = "safety_check"
    other = "other"


# Orden canónico para completar rankings parciales
CANONICAL_ORDER: List[Category] = list(Category)


class CategoryDefinition(BaseModel):
    model_config = ConfigDict(frozen=True)

    category: Category
    definition_text: str = Field(..., min_length=1)


class FunctionSummary(BaseModel):
    entry: int
    module: int
    summary_text: str = ""
    model: str
    truncated: bool = False
    latency_seconds: float = Field(0.0, ge=0)
    error: Optional[str] = None

    @model_validator(mode="after")
    def _check(self) -> "FunctionSummary":
        if self.error is None and not self.summary_text.strip():
            raise ValueError(f"resumen vacío para {self.entry:#x}")
        return self

    @property
    def ok(self) -> bool:
        return self.error is None


class CategoryRanking(BaseModel):
    module: int
    ordered: List[Category]
    raw_text: str = ""

    @model_validator(mode="after")
    def _permutation(self) -> "CategoryRanking":
        if sorted(c.value for c in self.ordered) != sorted(c.value for c in Category):
            raise ValueError("el ranking debe ser una permutación de las cinco categorías")
        return self


class ModulePrediction(BaseModel):
    module: int
    selected: Set[Category]
    k: int = Field(..., ge=1, le=5)
    gt_module: Optional[str] = None

    @model_validator(mode="after")
    def _size(self) -> "ModulePrediction":
        if len(self.selected) != self.k:
            raise ValueError("|selected| debe ser igual a k")
        return self
