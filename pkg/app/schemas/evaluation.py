# app/schemas/evaluation.py
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class ModuleMatch(BaseModel):
    gt_module: str
    predicted_cluster: Optional[int] = None
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)
    p_i: float = Field(..., ge=0, le=1)
    r_i: float = Field(..., ge=0, le=1)
    f1_i: float = Field(..., ge=0, le=1)
    n_i: int = Field(..., ge=0)


class ModularizationReport(BaseModel):
    device: str
    module_count: int
    function_count: int
    p_w: float = Field(..., ge=0, le=1)
    r_w: float = Field(..., ge=0, le=1)
    f1_w: float = Field(..., ge=0, le=1)
    matches: List[ModuleMatch] = Field(default_factory=list)


class CategoryScore(BaseModel):
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = Field(0.0, ge=0, le=1)
    recall: float = Field(0.0, ge=0, le=1)
    f1: float = Field(0.0, ge=0, le=1)


class CategoryReport(BaseModel):
    device: str = ""
    model: str = ""
    source: str = "decompiled"
    scores: Dict[str, CategoryScore]


class SimilarityStats(BaseModel):
    device: str
    model: str
    mean: float = Field(..., ge=-1, le=1)
    std: float = Field(..., ge=0)
    pairs: int


class SimilarityReport(BaseModel):
    entries: List[SimilarityStats] = Field(default_factory=list)
    cosines: Dict[str, List[float]] = Field(default_factory=dict)
