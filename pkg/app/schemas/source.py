# app/schemas/source.py
from pathlib import Path
from typing import Dict

from pydantic import BaseModel


class SourceFunction(BaseModel):
    name: str
    file: Path
    body_text: str


class NormalizedFunction(BaseModel):
    name: str
    normalized_text: str
    rename_map: Dict[str, str]
