# app/schemas/analysis.py
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class InstructionKind(str, Enum):
    call = "call"
    branch = "branch"
    ret = "return"
    pc_relative_load = "pc_relative_load"
    mov_immediate_pair = "mov_immediate_pair"
    other = "other"


class Instruction(BaseModel):
    model_config = ConfigDict(frozen=True)

    addr: int
    size: int = Field(..., ge=2, le=4)
    kind: InstructionKind = InstructionKind.other
    mnemonic: str = ""
    target: Optional[int] = None
    immediate: Optional[int] = None
    conditional: bool = False

    @model_validator(mode="after")
    def _check(self) -> "Instruction":
        if self.size not in (2, 4):
            raise ValueError(f"tamaño de instrucción inválido: {self.size}")
        # llamadas indirectas (blx rN) no tienen destino
        needs_target = self.kind in (InstructionKind.branch, InstructionKind.pc_relative_load)
        if needs_target and self.target is None:
            raise ValueError(f"{self.kind.value} sin destino en {self.addr:#x}")
        return self

    @property
    def indirect(self) -> bool:
        return self.kind == InstructionKind.call and self.target is None


class FunctionRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    entry: int
    end: int
    name: Optional[str] = None
    thumb: bool = True

    @model_validator(mode="after")
    def _check_extent(self) -> "FunctionRecord":
        if self.entry >= self.end:
            raise ValueError(f"extensión vacía para la función {self.entry:#x}")
        return self

    def contains(self, addr: int) -> bool:
        return self.entry <= addr < self.end


class CallSite(BaseModel):
    model_config = ConfigDict(frozen=True)

    caller: int
    callee: int
    site: int


class DataRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    function: int
    data_addr: int
