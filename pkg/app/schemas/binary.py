# app/schemas/binary.py
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SymbolKind(str, Enum):
    function = "function"
    object = "object"
    other = "other"


class SectionFlags(BaseModel):
    model_config = ConfigDict(frozen=True)

    executable: bool = False
    writable: bool = False
    allocated: bool = True
    has_file_bytes: bool = True


class Section(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    vaddr: int = Field(..., ge=0)
    size: int = Field(..., ge=0)
    flags: SectionFlags
    data: bytes = b""

    @model_validator(mode="after")
    def _check_bytes(self) -> "Section":
        expected = self.size if self.flags.has_file_bytes else 0
        if len(self.data) != expected:
            raise ValueError(f"{self.name}: {len(self.data)} bytes, se esperaban {expected}")
        return self

    @property
    def end(self) -> int:
        return self.vaddr + self.size

    def contains(self, addr: int) -> bool:
        return self.vaddr <= addr < self.end


class SymbolEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    addr: int
    size: int = 0
    kind: SymbolKind
    thumb: bool = False


class BinaryImage(BaseModel):
    """Imagen ELF cargada; inmutable tras la carga"""
    model_config = ConfigDict(frozen=True)

    path: Path
    machine: str
    endianness: Literal["little", "big"]
    entry_point: int
    sections: List[Section]
    symbols: List[SymbolEntry] = Field(default_factory=list)

    def section_for(self, addr: int) -> Optional[Section]:
        for section in self.sections:
            if section.contains(addr):
                return section
        return None

    def executable_sections(self) -> List[Section]:
        return [s for s in self.sections if s.flags.executable]

    def function_symbols(self) -> List[SymbolEntry]:
        return [s for s in self.symbols if s.kind == SymbolKind.function]


class NameAddressMap(BaseModel):
    """Nombre de función <-> dirección de entrada (una entrada por dirección)"""
    entries: List[Tuple[str, int]] = Field(default_factory=list)
    thumb: Dict[int, bool] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _unique_addresses(self) -> "NameAddressMap":
        addresses = [addr for _, addr in self.entries]
        if len(addresses) != len(set(addresses)):
            raise ValueError("dos entradas comparten dirección")
        return self

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> List[str]:
        return sorted({name for name, _ in self.entries})

    def addresses_of(self, name: str) -> List[int]:
        return [addr for entry_name, addr in self.entries if entry_name == name]

    def name_at(self, addr: int) -> Optional[str]:
        for name, entry_addr in self.entries:
            if entry_addr == addr:
                return name
        return None
