# app/services/elf_loader.py
import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from elftools.common.exceptions import DWARFError, ELFError
from elftools.elf.constants import SH_FLAGS
from elftools.elf.elffile import ELFFile
from elftools.elf.sections import SymbolTableSection

from app.core.constants import ARM_MACHINE, DATA_SECTION_NAMES
from app.core.errors import (
    MissingFile, NoSymbolInformation, NotElf, OverlappingSections,
    TruncatedFile, UnsupportedMachine,
)
from app.schemas.binary import (
    BinaryImage, NameAddressMap, Section, SectionFlags, SymbolEntry, SymbolKind,
)

logger = logging.getLogger(__name__)

ELF_MAGIC = b"\x7fELF"

# Símbolos de mapeo ARM ($a, $t, $d) que marcan regiones, no funciones
_MAPPING_PREFIXES = ("$a", "$t", "$d")


def _open_elf(path: Path) -> Tuple[ELFFile, bytes]:
    if not path.exists():
        raise MissingFile(f"no existe el binario {path}")

    raw = path.read_bytes()
    if raw[:4] != ELF_MAGIC:
        raise NotElf(f"{path.name}: no comienza con la firma ELF")

    try:
        return ELFFile(io.BytesIO(raw)), raw
    except ELFError as e:
        raise TruncatedFile(f"{path.name}: cabecera ELF ilegible ({e})") from e
    except Exception as e:
        raise TruncatedFile(f"{path.name}: archivo truncado ({e})") from e


def _load_sections(elf: ELFFile, raw: bytes, name: str) -> List[Section]:
    sections = []
    for sec in elf.iter_sections():
        flags = sec["sh_flags"]
        if not flags & SH_FLAGS.SHF_ALLOC:
            continue

        nobits = sec["sh_type"] == "SHT_NOBITS"
        size = sec["sh_size"]
        offset = sec["sh_offset"]
        if not nobits and offset + size > len(raw):
            raise TruncatedFile(
                f"{name}: la sección {sec.name} termina en {offset + size:#x}, "
                f"más allá del final del archivo ({len(raw):#x})"
            )

        sections.append(Section(
            name=sec.name,
            vaddr=sec["sh_addr"],
            size=size,
            flags=SectionFlags(
                executable=bool(flags & SH_FLAGS.SHF_EXECINSTR),
                writable=bool(flags & SH_FLAGS.SHF_WRITE),
                allocated=True,
                has_file_bytes=not nobits,
            ),
            data=b"" if nobits else raw[offset:offset + size],
        ))

    sections.sort(key=lambda s: (s.vaddr, s.name))

    # IMPORTANTE: la clasificación de direcciones posterior exige rangos disjuntos
    sized = [s for s in sections if s.size > 0]
    for a, b in zip(sized, sized[1:]):
        if a.end > b.vaddr:
            raise OverlappingSections(
                f"{name}: {a.name} [{a.vaddr:#x}, {a.end:#x}) se solapa con {b.name} en {b.vaddr:#x}"
            )
    return sections


def _load_symbols(elf: ELFFile) -> List[SymbolEntry]:
    symtab = elf.get_section_by_name(".symtab")
    if not isinstance(symtab, SymbolTableSection):
        return []

    symbols = []
    for sym in symtab.iter_symbols():
        if not sym.name or sym.name.startswith(_MAPPING_PREFIXES):
            continue
        if sym["st_shndx"] == "SHN_UNDEF":
            continue

        sym_type = sym["st_info"]["type"]
        value = sym["st_value"]
        thumb = False

        if sym_type == "STT_FUNC":
            kind = SymbolKind.function
            # Convención ARM: el bit bajo marca código Thumb
            thumb = bool(value & 1)
            value &= ~1
        elif sym_type == "STT_OBJECT":
            kind = SymbolKind.object
        else:
            kind = SymbolKind.other

        symbols.append(SymbolEntry(
            name=sym.name, addr=value, size=sym["st_size"], kind=kind, thumb=thumb,
        ))

    symbols.sort(key=lambda s: (s.addr, s.name))
    return symbols


def load_elf(path: Path) -> BinaryImage:
    """Carga un ELF ARM con todas sus secciones asignadas materializadas"""
    path = Path(path)
    elf, raw = _open_elf(path)

    machine = elf["e_machine"]
    if machine != ARM_MACHINE:
        raise UnsupportedMachine(f"{path.name}: arquitectura {machine}, se requiere ARM")

    image = BinaryImage(
        path=path,
        machine=machine,
        endianness="little" if elf.little_endian else "big",
        entry_point=elf["e_entry"],
        sections=_load_sections(elf, raw, path.name),
        symbols=_load_symbols(elf),
    )

    logger.info(
        f"ELF {path.name}: {len(image.sections)} secciones, {len(image.symbols)} símbolos, "
        f"entrada {image.entry_point:#x} ({image.endianness}-endian)"
    )
    return image


def data_sections(image: BinaryImage) -> List[Section]:
    """Secciones .data/.bss/.rodata presentes, por vaddr ascendente"""
    return sorted(
        (s for s in image.sections if s.name in DATA_SECTION_NAMES),
        key=lambda s: s.vaddr,
    )


def _die_name(die) -> Optional[str]:
    if "DW_AT_name" in die.attributes:
        value = die.attributes["DW_AT_name"].value
        return value.decode("utf-8", errors="replace") if isinstance(value, bytes) else str(value)

    # Definiciones C++ fuera de la clase apuntan a su declaración
    for attr in ("DW_AT_specification", "DW_AT_abstract_origin"):
        if attr in die.attributes:
            return _die_name(die.get_DIE_from_attribute(attr))
    return None


def _dwarf_subprograms(path: Path) -> Dict[int, Tuple[str, bool]]:
    elf, _ = _open_elf(path)
    if not elf.has_dwarf_info():
        return {}

    found: Dict[int, Tuple[str, bool]] = {}
    try:
        dwarf = elf.get_dwarf_info()
        for cu in dwarf.iter_CUs():
            for die in cu.iter_DIEs():
                if die.tag != "DW_TAG_subprogram":
                    continue
                if "DW_AT_declaration" in die.attributes or "DW_AT_low_pc" not in die.attributes:
                    continue

                name = _die_name(die)
                if not name:
                    continue

                low_pc = die.attributes["DW_AT_low_pc"].value
                found[low_pc & ~1] = (name, bool(low_pc & 1))
    except (DWARFError, ELFError) as e:
        logger.warning(f"DWARF ilegible en {path.name}: {e}")

    return found


def build_name_address_map(image: BinaryImage) -> NameAddressMap:
    """
    Mapa nombre <-> dirección para alinear la evaluación.
    DWARF tiene precedencia sobre .symtab cuando ambos describen la misma dirección.
    """
    by_address: Dict[int, Tuple[str, bool]] = {
        sym.addr: (sym.name, sym.thumb) for sym in image.function_symbols()
    }
    dwarf = _dwarf_subprograms(Path(image.path))

    if not by_address and not dwarf:
        raise NoSymbolInformation(f"{Path(image.path).name}: binario sin símbolos ni DWARF")

    overridden = 0
    for addr, (name, thumb) in dwarf.items():
        if addr in by_address and by_address[addr][0] != name:
            overridden += 1
        # el bit Thumb de .symtab es más fiable que low_pc
        previous = by_address.get(addr)
        by_address[addr] = (name, previous[1] if previous else thumb)

    if overridden:
        logger.debug(f"{overridden} nombres de .symtab reemplazados por DWARF")

    ordered = sorted(by_address.items())
    return NameAddressMap(
        entries=[(name, addr) for addr, (name, _) in ordered],
        thumb={addr: thumb for addr, (_, thumb) in ordered},
    )
