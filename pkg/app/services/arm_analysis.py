# app/services/arm_analysis.py
"""
Análisis ARM/Thumb-2 del binario: fronteras de funciones, llamadas y
referencias a datos.

Capstone resuelve los límites de instrucción, los mnemónicos y los destinos
de salto. La aritmética relativa a PC (ldr literal, adr, movw/movt, add rX, pc) se
decodifica directamente de la codificación arquitectónica.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Set

from capstone import CS_ARCH_ARM, CS_MODE_ARM, CS_MODE_THUMB, Cs, CsInsn
from capstone.arm import (
    ARM_CC_AL, ARM_CC_INVALID, ARM_INS_B, ARM_INS_BL, ARM_INS_BLX, ARM_INS_BX,
    ARM_INS_CBNZ, ARM_INS_CBZ, ARM_INS_POP, ARM_INS_PUSH, ARM_OP_IMM,
    ARM_OP_REG, ARM_REG_LR, ARM_REG_PC,
)

from app.core.errors import InputError, NoExecutableSection
from app.schemas.analysis import CallSite, DataRef, FunctionRecord, Instruction, InstructionKind
from app.schemas.binary import BinaryImage, Section
from app.services.elf_loader import data_sections

logger = logging.getLogger(__name__)


def _align4(value: int) -> int:
    return value & ~3


def _rotated_immediate(word: int) -> int:
    """Inmediato modificado de ARM: imm8 rotado a la derecha 2*rot bits"""
    imm8 = word & 0xFF
    rotation = ((word >> 8) & 0xF) * 2
    return ((imm8 >> rotation) | (imm8 << (32 - rotation))) & 0xFFFFFFFF


@dataclass
class RegisterTrack:
    """
    Constantes conocidas por registro dentro de un bloque: mitades movw
    pendientes y valores completos (movw/movt o literal pool) que un
    `add rX, pc` posterior convierte en dirección.
    """
    low: Dict[int, int] = field(default_factory=dict)
    known: Dict[int, int] = field(default_factory=dict)

    def reset_block(self) -> None:
        self.known.clear()


def read_pool_word(image: BinaryImage, addr: int) -> int:
    """Lee una palabra de 32 bits respetando el endianness declarado del binario"""
    section = image.section_for(addr)
    if section is None or not section.flags.has_file_bytes or addr + 4 > section.end:
        raise InputError(f"la palabra en {addr:#x} no está respaldada por bytes del archivo")

    offset = addr - section.vaddr
    return int.from_bytes(section.data[offset:offset + 4], image.endianness)


class ThumbDecoder:
    """
    Decodificador del subconjunto de instrucciones que necesita el pipeline.
    Las instrucciones se leen siempre little-endian (convención BE8); solo
    las palabras del literal pool siguen el endianness del binario.
    """

    def __init__(self, image: BinaryImage):
        self.image = image
        self._thumb = Cs(CS_ARCH_ARM, CS_MODE_THUMB)
        self._thumb.detail = True
        self._arm = Cs(CS_ARCH_ARM, CS_MODE_ARM)
        self._arm.detail = True

    def iter_raw(
        self,
        code: bytes,
        base: int,
        thumb: bool,
        skip: Optional[Set[int]] = None,
    ) -> Iterator[CsInsn]:
        """
        Barrido lineal. Los bytes no decodificables se saltan con la
        granularidad del modo (2 en Thumb, 4 en ARM). `skip` contiene
        direcciones de literal pools conocidas y puede crecer durante el barrido.
        """
        cs = self._thumb if thumb else self._arm
        step = 2 if thumb else 4
        skip = skip if skip is not None else set()
        offset = 0

        while offset < len(code):
            addr = base + offset
            if addr in skip:
                offset += 4
                continue

            insn = next(cs.disasm(code[offset:offset + 4], addr, 1), None)
            if insn is None:
                offset += step
                continue

            yield insn
            offset += insn.size

    # ===================== CLASIFICACIÓN =====================

    def _branch_target(self, insn: CsInsn) -> Optional[int]:
        for op in insn.operands:
            if op.type == ARM_OP_IMM:
                return op.imm & 0xFFFFFFFF
        return None

    def _pc_relative(self, insn: CsInsn, thumb: bool) -> Optional[Instruction]:
        raw = bytes(insn.bytes)
        addr = insn.address

        if thumb and insn.size == 2:
            hw = int.from_bytes(raw, "little")
            pc = _align4(addr + 4)
            if (hw & 0xF800) == 0x4800:
                # LDR Rt, [PC, #imm8*4]
                pool = pc + (hw & 0xFF) * 4
                return self._literal_load(insn, pool)
            if (hw & 0xF800) == 0xA000:
                # ADR Rd, #imm8*4
                target = pc + (hw & 0xFF) * 4
                return Instruction(addr=addr, size=2, kind=InstructionKind.pc_relative_load,
                                   mnemonic=insn.mnemonic, target=target, immediate=target)
            return None

        if thumb:
            hw1 = int.from_bytes(raw[0:2], "little")
            hw2 = int.from_bytes(raw[2:4], "little")
            pc = _align4(addr + 4)
            if (hw1 & 0xFF7F) == 0xF85F:
                # LDR.W Rt, [PC, #±imm12]
                imm12 = hw2 & 0xFFF
                pool = pc + imm12 if (hw1 >> 7) & 1 else pc - imm12
                return self._literal_load(insn, pool)
            if (hw1 & 0xFBFF) in (0xF20F, 0xF2AF):
                # ADR.W: i:imm3:imm8, suma (T3) o resta (T2)
                imm12 = ((hw1 >> 10) & 1) << 11 | ((hw2 >> 12) & 7) << 8 | (hw2 & 0xFF)
                target = pc + imm12 if (hw1 & 0xFBFF) == 0xF20F else pc - imm12
                return Instruction(addr=addr, size=4, kind=InstructionKind.pc_relative_load,
                                   mnemonic=insn.mnemonic, target=target, immediate=target)
            return None

        word = int.from_bytes(raw, "little")
        if (word >> 28) == 0xF:
            return None
        pc = addr + 8
        if (word & 0x0F7F0000) == 0x051F0000:
            imm12 = word & 0xFFF
            pool = pc + imm12 if (word >> 23) & 1 else pc - imm12
            return self._literal_load(insn, pool)
        if (word & 0x0FFF0000) in (0x028F0000, 0x024F0000):
            imm = _rotated_immediate(word)
            target = pc + imm if (word & 0x0FFF0000) == 0x028F0000 else pc - imm
            return Instruction(addr=addr, size=4, kind=InstructionKind.pc_relative_load,
                               mnemonic=insn.mnemonic, target=target & 0xFFFFFFFF,
                               immediate=target & 0xFFFFFFFF)
        return None

    def _literal_load(self, insn: CsInsn, pool: int) -> Instruction:
        try:
            value = read_pool_word(self.image, pool)
        except InputError:
            value = None
        return Instruction(addr=insn.address, size=insn.size, kind=InstructionKind.pc_relative_load,
                           mnemonic=insn.mnemonic, target=pool, immediate=value)

    @staticmethod
    def _mov_half(insn: CsInsn, thumb: bool) -> Optional[tuple]:
        """(es_movt, registro, imm16) para movw/movt, None en otro caso"""
        raw = bytes(insn.bytes)
        if insn.size != 4:
            return None

        if thumb:
            hw1 = int.from_bytes(raw[0:2], "little")
            hw2 = int.from_bytes(raw[2:4], "little")
            op = hw1 & 0xFBF0
            if op not in (0xF240, 0xF2C0):
                return None
            imm16 = (hw1 & 0xF) << 12 | ((hw1 >> 10) & 1) << 11 | ((hw2 >> 12) & 7) << 8 | (hw2 & 0xFF)
            return op == 0xF2C0, (hw2 >> 8) & 0xF, imm16

        word = int.from_bytes(raw, "little")
        op = word & 0x0FF00000
        if (word >> 28) == 0xF or op not in (0x03000000, 0x03400000):
            return None
        imm16 = ((word >> 16) & 0xF) << 12 | (word & 0xFFF)
        return op == 0x03400000, (word >> 12) & 0xF, imm16

    @staticmethod
    def _literal_register(insn: CsInsn, thumb: bool) -> int:
        """Registro destino de un ldr literal (T1, T2 o A1)"""
        raw = bytes(insn.bytes)
        if thumb and insn.size == 2:
            return (int.from_bytes(raw, "little") >> 8) & 7
        if thumb:
            return (int.from_bytes(raw[2:4], "little") >> 12) & 0xF
        return (int.from_bytes(raw, "little") >> 12) & 0xF

    @staticmethod
    def _add_pc_register(insn: CsInsn, thumb: bool) -> Optional[int]:
        """Rdn de `add rdn, pc` (Thumb T2, 0x4478 | Rdn), None en otro caso"""
        if not thumb or insn.size != 2:
            return None
        hw = int.from_bytes(bytes(insn.bytes), "little")
        if (hw & 0xFF78) != 0x4478:
            return None
        return ((hw >> 4) & 8) | (hw & 7)

    def classify(self, insn: CsInsn, thumb: bool, regs: RegisterTrack) -> Instruction:
        """Convierte una instrucción de capstone al modelo; `regs` lleva las constantes por registro"""
        base = dict(addr=insn.address, size=insn.size, mnemonic=insn.mnemonic)
        cc = insn.cc
        conditional = cc not in (ARM_CC_AL, ARM_CC_INVALID)

        if insn.id in (ARM_INS_BL, ARM_INS_BLX):
            regs.reset_block()
            target = self._branch_target(insn)
            return Instruction(kind=InstructionKind.call, target=target, conditional=conditional, **base)

        if insn.id in (ARM_INS_B, ARM_INS_CBZ, ARM_INS_CBNZ):
            target = self._branch_target(insn)
            if target is not None:
                regs.reset_block()
                return Instruction(
                    kind=InstructionKind.branch, target=target,
                    conditional=conditional or insn.id != ARM_INS_B, **base,
                )

        if insn.id == ARM_INS_BX and any(op.type == ARM_OP_REG and op.reg == ARM_REG_LR for op in insn.operands):
            regs.reset_block()
            return Instruction(kind=InstructionKind.ret, conditional=conditional, **base)

        if insn.id == ARM_INS_POP and any(op.type == ARM_OP_REG and op.reg == ARM_REG_PC for op in insn.operands):
            regs.reset_block()
            return Instruction(kind=InstructionKind.ret, conditional=conditional, **base)

        pc_relative = self._pc_relative(insn, thumb)
        if pc_relative is not None:
            if pc_relative.immediate != pc_relative.target and pc_relative.immediate is not None:
                regs.known[self._literal_register(insn, thumb)] = pc_relative.immediate
            return pc_relative

        rdn = self._add_pc_register(insn, thumb)
        if rdn is not None and rdn in regs.known:
            # PIC: rdn = constante + PC (dirección de la instrucción + 4)
            address = (regs.known.pop(rdn) + insn.address + 4) & 0xFFFFFFFF
            return Instruction(kind=InstructionKind.pc_relative_load, target=address, immediate=address, **base)

        half = self._mov_half(insn, thumb)
        if half is not None:
            is_movt, reg, imm16 = half
            if not is_movt:
                regs.low[reg] = imm16
                regs.known.pop(reg, None)
            elif reg in regs.low:
                value = regs.low.pop(reg) | (imm16 << 16)
                regs.known[reg] = value
                return Instruction(kind=InstructionKind.mov_immediate_pair, immediate=value, **base)

        return Instruction(kind=InstructionKind.other, conditional=conditional, **base)

    @staticmethod
    def is_prologue(insn: CsInsn) -> bool:
        """push {..., lr}"""
        return insn.id == ARM_INS_PUSH and any(
            op.type == ARM_OP_REG and op.reg == ARM_REG_LR for op in insn.operands
        )

    # ===================== FUNCIONES =====================

    def decode_function(self, record: FunctionRecord) -> List[Instruction]:
        section = self.image.section_for(record.entry)
        if section is None or not section.flags.has_file_bytes:
            return []

        start = record.entry - section.vaddr
        code = section.data[start:record.end - section.vaddr]

        pools: Set[int] = set()
        regs = RegisterTrack()
        instructions = []
        for insn in self.iter_raw(code, record.entry, record.thumb, skip=pools):
            decoded = self.classify(insn, record.thumb, regs)
            # el literal pool es dato, el barrido no debe decodificarlo
            if decoded.kind == InstructionKind.pc_relative_load and decoded.immediate != decoded.target:
                if record.contains(decoded.target):
                    pools.add(decoded.target)
            instructions.append(decoded)
        return instructions


def decode_function(image: BinaryImage, record: FunctionRecord) -> List[Instruction]:
    return ThumbDecoder(image).decode_function(record)


# ===================== RECUPERACIÓN =====================

def _records_from_entries(
    entries: Dict[int, tuple],
    sections: List[Section],
) -> List[FunctionRecord]:
    """El fin de cada función es la siguiente entrada o el fin de su sección"""
    records = []
    for section in sections:
        inside = sorted(addr for addr in entries if section.contains(addr))
        for addr, next_addr in zip(inside, inside[1:] + [section.end]):
            name, thumb = entries[addr]
            records.append(FunctionRecord(entry=addr, end=next_addr, name=name, thumb=thumb))
    return sorted(records, key=lambda r: r.entry)


def _scan_candidates(decoder: ThumbDecoder, section: Section) -> Set[int]:
    """Destinos de bl/blx y prólogos push {.., lr} encontrados en un barrido lineal"""
    found: Set[int] = set()
    pools: Set[int] = set()
    regs = RegisterTrack()

    for insn in decoder.iter_raw(section.data, section.vaddr, thumb=True, skip=pools):
        if decoder.is_prologue(insn):
            found.add(insn.address)
            continue

        decoded = decoder.classify(insn, True, regs)
        if decoded.kind == InstructionKind.call and decoded.target is not None:
            found.add(decoded.target & ~1)
        elif decoded.kind == InstructionKind.pc_relative_load and decoded.immediate != decoded.target:
            if section.contains(decoded.target) and decoded.target > insn.address:
                pools.add(decoded.target)
    return found


def recover_functions(image: BinaryImage, seeds: Optional[List[int]] = None) -> List[FunctionRecord]:
    """
    Funciones del binario ordenadas por entrada y sin solapamiento.
    Con símbolos se usan tal cual; sin ellos se combinan semillas, punto de
    entrada, destinos de llamada y un barrido de prólogos (Thumb-2 asumido).
    """
    sections = [s for s in image.executable_sections() if s.flags.has_file_bytes]
    if not image.executable_sections():
        raise NoExecutableSection(f"{image.path}: sin sección ejecutable")

    symbols = image.function_symbols()
    if symbols:
        entries: Dict[int, tuple] = {}
        for sym in sorted(symbols, key=lambda s: (s.addr, s.name)):
            entries.setdefault(sym.addr, (sym.name, sym.thumb))
        records = _records_from_entries(entries, sections)
        logger.info(f"{len(records)} funciones tomadas de la tabla de símbolos")
        return records

    decoder = ThumbDecoder(image)
    candidates: Set[int] = {seed & ~1 for seed in (seeds or [])}
    candidates.add(image.entry_point & ~1)
    for section in sections:
        candidates |= _scan_candidates(decoder, section)

    entries = {
        addr: (None, True) for addr in candidates
        if addr % 2 == 0 and any(s.contains(addr) for s in sections)
    }
    records = _records_from_entries(entries, sections)
    logger.info(f"{len(records)} funciones recuperadas sin símbolos ({len(candidates)} candidatos)")
    return records


# ===================== LLAMADAS Y DATOS =====================

def extract_calls(
    image: BinaryImage,
    functions: List[FunctionRecord],
    stats: Optional[Dict[str, int]] = None,
) -> List[CallSite]:
    """
    Un CallSite por bl/blx con destino en una entrada conocida; los saltos
    incondicionales a la entrada de otra función cuentan como llamadas de cola.
    Las llamadas indirectas solo se cuentan en `stats`.
    """
    stats = stats if stats is not None else {}
    stats.setdefault("indirect_calls", 0)
    stats.setdefault("unresolved_calls", 0)
    stats.setdefault("tail_calls", 0)

    entries = {record.entry for record in functions}
    decoder = ThumbDecoder(image)
    callsites = []

    for record in functions:
        for insn in decoder.decode_function(record):
            if insn.kind == InstructionKind.call:
                if insn.indirect:
                    stats["indirect_calls"] += 1
                    continue
                callee = insn.target & ~1
                if callee in entries:
                    callsites.append(CallSite(caller=record.entry, callee=callee, site=insn.addr))
                else:
                    stats["unresolved_calls"] += 1

            elif insn.kind == InstructionKind.branch and not insn.conditional:
                if insn.target in entries and not record.contains(insn.target):
                    stats["tail_calls"] += 1
                    callsites.append(CallSite(caller=record.entry, callee=insn.target, site=insn.addr))

    logger.info(
        f"{len(callsites)} llamadas estáticas ({stats['tail_calls']} de cola), "
        f"{stats['indirect_calls']} indirectas, {stats['unresolved_calls']} sin resolver"
    )
    return callsites


def extract_data_refs(image: BinaryImage, functions: List[FunctionRecord]) -> List[DataRef]:
    """Referencias función -> dirección en .data/.bss/.rodata, sin duplicados"""
    targets = data_sections(image)
    decoder = ThumbDecoder(image)

    def in_data(addr: Optional[int]) -> bool:
        return addr is not None and any(s.contains(addr) for s in targets)

    found = set()
    for record in functions:
        for insn in decoder.decode_function(record):
            if insn.kind == InstructionKind.pc_relative_load:
                # valor cargado del pool (o dirección calculada con adr)
                if in_data(insn.immediate):
                    found.add((record.entry, insn.immediate))
                # lectura directa de un dato en .rodata
                if insn.target != insn.immediate and in_data(insn.target):
                    found.add((record.entry, insn.target))
            elif insn.kind == InstructionKind.mov_immediate_pair and in_data(insn.immediate):
                found.add((record.entry, insn.immediate))

    refs = [DataRef(function=f, data_addr=a) for f, a in sorted(found)]
    logger.info(f"{len(refs)} referencias a datos en {len(functions)} funciones")
    return refs
