"""Virtual CPU: registers, heads, stacks, nop-modification and instruction semantics.

CPU state is kept struct-of-arrays in a :class:`CpuBank` so one jitted
interpreter serves both a standalone :class:`CpuState` (a bank of one) and
the world grid (a bank with one slot per cell).

Conventions
-----------
* Registers AX, BX, CX hold signed 32-bit values; arithmetic wraps.
* A nop-A/B/C directly after an instruction selects AX/BX/CX (or the IP/READ/
  WRITE head for head instructions) and is skipped. nop-Y never modifies.
* Templates for ``h-search`` and ``if-label`` are up to three consecutive
  nop-A/B/C; the complement of A, B, C is B, C, A.
* An IP-targeted ``mov-head``/``jmp-head`` lands exactly on its destination;
  a jump onto the current instruction falls through like a no-op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .genome import (
    ADD, DEC, EXPLODE, GENOME_LENGTH, GET_HEAD, H_ALLOC, H_COPY, H_DIVIDE, H_SEARCH,
    IF_LABEL, IF_LESS, IF_N_EQU, INC, IO, JMP_HEAD, MOV_HEAD, NAND, NOP_A, NOP_B,
    NOP_C, NOP_Y, NUM_OPCODES, OPCODE_INDEX, POP, PUSH, QUORUM_SENSE, SET_FLOW,
    SHIFT_L, SHIFT_R, SMART_EXPLODE, SUB, SWAP, SWAP_STK,
)

# Scalar-state columns. Head h lives in column IP + h.
AX, BX, CX = 0, 1, 2
IP, READ, WRITE, FLOW = 3, 4, 5, 6
MEM_LEN = 7
COPIED = 8
ACTIVE_STACK = 9
SP0 = 10  # stack pointers at SP0, SP0 + 1
LABEL_LEN = 12
LATCHED = 13  # -1 until quorum-sense first runs
OUTPUT = 14
N_SCALAR = 15

STACK_DEPTH = 10
LABEL_WINDOW = 3
NEIGHBORHOOD_CELLS = 24
DEFAULT_EXPLODE_PROB = 0.05

# Effect codes returned by the interpreter.
E_NONE, E_DIVIDE, E_EXPLODE, E_OUTPUT = 0, 1, 2, 3

# Diagnostic counters.
D_FAILED_DIVIDE, D_COPY_UNALLOCATED, D_REALLOC, D_DROPPED_MUTATION = 0, 1, 2, 3
N_DIAG = 4
DIAGNOSTIC_NAMES = ("failed_divides", "copy_before_alloc", "repeat_alloc", "dropped_mutations")

REGISTER_NAMES = ("AX", "BX", "CX")
HEAD_NAMES = ("IP", "READ", "WRITE", "FLOW")


@numba.njit(cache=True, inline="always")
def _wrap32(v):
    return ((v + 2147483648) & 0xFFFFFFFF) - 2147483648


@numba.njit(cache=True, inline="always")
def _modifier(mem, c, ip, ml):
    nxt = mem[c, (ip + 1) % ml]
    if nxt <= NOP_C:
        return nxt
    return -1


@numba.njit(cache=True, inline="always")
def _template_len(mem, c, ip, ml):
    n = 0
    while n < LABEL_WINDOW and mem[c, (ip + 1 + n) % ml] <= NOP_C:
        n += 1
    return n


@numba.njit(cache=True, _nrt=False)
def _h_search(st, mem, c, ip, ml):
    tlen = _template_len(mem, c, ip, ml)
    if tlen == 0:
        st[c, FLOW] = (ip + 1) % ml
        st[c, BX] = 0
        st[c, CX] = 0
        return 1
    start = ip + 1 + tlen
    for d in range(ml):
        p = start + d
        ok = True
        for k in range(tlen):
            if mem[c, (p + k) % ml] != (mem[c, (ip + 1 + k) % ml] + 1) % 3:
                ok = False
                break
        if ok:
            st[c, FLOW] = (p + tlen) % ml
            st[c, BX] = (p - ip) % ml
            st[c, CX] = tlen
            return 1 + tlen
    st[c, FLOW] = (ip + 1) % ml
    st[c, BX] = 0
    st[c, CX] = tlen
    return 1 + tlen


@numba.njit(cache=True, _nrt=False)
def _if_label(st, labels, mem, c, ip, ml):
    tlen = _template_len(mem, c, ip, ml)
    if tlen != st[c, LABEL_LEN]:
        return 2 + tlen
    for k in range(tlen):
        if labels[c, k] != (mem[c, (ip + 1 + k) % ml] + 1) % 3:
            return 2 + tlen
    return 1 + tlen


@numba.njit(cache=True, _nrt=False)
def _h_copy(st, labels, mem, c, ml, diag):
    if ml == GENOME_LENGTH:
        diag[D_COPY_UNALLOCATED] += 1
        return
    rh = st[c, READ]
    wh = st[c, WRITE]
    v = mem[c, rh]
    mem[c, wh] = v
    st[c, READ] = (rh + 1) % ml
    st[c, WRITE] = (wh + 1) % ml
    st[c, COPIED] += 1
    if v <= NOP_C:
        n = st[c, LABEL_LEN]
        if n == LABEL_WINDOW:
            for k in range(LABEL_WINDOW - 1):
                labels[c, k] = labels[c, k + 1]
            n -= 1
        labels[c, n] = v
        st[c, LABEL_LEN] = n + 1
    else:
        st[c, LABEL_LEN] = 0


@numba.njit(cache=True, inline="always")
def quorum_flag(related, threshold_pct):
    """1 when the related fraction of the 24 neighbours is below the threshold."""
    return 1 if related * 100 < threshold_pct * NEIGHBORHOOD_CELLS else 0


@numba.njit(cache=True, _nrt=False)
def execute(op, st, stacks, labels, mem, execs, c, rng, related, explode_prob, diag):
    """Execute ``op`` as the instruction under IP of slot ``c``; return an effect code.

    ``related`` is the related-neighbour count used by quorum-sense.
    """
    ip = st[c, IP]
    ml = st[c, MEM_LEN]
    execs[c, op] += 1
    adv = 1
    eff = E_NONE

    if op <= NOP_Y:
        pass
    elif op == IF_N_EQU or op == IF_LESS:
        m = _modifier(mem, c, ip, ml)
        r = BX
        if m >= 0:
            r = m
            adv = 2
        a = st[c, r]
        b = st[c, (r + 1) % 3]
        cond = a != b if op == IF_N_EQU else a < b
        if not cond:
            adv += 1
    elif op == IF_LABEL:
        adv = _if_label(st, labels, mem, c, ip, ml)
    elif op <= DEC or op == IO:
        # single-register instructions: pop .. dec, IO
        m = _modifier(mem, c, ip, ml)
        r = BX
        if m >= 0:
            r = m
            adv = 2
        if op == POP:
            s = st[c, ACTIVE_STACK]
            sp = st[c, SP0 + s]
            if sp > 0:
                sp -= 1
                st[c, r] = stacks[c, s, sp]
                st[c, SP0 + s] = sp
            else:
                st[c, r] = 0
        elif op == PUSH:
            s = st[c, ACTIVE_STACK]
            sp = st[c, SP0 + s]
            if sp == STACK_DEPTH:
                for k in range(STACK_DEPTH - 1):
                    stacks[c, s, k] = stacks[c, s, k + 1]
                sp -= 1
            stacks[c, s, sp] = st[c, r]
            st[c, SP0 + s] = sp + 1
        elif op == SWAP_STK:
            st[c, ACTIVE_STACK] = 1 - st[c, ACTIVE_STACK]
            adv = 1
        elif op == SWAP:
            o = (r + 1) % 3
            tmp = st[c, r]
            st[c, r] = st[c, o]
            st[c, o] = tmp
        elif op == SHIFT_R:
            st[c, r] = st[c, r] >> 1
        elif op == SHIFT_L:
            st[c, r] = _wrap32(st[c, r] << 1)
        elif op == INC:
            st[c, r] = _wrap32(st[c, r] + 1)
        elif op == DEC:
            st[c, r] = _wrap32(st[c, r] - 1)
        else:  # IO
            st[c, OUTPUT] = st[c, r]
            st[c, r] = 0
            eff = E_OUTPUT
    elif op == ADD or op == SUB or op == NAND:
        m = _modifier(mem, c, ip, ml)
        r = BX
        if m >= 0:
            r = m
            adv = 2
        b = st[c, BX]
        x = st[c, CX]
        if op == ADD:
            st[c, r] = _wrap32(b + x)
        elif op == SUB:
            st[c, r] = _wrap32(b - x)
        else:
            st[c, r] = ~(b & x)
    elif op == H_ALLOC:
        if ml == GENOME_LENGTH:
            for k in range(GENOME_LENGTH, 2 * GENOME_LENGTH):
                mem[c, k] = NOP_A
            st[c, MEM_LEN] = 2 * GENOME_LENGTH
        else:
            diag[D_REALLOC] += 1
    elif op == H_COPY:
        _h_copy(st, labels, mem, c, ml, diag)
    elif op == H_DIVIDE:
        if st[c, COPIED] == GENOME_LENGTH and ml == 2 * GENOME_LENGTH:
            st[c, MEM_LEN] = GENOME_LENGTH
            st[c, IP] = 0
            st[c, READ] = 0
            st[c, WRITE] = 0
            st[c, FLOW] = 0
            st[c, COPIED] = 0
            st[c, LABEL_LEN] = 0
            return E_DIVIDE
        diag[D_FAILED_DIVIDE] += 1
    elif op == H_SEARCH:
        adv = _h_search(st, mem, c, ip, ml)
    elif op == MOV_HEAD or op == JMP_HEAD or op == GET_HEAD:
        m = _modifier(mem, c, ip, ml)
        h = 0
        if m >= 0:
            h = m
            adv = 2
        if op == GET_HEAD:
            st[c, CX] = st[c, IP + h]
        else:
            if op == MOV_HEAD:
                target = st[c, FLOW]
            else:
                target = (st[c, IP + h] + st[c, CX]) % ml
            if h == 0:
                if target != ip:
                    st[c, IP] = target
                    return eff
            else:
                st[c, IP + h] = target
    elif op == SET_FLOW:
        m = _modifier(mem, c, ip, ml)
        r = CX
        if m >= 0:
            r = m
            adv = 2
        st[c, FLOW] = st[c, r] % ml
    elif op == EXPLODE:
        if rng.random() < explode_prob:
            eff = E_EXPLODE
    elif op == QUORUM_SENSE:
        m = _modifier(mem, c, ip, ml)
        r = BX
        if m >= 0:
            r = m
            adv = 2
        thr = min(max(st[c, CX], 0), 100)
        st[c, LATCHED] = thr
        st[c, r] = quorum_flag(related, thr)
    elif op == SMART_EXPLODE:
        m = _modifier(mem, c, ip, ml)
        r = BX
        if m >= 0:
            r = m
            adv = 2
        if st[c, r] != 0:
            if rng.random() < explode_prob:
                eff = E_EXPLODE

    st[c, IP] = (ip + adv) % st[c, MEM_LEN]
    return eff


@numba.njit(cache=True, _nrt=False)
def reset_slot(st, stacks, labels, mem, execs, c, genome):
    """Give slot ``c`` a fresh CPU running ``genome``."""
    for k in range(N_SCALAR):
        st[c, k] = 0
    st[c, MEM_LEN] = GENOME_LENGTH
    st[c, LATCHED] = -1
    for k in range(GENOME_LENGTH):
        mem[c, k] = genome[k]
    for k in range(execs.shape[1]):
        execs[c, k] = 0


class CpuBank:
    """Struct-of-arrays CPU storage for ``n`` slots."""

    def __init__(self, n: int):
        self.n = n
        self.state = np.zeros((n, N_SCALAR), dtype=np.int64)
        self.stacks = np.zeros((n, 2, STACK_DEPTH), dtype=np.int64)
        self.labels = np.zeros((n, LABEL_WINDOW), dtype=np.int8)
        self.memory = np.zeros((n, 2 * GENOME_LENGTH), dtype=np.int8)
        self.exec_counts = np.zeros((n, NUM_OPCODES), dtype=np.int64)
        self.diagnostics = np.zeros(N_DIAG, dtype=np.int64)

    def arrays(self):
        return self.state, self.stacks, self.labels, self.memory, self.exec_counts

    def reset(self, slot: int, genome: np.ndarray) -> None:
        reset_slot(*self.arrays(), slot, np.ascontiguousarray(genome, dtype=np.int8))


# Python-level effects. ``None`` stands for "no effect".
@dataclass(frozen=True)
class DivideRequest:
    child: np.ndarray


@dataclass(frozen=True)
class ExplodeRequest:
    instruction: str


@dataclass(frozen=True)
class OutputValue:
    value: int


@dataclass(frozen=True)
class NeighborhoodSummary:
    related_count: int
    unrelated_count: int
    empty_count: int

    def __post_init__(self):
        total = self.related_count + self.unrelated_count + self.empty_count
        if total != NEIGHBORHOOD_CELLS:
            raise ValueError(f"neighbourhood counts must sum to {NEIGHBORHOOD_CELLS}, got {total}")


class CpuState:
    """One organism's CPU: a view onto slot ``slot`` of a :class:`CpuBank`."""

    def __init__(self, genome=None, *, bank: CpuBank | None = None, slot: int = 0):
        if bank is None:
            bank = CpuBank(1)
            if genome is None:
                raise ValueError("a genome is required for a standalone CPU")
        self.bank = bank
        self.slot = slot
        if genome is not None:
            bank.reset(slot, genome)

    def _get(self, col):
        return int(self.bank.state[self.slot, col])

    def _set(self, col, value):
        self.bank.state[self.slot, col] = value

    ax = property(lambda s: s._get(AX), lambda s, v: s._set(AX, v))
    bx = property(lambda s: s._get(BX), lambda s, v: s._set(BX, v))
    cx = property(lambda s: s._get(CX), lambda s, v: s._set(CX, v))
    ip = property(lambda s: s._get(IP), lambda s, v: s._set(IP, v))
    read_head = property(lambda s: s._get(READ), lambda s, v: s._set(READ, v))
    write_head = property(lambda s: s._get(WRITE), lambda s, v: s._set(WRITE, v))
    flow_head = property(lambda s: s._get(FLOW), lambda s, v: s._set(FLOW, v))
    copied_count = property(lambda s: s._get(COPIED))
    active_stack = property(lambda s: s._get(ACTIVE_STACK))

    @property
    def registers(self) -> dict[str, int]:
        return {name: self._get(i) for i, name in enumerate(REGISTER_NAMES)}

    @property
    def heads(self) -> dict[str, int]:
        return {name: self._get(IP + i) for i, name in enumerate(HEAD_NAMES)}

    @property
    def latched_threshold(self) -> int | None:
        v = self._get(LATCHED)
        return None if v < 0 else v

    @property
    def memory(self) -> np.ndarray:
        return self.bank.memory[self.slot, : self._get(MEM_LEN)]

    @property
    def last_copied_label(self) -> list[int]:
        return [int(x) for x in self.bank.labels[self.slot, : self._get(LABEL_LEN)]]

    @property
    def exec_counts(self) -> np.ndarray:
        return self.bank.exec_counts[self.slot]

    def stack(self, which: int) -> list[int]:
        sp = self._get(SP0 + which)
        return [int(v) for v in self.bank.stacks[self.slot, which, :sp]]

    def set_register(self, name: str, value: int) -> None:
        self._set(REGISTER_NAMES.index(name), value)

    def current_opcode(self) -> int:
        return int(self.bank.memory[self.slot, self.ip])


def resolve_nop_target(default_target: int, following_instruction: int) -> int:
    """Register/head index selected by the instruction after the current one.

    nop-A/B/C select index 0/1/2; anything else (including nop-Y) leaves the
    default in place.
    """
    if following_instruction in (NOP_A, NOP_B, NOP_C):
        return int(following_instruction)
    return default_target


def _run(cpu: CpuState, op: int, rng, nbhd: NeighborhoodSummary | None, explode_prob: float):
    related = nbhd.related_count if nbhd is not None else 0
    if rng is None:
        rng = np.random.default_rng(0)
    bank = cpu.bank
    eff = execute(op, *bank.arrays(), cpu.slot, rng, related, explode_prob, bank.diagnostics)
    if eff == E_DIVIDE:
        child = bank.memory[cpu.slot, GENOME_LENGTH : 2 * GENOME_LENGTH].copy()
        return DivideRequest(child)
    if eff == E_EXPLODE:
        return ExplodeRequest("smart-explode" if op == SMART_EXPLODE else "explode")
    if eff == E_OUTPUT:
        return OutputValue(cpu._get(OUTPUT))
    return None


def step(cpu: CpuState, rng=None, nbhd: NeighborhoodSummary | None = None,
         explode_prob: float = DEFAULT_EXPLODE_PROB):
    """Execute the instruction under IP and return its effect (or ``None``)."""
    if cpu.current_opcode() == QUORUM_SENSE and nbhd is None:
        raise ValueError("quorum-sense needs a neighbourhood summary")
    return _run(cpu, cpu.current_opcode(), rng, nbhd, explode_prob)


def _named(op_name):
    op = OPCODE_INDEX[op_name]

    def run(cpu, rng=None, nbhd=None, explode_prob=DEFAULT_EXPLODE_PROB):
        return _run(cpu, op, rng, nbhd, explode_prob)

    run.__name__ = "exec_" + op_name.replace("-", "_")
    run.__doc__ = f"Run ``{op_name}`` at the current IP (modifiers are read from memory)."
    return run


exec_h_search = _named("h-search")
exec_h_copy = _named("h-copy")
exec_h_divide = _named("h-divide")
exec_explode = _named("explode")


def exec_quorum_sense(cpu: CpuState, nbhd: NeighborhoodSummary):
    return _run(cpu, QUORUM_SENSE, None, nbhd, DEFAULT_EXPLODE_PROB)


def exec_smart_explode(cpu: CpuState, rng, explode_prob: float = DEFAULT_EXPLODE_PROB):
    return _run(cpu, SMART_EXPLODE, rng, None, explode_prob)


@numba.njit(cache=True)
def _run_isolated(st, stacks, labels, mem, execs, rng, explode_prob, diag, max_cycles, out):
    # out: [cycles_to_divide, cycles_to_explode, first_qs_cx]
    out[0] = -1
    out[1] = -1
    out[2] = -1
    for cyc in range(1, max_cycles + 1):
        op = mem[0, st[0, IP]]
        if op == QUORUM_SENSE and out[2] < 0:
            out[2] = st[0, CX]
        eff = execute(op, st, stacks, labels, mem, execs, 0, rng, 0, explode_prob, diag)
        if eff == E_EXPLODE and out[1] < 0:
            out[1] = cyc
        if eff == E_DIVIDE:
            out[0] = cyc
            return


@dataclass
class IsolationTrace:
    gestation: int | None
    child: np.ndarray | None
    first_explosion: int | None
    first_quorum_cx: int | None
    exec_counts: np.ndarray


def trace_isolated(genome: np.ndarray, *, explode_prob: float = 0.0, max_cycles: int = 10_000,
                   seed: int = 0) -> IsolationTrace:
    """Run one organism with no neighbours until its first successful divide.

    Quorum-sense sees an empty neighbourhood (zero related). With the default
    ``explode_prob=0`` explosions never fire, so the trace is deterministic.
    """
    cpu = CpuState(genome)
    bank = cpu.bank
    out = np.zeros(3, dtype=np.int64)
    _run_isolated(*bank.arrays(), np.random.default_rng(seed), explode_prob, bank.diagnostics,
                  max_cycles, out)
    gestation = int(out[0]) if out[0] > 0 else None
    child = bank.memory[0, GENOME_LENGTH:].copy() if gestation else None
    return IsolationTrace(
        gestation=gestation,
        child=child,
        first_explosion=int(out[1]) if out[1] > 0 else None,
        first_quorum_cx=int(out[2]) if out[2] >= 0 else None,
        exec_counts=bank.exec_counts[0].copy(),
    )


@numba.njit(cache=True)
def _repeat(op, st, stacks, labels, mem, execs, rng, reg_value, explode_prob, diag, trials):
    fired = 0
    for _ in range(trials):
        st[0, IP] = 0
        st[0, BX] = reg_value
        if execute(op, st, stacks, labels, mem, execs, 0, rng, 0, explode_prob, diag) == E_EXPLODE:
            fired += 1
    return fired


def count_explosions(op_name: str, trials: int, rng: np.random.Generator, *, bx: int = 1,
                     explode_prob: float = DEFAULT_EXPLODE_PROB) -> int:
    """Execute ``explode``/``smart-explode`` ``trials`` times with BX = ``bx``; count detonations.

    The instruction sits at IP 0 of a nop-Y filled genome with no modifier
    after it, so smart-explode gates on BX.
    """
    if op_name not in ("explode", "smart-explode"):
        raise ValueError("op_name must be explode or smart-explode")
    genome = np.full(GENOME_LENGTH, NOP_Y, dtype=np.int8)
    genome[0] = OPCODE_INDEX[op_name]
    cpu = CpuState(genome)
    bank = cpu.bank
    return int(_repeat(OPCODE_INDEX[op_name], *bank.arrays(), rng, bx, explode_prob, bank.diagnostics, trials))
