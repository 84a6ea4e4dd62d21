"""Instruction set, genome distance and the divide-time mutation operator.

Genomes are plain ``numpy.int8`` arrays of opcodes. Everything here is a pure
function over value data; randomness always comes from a caller-owned
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

OPCODES: tuple[str, ...] = (
    "nop-A",
    "nop-B",
    "nop-C",
    "nop-Y",
    "if-n-equ",
    "if-less",
    "if-label",
    "pop",
    "push",
    "swap-stk",
    "swap",
    "shift-r",
    "shift-l",
    "inc",
    "dec",
    "add",
    "sub",
    "nand",
    "IO",
    "h-alloc",
    "h-copy",
    "h-divide",
    "h-search",
    "mov-head",
    "jmp-head",
    "get-head",
    "set-flow",
    "explode",
    "quorum-sense",
    "smart-explode",
)
OPCODE_INDEX: dict[str, int] = {name: i for i, name in enumerate(OPCODES)}
NUM_OPCODES = len(OPCODES)

NOP_A, NOP_B, NOP_C, NOP_Y = 0, 1, 2, 3
IF_N_EQU, IF_LESS, IF_LABEL = 4, 5, 6
POP, PUSH, SWAP_STK, SWAP = 7, 8, 9, 10
SHIFT_R, SHIFT_L, INC, DEC = 11, 12, 13, 14
ADD, SUB, NAND, IO = 15, 16, 17, 18
H_ALLOC, H_COPY, H_DIVIDE, H_SEARCH = 19, 20, 21, 22
MOV_HEAD, JMP_HEAD, GET_HEAD, SET_FLOW = 23, 24, 25, 26
EXPLODE, QUORUM_SENSE, SMART_EXPLODE = 27, 28, 29

STRATEGY_OPCODES: tuple[str, ...] = ("explode", "quorum-sense", "smart-explode")
#: Everything except the three strategy instructions; nop-Y is included so it
#: drifts in as the neutral control.
STANDARD_OPCODES: tuple[str, ...] = tuple(op for op in OPCODES if op not in STRATEGY_OPCODES)

GENOME_LENGTH = 100


@dataclass(frozen=True)
class RelatednessParams:
    max_distance: int = 3

    def __post_init__(self):
        if self.max_distance < 0:
            raise ValueError("max_distance must be >= 0")


def encode(names: Iterable[str]) -> np.ndarray:
    """Translate opcode names to an ``int8`` genome array."""
    try:
        return np.array([OPCODE_INDEX[n] for n in names], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"unknown opcode {exc.args[0]!r}") from None


def decode(genome: Sequence[int]) -> list[str]:
    return [OPCODES[int(op)] for op in genome]


def palette_array(names: Iterable[str]) -> np.ndarray:
    """Sorted, de-duplicated opcode array for a palette given by name."""
    ops = sorted({OPCODE_INDEX[n] for n in names})
    if not ops:
        raise ValueError("palette must not be empty")
    return np.array(ops, dtype=np.int8)


@numba.njit(cache=True, nogil=True)
def _distance(a, b, stop_above):
    d = 0
    for i in range(a.shape[0]):
        if a[i] != b[i]:
            d += 1
            if d > stop_above:
                return d
    return d


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Number of loci at which two equal-length genomes differ."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"genome length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return int(np.count_nonzero(a != b))


def are_related(a: np.ndarray, b: np.ndarray, params: RelatednessParams = RelatednessParams()) -> bool:
    a = np.asarray(a, dtype=np.int8)
    b = np.asarray(b, dtype=np.int8)
    if a.shape != b.shape:
        raise ValueError(f"genome length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return bool(_distance(a, b, params.max_distance) <= params.max_distance)


@numba.njit(cache=True, nogil=True, _nrt=False, inline="always")
def randbelow(rng, n):
    """Uniform integer in ``[0, n)`` from one double draw (allocation-free)."""
    k = int(rng.random() * n)
    return k if k < n else n - 1


@numba.njit(cache=True, nogil=True, _nrt=False)
def poisson_small(rng, lam):
    """Poisson draw by uniform products; fine for the small rates used here."""
    limit = np.exp(-lam)
    k = 0
    p = rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


@numba.njit(cache=True, nogil=True, _nrt=False)
def mutate_in_place(child, rate, palette, protected, rng, free):
    """Apply Poisson(rate) substitutions to ``child``.

    ``protected`` is a boolean mask over loci and ``free`` an int64 scratch
    buffer of the genome's length. Each substitution hits a uniformly chosen
    unprotected locus and writes a uniformly chosen palette opcode that
    differs from the current one. Returns the number of substitutions
    applied, or -1 if a non-zero draw had to be dropped because every locus
    is protected.
    """
    if rate <= 0.0:
        return 0
    k = poisson_small(rng, rate)
    if k == 0:
        return 0
    n = child.shape[0]
    nfree = 0
    for i in range(n):
        if not protected[i]:
            free[nfree] = i
            nfree += 1
    if nfree == 0:
        return -1
    npal = palette.shape[0]
    applied = 0
    for _ in range(k):
        locus = free[randbelow(rng, nfree)]
        current = child[locus]
        in_palette = False
        for j in range(npal):
            if palette[j] == current:
                in_palette = True
                break
        if in_palette:
            if npal == 1:
                continue
            j = randbelow(rng, npal - 1)
            if palette[j] >= current:
                j += 1
            child[locus] = palette[j]
        else:
            child[locus] = palette[randbelow(rng, npal)]
        applied += 1
    return applied


@numba.njit(cache=True, nogil=True, _nrt=False)
def fill_strategy_mask(genome, protected_ops, mask):
    """Mark in ``mask`` the loci currently holding any opcode in ``protected_ops``."""
    for i in range(genome.shape[0]):
        mask[i] = False
        for j in range(protected_ops.shape[0]):
            if genome[i] == protected_ops[j]:
                mask[i] = True
                break


def strategy_mask(genome: np.ndarray, protected_ops: np.ndarray) -> np.ndarray:
    """Boolean mask of loci currently holding any opcode in ``protected_ops``."""
    mask = np.zeros(len(genome), dtype=np.bool_)
    fill_strategy_mask(np.asarray(genome, dtype=np.int8), np.asarray(protected_ops, dtype=np.int8), mask)
    return mask


@dataclass
class MutationDiagnostics:
    dropped: int = 0


def mutate_offspring(
    child: np.ndarray,
    rate: float,
    palette: Iterable[str] | np.ndarray,
    protected_loci: Iterable[int] = (),
    rng: np.random.Generator | None = None,
    diagnostics: MutationDiagnostics | None = None,
) -> np.ndarray:
    """Return a mutated copy of ``child``; the input is left untouched."""
    if rate < 0:
        raise ValueError("mutation rate must be >= 0")
    if rng is None:
        raise ValueError("an explicit random generator is required")
    pal = palette if isinstance(palette, np.ndarray) else palette_array(palette)
    pal = np.ascontiguousarray(pal, dtype=np.int8)
    if pal.size == 0:
        raise ValueError("palette must not be empty")
    out = np.array(child, dtype=np.int8, copy=True)
    mask = np.zeros(out.shape[0], dtype=np.bool_)
    for i in protected_loci:
        if not 0 <= i < out.shape[0]:
            raise ValueError(f"protected locus {i} out of range")
        mask[i] = True
    applied = mutate_in_place(out, float(rate), pal, mask, rng, np.empty(out.shape[0], dtype=np.int64))
    if applied < 0 and diagnostics is not None:
        diagnostics.dropped += 1
    return out
