"""Hand-written ancestor genomes.

All three share the classic heads replicator::

    h-alloc                      allocate offspring memory
    h-search nop-C nop-A         FLOW <- end of genome (after the nop-A nop-B end label)
    mov-head nop-C               WRITE <- FLOW
    ... nop-C filler ...
    h-search                     FLOW <- next instruction (the copy-loop head)
    h-copy                       copy one instruction READ -> WRITE
    if-label nop-C nop-A         if the end label nop-A nop-B was just copied ...
    h-divide                     ... divide
    mov-head nop-A               else IP <- FLOW (loop)
    nop-A nop-B                  end label

The two altruists insert a 20-locus prologue and a strategy pair in front of
the replicator, replacing filler so both keep the same gestation time.
"""

from __future__ import annotations

import numpy as np

from .genome import GENOME_LENGTH, encode

ANCESTOR_KINDS = ("default", "qs_altruist", "nonqs_altruist")

_HEAD = ["h-alloc", "h-search", "nop-C", "nop-A", "mov-head", "nop-C"]
_TAIL = ["h-search", "h-copy", "if-label", "nop-C", "nop-A", "h-divide", "mov-head", "nop-A", "nop-B"]

# CX: 0 -> 1 -> 2 -> 4 -> 5 -> 10 -> 11 -> 22 -> 23 -> 46 -> 92
_THRESHOLD_STEPS = ["inc", "shift-l", "shift-l", "inc", "shift-l", "inc", "shift-l", "inc", "shift-l", "shift-l"]
QS_THRESHOLD = 92


def _prologue(modifier: str) -> list[str]:
    out = []
    for op in _THRESHOLD_STEPS:
        out += [op, modifier]
    return out


def _pad(body: list[str]) -> list[str]:
    filler = GENOME_LENGTH - len(body) - len(_TAIL)
    return body + ["nop-C"] * filler + _TAIL


def ancestor_names(kind: str) -> list[str]:
    if kind == "default":
        return _pad(list(_HEAD))
    if kind == "qs_altruist":
        return _pad(_prologue("nop-C") + ["quorum-sense", "smart-explode"] + _HEAD)
    if kind == "nonqs_altruist":
        # the same arithmetic aimed at AX (never read) keeps gestation equal to the qs ancestor
        return _pad(_prologue("nop-A") + ["explode", "nop-C"] + _HEAD)
    raise ValueError(f"unknown ancestor kind {kind!r}; choose from {ANCESTOR_KINDS}")


def make_ancestor(kind: str = "default") -> np.ndarray:
    return encode(ancestor_names(kind))
