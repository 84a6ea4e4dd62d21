"""Toroidal world grid: scheduling, births, neighbourhoods and explosions.

Per-cell organism data lives in flat arrays indexed by ``cell = y * width + x``:

* ``genomes[cell]`` - birth genome (used for relatedness),
* ``cells[cell]`` - ``(organism id, lineage, birth update)``; id ``-1`` marks an empty cell,
* a :class:`~quorum_altruism.vcpu.CpuBank` slot per cell for CPU state.

The update loop is jitted; the Python functions below are thin wrappers
around the same kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .ancestors import make_ancestor
from .config import ConfigError, Placement, TreatmentConfig
from .genome import (
    GENOME_LENGTH, NUM_OPCODES, OPCODE_INDEX, QUORUM_SENSE, SMART_EXPLODE, _distance, fill_strategy_mask,
    mutate_in_place, palette_array, randbelow,
)
from .vcpu import (
    D_DROPPED_MUTATION, DIAGNOSTIC_NAMES, E_DIVIDE, E_EXPLODE, IP, LATCHED, NEIGHBORHOOD_CELLS,
    CpuBank, CpuState, NeighborhoodSummary, execute, reset_slot,
)

ORG, LINEAGE, BIRTH = 0, 1, 2

# explosion-event columns
EV_UPDATE, EV_X, EV_Y, EV_LINEAGE, EV_OP, EV_THRESHOLD = 0, 1, 2, 3, 4, 5
EV_RELATED, EV_UNRELATED, EV_EMPTY, EV_KILLS = 6, 7, 8, 9
N_EV = 10

# window accumulator slots; per-opcode executions start at W_EXEC
W_BIRTHS, W_EXPLOSIONS, W_KILLS, W_POP_SUM, W_UPDATES, W_THRESH_SUM, W_THRESH_N = range(7)
W_EXEC = 7
N_WIN = W_EXEC + NUM_OPCODES

_MOORE = np.array([(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)], dtype=np.int64)
_RING2 = np.array([(dx, dy) for dy in range(-2, 3) for dx in range(-2, 3) if (dx, dy) != (0, 0)],
                  dtype=np.int64)

LINEAGE_NAMES = ("qs", "nonqs")


@numba.njit(cache=True, inline="always")
def _offset(c, dx, dy, width, height):
    x = c % width
    y = c // width
    return ((y + dy) % height) * width + (x + dx) % width


@numba.njit(cache=True, _nrt=False)
def _summarize(genomes, cells, width, height, c, maxd):
    related = 0
    unrelated = 0
    empty = 0
    for k in range(_RING2.shape[0]):
        n = _offset(c, _RING2[k, 0], _RING2[k, 1], width, height)
        if cells[n, ORG] < 0:
            empty += 1
        elif _distance(genomes[c], genomes[n], maxd) <= maxd:
            related += 1
        else:
            unrelated += 1
    return related, unrelated, empty


@numba.njit(cache=True, _nrt=False)
def _explode(genomes, cells, width, height, c, maxd):
    related = 0
    unrelated = 0
    empty = 0
    kills = 0
    for k in range(_RING2.shape[0]):
        n = _offset(c, _RING2[k, 0], _RING2[k, 1], width, height)
        if cells[n, ORG] < 0:
            empty += 1
        elif _distance(genomes[c], genomes[n], maxd) <= maxd:
            related += 1
        else:
            unrelated += 1
            cells[n, ORG] = -1
            kills += 1
    cells[c, ORG] = -1
    return related, unrelated, empty, kills


@numba.njit(cache=True, _nrt=False)
def _place_offspring(st, stacks, labels, mem, execs, diag, genomes, cells, width, height, c, child,
                     update_no, rng, next_id, mut_rate, palette, protected_ops, mask, free):
    """Daughter A (unmutated parent memory) stays at ``c``; daughter B goes to a random Moore neighbour.

    ``mask`` (bool) and ``free`` (int64) are genome-length scratch buffers.
    """
    for i in range(GENOME_LENGTH):
        genomes[c, i] = mem[c, i]
    reset_slot(st, stacks, labels, mem, execs, c, genomes[c])
    cells[c, BIRTH] = update_no

    d = randbelow(rng, 8)
    t = _offset(c, _MOORE[d, 0], _MOORE[d, 1], width, height)
    if mut_rate > 0.0:
        fill_strategy_mask(child, protected_ops, mask)
        if mutate_in_place(child, mut_rate, palette, mask, rng, free) < 0:
            diag[D_DROPPED_MUTATION] += 1
    for i in range(GENOME_LENGTH):
        genomes[t, i] = child[i]
    reset_slot(st, stacks, labels, mem, execs, t, child)
    cells[t, ORG] = next_id[0]
    next_id[0] += 1
    cells[t, LINEAGE] = cells[c, LINEAGE]
    cells[t, BIRTH] = update_no
    return t


@numba.njit(cache=True, _nrt=False)
def _record_explosion(genomes, cells, st, width, height, c, op, maxd, update_no, events, nev, win):
    lineage = cells[c, LINEAGE]
    threshold = st[c, LATCHED] if op == SMART_EXPLODE else -1
    related, unrelated, empty, kills = _explode(genomes, cells, width, height, c, maxd)
    events[nev, EV_UPDATE] = update_no
    events[nev, EV_X] = c % width
    events[nev, EV_Y] = c // width
    events[nev, EV_LINEAGE] = lineage
    events[nev, EV_OP] = op
    events[nev, EV_THRESHOLD] = threshold
    events[nev, EV_RELATED] = related
    events[nev, EV_UNRELATED] = unrelated
    events[nev, EV_EMPTY] = empty
    events[nev, EV_KILLS] = kills
    win[W_EXPLOSIONS] += 1
    win[W_KILLS] += kills
    if threshold >= 0:
        win[W_THRESH_SUM] += threshold
        win[W_THRESH_N] += 1


@numba.njit(cache=True, _nrt=False)
def _run_organism(st, stacks, labels, mem, execs, diag, genomes, cells, width, height, c, oid, cycles,
                  maxd, explode_prob, mut_rate, palette, protected_ops, rng, next_id, update_no, events,
                  nev, win, child, mask, free):
    """Give the organism ``oid`` at ``c`` up to ``cycles`` instructions; returns the event count."""
    for _ in range(cycles):
        if cells[c, ORG] != oid:
            break
        op = mem[c, st[c, IP]]
        related = 0
        if op == QUORUM_SENSE:
            related, _u, _e = _summarize(genomes, cells, width, height, c, maxd)
        eff = execute(op, st, stacks, labels, mem, execs, c, rng, related, explode_prob, diag)
        win[W_EXEC + op] += 1
        if eff == E_DIVIDE:
            for i in range(GENOME_LENGTH):
                child[i] = mem[c, GENOME_LENGTH + i]
            _place_offspring(st, stacks, labels, mem, execs, diag, genomes, cells, width, height,
                             c, child, update_no, rng, next_id, mut_rate, palette, protected_ops,
                             mask, free)
            win[W_BIRTHS] += 1
        elif eff == E_EXPLODE:
            _record_explosion(genomes, cells, st, width, height, c, op, maxd, update_no,
                              events, nev, win)
            return nev + 1
    return nev


@numba.njit(cache=True)
def _run_update(st, stacks, labels, mem, execs, diag, genomes, cells, width, height, cycles, maxd,
                explode_prob, mut_rate, palette, protected_ops, rng, next_id, update_no, events, win):
    n = width * height
    count = 0
    for i in range(n):
        if cells[i, ORG] >= 0:
            count += 1
    order = np.empty(count, dtype=np.int64)
    k = 0
    for i in range(n):
        if cells[i, ORG] >= 0:
            order[k] = i
            k += 1
    rng.shuffle(order)
    ids = np.empty(count, dtype=np.int64)
    for j in range(count):
        ids[j] = cells[order[j], ORG]

    child = np.empty(GENOME_LENGTH, dtype=np.int8)
    mask = np.zeros(GENOME_LENGTH, dtype=np.bool_)
    free = np.empty(GENOME_LENGTH, dtype=np.int64)
    nev = 0
    for j in range(count):
        nev = _run_organism(st, stacks, labels, mem, execs, diag, genomes, cells, width, height,
                            order[j], ids[j], cycles, maxd, explode_prob, mut_rate, palette,
                            protected_ops, rng, next_id, update_no, events, nev, win, child, mask, free)

    pop = 0
    for i in range(n):
        if cells[i, ORG] >= 0:
            pop += 1
    win[W_POP_SUM] += pop
    win[W_UPDATES] += 1
    return nev


@dataclass
class Organism:
    genome: np.ndarray
    cpu: CpuState
    lineage: int
    birth_update: int


@dataclass(frozen=True)
class ExplosionEvent:
    update: int
    x: int
    y: int
    lineage: int
    instruction: str
    threshold_pct: int | None
    related_count: int
    unrelated_count: int
    empty_count: int
    kills: int

    @classmethod
    def from_row(cls, row) -> "ExplosionEvent":
        from .genome import OPCODES

        thr = int(row[EV_THRESHOLD])
        return cls(int(row[EV_UPDATE]), int(row[EV_X]), int(row[EV_Y]), int(row[EV_LINEAGE]),
                   OPCODES[int(row[EV_OP])], None if thr < 0 else thr, int(row[EV_RELATED]),
                   int(row[EV_UNRELATED]), int(row[EV_EMPTY]), int(row[EV_KILLS]))


class World:
    """A ``width x height`` torus of optional organisms with its own random stream."""

    def __init__(self, width: int = 60, height: int = 60, seed: int | None = 0,
                 rng: np.random.Generator | None = None):
        if width < 5 or height < 5:
            raise ConfigError("world must be at least 5x5")
        self.width = width
        self.height = height
        self.size = width * height
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.bank = CpuBank(self.size)
        self.genomes = np.zeros((self.size, GENOME_LENGTH), dtype=np.int8)
        self.cells = np.full((self.size, 3), -1, dtype=np.int64)
        self.cells[:, LINEAGE] = 0
        self.cells[:, BIRTH] = 0
        self.next_id = np.zeros(1, dtype=np.int64)
        self.update = 0
        self.window = np.zeros(N_WIN, dtype=np.int64)
        self._events = np.zeros((self.size, N_EV), dtype=np.int64)
        self.event_chunks: list[np.ndarray] = []

    # -- geometry --------------------------------------------------------
    def cell(self, x: int, y: int) -> int:
        return (y % self.height) * self.width + (x % self.width)

    def coords(self, cell: int) -> tuple[int, int]:
        return cell % self.width, cell // self.width

    def neighbors5x5(self, cell: int) -> list[int]:
        return [int(_offset(cell, dx, dy, self.width, self.height)) for dx, dy in _RING2]

    def neighbors3x3(self, cell: int) -> list[int]:
        return [int(_offset(cell, dx, dy, self.width, self.height)) for dx, dy in _MOORE]

    # -- occupancy -------------------------------------------------------
    def is_occupied(self, cell: int) -> bool:
        return bool(self.cells[cell, ORG] >= 0)

    @property
    def alive(self) -> np.ndarray:
        return self.cells[:, ORG] >= 0

    @property
    def population(self) -> int:
        return int(np.count_nonzero(self.alive))

    def lineage_counts(self, n_lineages: int = 2) -> np.ndarray:
        lin = self.cells[self.alive, LINEAGE]
        return np.bincount(lin, minlength=n_lineages)[: max(n_lineages, int(lin.max(initial=-1)) + 1)]

    def place(self, cell: int, genome: np.ndarray, lineage: int = 0) -> None:
        """Put a newborn organism with a fresh CPU into ``cell``."""
        genome = np.ascontiguousarray(genome, dtype=np.int8)
        if genome.shape != (GENOME_LENGTH,):
            raise ValueError(f"genome must have length {GENOME_LENGTH}")
        self.genomes[cell] = genome
        self.bank.reset(cell, genome)
        self.cells[cell] = (self.next_id[0], lineage, self.update)
        self.next_id[0] += 1

    def remove(self, cell: int) -> None:
        self.cells[cell, ORG] = -1

    def organism(self, cell: int) -> Organism | None:
        if not self.is_occupied(cell):
            return None
        return Organism(self.genomes[cell], CpuState(bank=self.bank, slot=cell),
                        int(self.cells[cell, LINEAGE]), int(self.cells[cell, BIRTH]))

    @property
    def diagnostics(self) -> dict[str, int]:
        return {name: int(v) for name, v in zip(DIAGNOSTIC_NAMES, self.bank.diagnostics)}

    def drain_events(self) -> np.ndarray:
        if not self.event_chunks:
            return np.zeros((0, N_EV), dtype=np.int64)
        out = np.concatenate(self.event_chunks)
        self.event_chunks = []
        return out


def neighborhood_summary(world: World, cell: int, max_distance: int = 3) -> NeighborhoodSummary:
    """Related / unrelated / empty counts over the 24 cells around ``cell``."""
    if not world.is_occupied(cell):
        raise ValueError(f"cell {cell} is empty")
    r, u, e = _summarize(world.genomes, world.cells, world.width, world.height, cell, max_distance)
    return NeighborhoodSummary(int(r), int(u), int(e))


def apply_explosion(world: World, cell: int, instruction: str = "explode",
                    max_distance: int = 3) -> ExplosionEvent:
    """Detonate the organism at ``cell``: it dies with every unrelated neighbour."""
    if not world.is_occupied(cell):
        raise ValueError(f"cell {cell} is empty")
    events = np.zeros((1, N_EV), dtype=np.int64)
    _record_explosion(world.genomes, world.cells, world.bank.state, world.width, world.height, cell,
                      OPCODE_INDEX[instruction], max_distance, world.update, events, 0, world.window)
    return ExplosionEvent.from_row(events[0])


def place_offspring(world: World, parent_cell: int, child: np.ndarray, config: TreatmentConfig | None = None,
                    mutate: bool = True) -> int:
    """Split the parent into daughter A (in place) and daughter B (random Moore neighbour).

    ``child`` is the offspring genome as copied; it is mutated per ``config``
    unless ``mutate`` is false. Returns daughter B's cell.
    """
    config = config or TreatmentConfig()
    child = np.array(child, dtype=np.int8, copy=True)
    palette = palette_array(config.palette)
    protected = palette_array(config.protected_opcodes) if config.protected else np.zeros(0, np.int8)
    rate = config.mutation_rate if mutate else 0.0
    bank = world.bank
    return int(_place_offspring(*bank.arrays(), bank.diagnostics, world.genomes, world.cells, world.width,
                                world.height, parent_cell, child, world.update, world.rng, world.next_id,
                                rate, palette, protected, np.zeros(GENOME_LENGTH, dtype=np.bool_),
                                np.empty(GENOME_LENGTH, dtype=np.int64)))


class _KernelParams:
    """Arrays derived from a config once per run rather than once per update."""

    def __init__(self, config: TreatmentConfig):
        self.palette = palette_array(config.palette)
        self.protected = (palette_array(config.protected_opcodes) if config.protected
                          else np.zeros(0, dtype=np.int8))


def run_update(world: World, config: TreatmentConfig, _params: _KernelParams | None = None) -> int:
    """Advance the world by one update; returns the number of explosions."""
    p = _params or _KernelParams(config)
    bank = world.bank
    nev = _run_update(*bank.arrays(), bank.diagnostics, world.genomes, world.cells, world.width,
                      world.height, config.cycles_per_update, config.max_distance, config.explode_prob,
                      config.mutation_rate, p.palette, p.protected, world.rng, world.next_id,
                      world.update + 1, world._events, world.window)
    if nev:
        world.event_chunks.append(world._events[:nev].copy())
    world.update += 1
    return int(nev)


def detect_fixation(world: World) -> str | None:
    """``qs_fixed`` / ``nonqs_fixed`` / ``both_extinct`` once a lineage is gone, else ``None``."""
    counts = world.lineage_counts(2)
    return fixation_outcome(int(counts[0]), int(counts[1]))


def fixation_outcome(qs_count: int, nonqs_count: int) -> str | None:
    if qs_count == 0 and nonqs_count == 0:
        return "both_extinct"
    if nonqs_count == 0:
        return "qs_fixed"
    if qs_count == 0:
        return "nonqs_fixed"
    return None


# -- initial placement ----------------------------------------------------

def _block_cells(world: World, n: int, side: str) -> list[int]:
    half = world.width // 2
    w = min(math.ceil(math.sqrt(n)), half)
    rows = math.ceil(n / w)
    if rows > world.height:
        raise ConfigError(f"block of {n} cells does not fit in one half of the grid")
    x0 = (half - w) // 2 + (half if side == "right" else 0)
    y0 = (world.height - rows) // 2
    return [world.cell(x0 + i % w, y0 + i // w) for i in range(n)]


def region_cells(world: World, region: str) -> list[int]:
    half = world.width // 2
    empty = [c for c in range(world.size) if not world.is_occupied(c)]
    if region == "center":
        return [world.cell(world.width // 2, world.height // 2)]
    if region in ("left_half", "right_half"):
        xs = range(0, half) if region == "left_half" else range(half, world.width)
        return [world.cell(x, y) for y in range(world.height) for x in xs]
    if region == "rest":
        return empty
    parts = region.split(":")
    try:
        if parts[0] == "block" and len(parts) == 3 and parts[2] in ("left", "right"):
            return _block_cells(world, int(parts[1]), parts[2])
        if parts[0] == "mixed" and len(parts) == 2:
            n = int(parts[1])
            if n > len(empty):
                raise ConfigError(f"mixed:{n} exceeds the {len(empty)} empty cells")
            picks = world.rng.choice(len(empty), size=n, replace=False)
            return sorted(empty[i] for i in picks)
    except ValueError:
        pass
    raise ConfigError(f"unknown region {region!r}")


def seed_world(world: World, placements) -> None:
    for p in placements:
        genome = make_ancestor(p.kind)
        for cell in region_cells(world, p.region):
            world.place(cell, genome, p.lineage)


@dataclass
class SimulationResult:
    samples: list
    events: np.ndarray
    world: World
    outcome: str | None = None
    fixation_update: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def explosion_events(self) -> list[ExplosionEvent]:
        return [ExplosionEvent.from_row(r) for r in self.events]


def run_simulation(config: TreatmentConfig, seed: int) -> SimulationResult:
    """Seed, populate and run a world; sample every ``sample_interval`` updates.

    The run stops early on extinction, or (with ``stop_on_fixation``) once one
    of lineages 0/1 is gone. Identical ``(config, seed)`` give identical output.
    """
    from .metrics import sample_population

    world = World(config.width, config.height, rng=np.random.default_rng(seed))
    seed_world(world, config.initial_placements)
    params = _KernelParams(config)
    samples = [sample_population(world)]
    outcome = None
    fixation_update = None
    for u in range(1, config.updates + 1):
        run_update(world, config, params)
        if world.population == 0:
            outcome = "extinct" if not config.stop_on_fixation else "both_extinct"
            fixation_update = u if config.stop_on_fixation else None
            samples.append(sample_population(world, extinct=True))
            break
        if config.stop_on_fixation:
            fixed = detect_fixation(world)
            if fixed is not None:
                outcome = fixed
                fixation_update = u
                samples.append(sample_population(world))
                break
        if u % config.sample_interval == 0:
            samples.append(sample_population(world))
    if outcome is None and config.stop_on_fixation:
        outcome = "coexist_at_end"
    return SimulationResult(samples, world.drain_events(), world, outcome, fixation_update,
                            world.diagnostics)
