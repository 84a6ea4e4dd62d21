"""Population sampling and run output files.

Per replicate directory:

``samples.csv``
    one :class:`SampleRow` per line, columns in :data:`SAMPLE_COLUMNS` order;
    absent values are empty fields.
``explosions.jsonl``
    one JSON object per explosion with the keys of :data:`EVENT_KEYS`.
``run_meta.json``
    config echo, seed, code version, outcome and diagnostics.
``summary.svg``
    population size and lineage proportions over time.

Lifetime means (``mean_exec_*``) average each living organism's execution
counters since its birth. Window rates (``window_exec_*``) divide the
executions during the sampling window by the window's mean population.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import TreatmentConfig
from .genome import OPCODE_INDEX, OPCODES
from .world import (
    EV_EMPTY, EV_KILLS, EV_LINEAGE, EV_OP, EV_RELATED, EV_THRESHOLD, EV_UNRELATED, EV_UPDATE, EV_X, EV_Y,
    LINEAGE, N_EV, W_BIRTHS, W_EXEC, W_EXPLOSIONS, W_KILLS, W_POP_SUM, W_THRESH_N, W_THRESH_SUM,
    W_UPDATES, ExplosionEvent, SimulationResult, World,
)

TRACKED_OPCODES = ("smart-explode", "quorum-sense", "explode", "nop-Y")


@dataclass(frozen=True)
class SampleRow:
    update: int
    population_size: int
    extinct: int
    count_lineage_0: int
    count_lineage_1: int
    mean_exec_smart_explode: float | None
    mean_exec_quorum_sense: float | None
    mean_exec_explode: float | None
    mean_exec_nop_y: float | None
    window_exec_smart_explode: float | None
    window_exec_quorum_sense: float | None
    window_exec_explode: float | None
    window_exec_nop_y: float | None
    window_explosions: int
    window_kills: int
    kills_per_explosion: float | None
    kills_per_explosion_normalized: float | None
    explosions_per_organism: float | None
    mean_window_population: float | None
    mean_threshold: float | None
    window_births: int


SAMPLE_COLUMNS: tuple[str, ...] = tuple(f.name for f in fields(SampleRow))
EVENT_KEYS: tuple[str, ...] = tuple(f.name for f in fields(ExplosionEvent))
_INT_COLUMNS = {"update", "population_size", "extinct", "count_lineage_0", "count_lineage_1",
                "window_explosions", "window_kills", "window_births"}


def _suffix(op: str) -> str:
    return op.replace("-", "_").lower()


def sample_population(world: World, extinct: bool = False) -> SampleRow:
    """Summarise the living population and drain the window accumulators."""
    alive = world.alive
    pop = int(np.count_nonzero(alive))
    lin = np.bincount(world.cells[alive, LINEAGE], minlength=2)
    win = world.window
    n_upd = int(win[W_UPDATES])
    mean_pop = float(win[W_POP_SUM] / n_upd) if n_upd else float(pop)

    lifetime = {}
    window = {}
    execs = world.bank.exec_counts[alive]
    for op in TRACKED_OPCODES:
        idx = OPCODE_INDEX[op]
        lifetime[op] = float(execs[:, idx].mean()) if pop else None
        window[op] = float(win[W_EXEC + idx] / mean_pop) if mean_pop > 0 else None

    n_exp = int(win[W_EXPLOSIONS])
    kills = int(win[W_KILLS])
    kpe = kills / n_exp if n_exp else None
    row = SampleRow(
        update=world.update,
        population_size=pop,
        extinct=int(extinct),
        count_lineage_0=int(lin[0]),
        count_lineage_1=int(lin[1]),
        mean_exec_smart_explode=lifetime["smart-explode"],
        mean_exec_quorum_sense=lifetime["quorum-sense"],
        mean_exec_explode=lifetime["explode"],
        mean_exec_nop_y=lifetime["nop-Y"],
        window_exec_smart_explode=window["smart-explode"],
        window_exec_quorum_sense=window["quorum-sense"],
        window_exec_explode=window["explode"],
        window_exec_nop_y=window["nop-Y"],
        window_explosions=n_exp,
        window_kills=kills,
        kills_per_explosion=kpe,
        kills_per_explosion_normalized=kpe / mean_pop if kpe is not None and mean_pop > 0 else None,
        explosions_per_organism=n_exp / mean_pop if mean_pop > 0 else None,
        mean_window_population=float(mean_pop),
        mean_threshold=float(win[W_THRESH_SUM] / win[W_THRESH_N]) if win[W_THRESH_N] else None,
        window_births=int(win[W_BIRTHS]),
    )
    win[:] = 0
    return row


# -- files ----------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def format_samples_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SAMPLE_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, k)) for k in SAMPLE_COLUMNS])
    return buf.getvalue()


def read_samples(path: str | Path) -> list[SampleRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: unexpected samples.csv header")
        out = []
        for rec in reader:
            vals = {}
            for k in SAMPLE_COLUMNS:
                v = rec[k]
                if v == "":
                    vals[k] = None
                elif k in _INT_COLUMNS:
                    vals[k] = int(v)
                else:
                    vals[k] = float(v)
            out.append(SampleRow(**vals))
    return out


def event_lines(events: np.ndarray):
    """Yield one JSON line per event row; key order follows :data:`EVENT_KEYS`."""
    for r in events:
        thr = r[EV_THRESHOLD]
        yield (
            f'{{"update": {r[EV_UPDATE]}, "x": {r[EV_X]}, "y": {r[EV_Y]}, "lineage": {r[EV_LINEAGE]}, '
            f'"instruction": "{OPCODES[r[EV_OP]]}", "threshold_pct": {"null" if thr < 0 else thr}, '
            f'"related_count": {r[EV_RELATED]}, "unrelated_count": {r[EV_UNRELATED]}, '
            f'"empty_count": {r[EV_EMPTY]}, "kills": {r[EV_KILLS]}}}\n'
        )


def read_events(path: str | Path) -> list[ExplosionEvent]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ExplosionEvent(**json.loads(line)))
    return out


def read_event_array(path: str | Path) -> np.ndarray:
    """Load ``explosions.jsonl`` back into the compact integer event table."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            thr = d["threshold_pct"]
            rows.append((d["update"], d["x"], d["y"], d["lineage"], OPCODE_INDEX[d["instruction"]],
                         -1 if thr is None else thr, d["related_count"], d["unrelated_count"],
                         d["empty_count"], d["kills"]))
    return np.array(rows, dtype=np.int64).reshape(-1, N_EV)


def run_meta(result: SimulationResult, config: TreatmentConfig, seed: int) -> dict:
    return {
        "code_version": __version__,
        "seed": seed,
        "config": config.to_dict(),
        "outcome": result.outcome,
        "fixation_update": result.fixation_update,
        "final_update": result.world.update,
        "final_population": result.world.population,
        "explosions": int(result.events.shape[0]),
        "diagnostics": result.diagnostics,
    }


def write_summary_svg(rows, path: str | Path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    updates = [r.update for r in rows]
    pop = [r.population_size for r in rows]
    with matplotlib.rc_context({"svg.hashsalt": "quorum-altruism", "svg.fonttype": "none"}):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        ax1.plot(updates, pop, color="black", lw=1)
        ax1.set_ylabel("population")
        if title:
            ax1.set_title(title)
        for lineage, color in ((0, "tab:red"), (1, "tab:blue")):
            key = f"count_lineage_{lineage}"
            frac = [getattr(r, key) / r.population_size if r.population_size else 0.0 for r in rows]
            ax2.plot(updates, frac, color=color, lw=1, label=f"lineage {lineage}")
        ax2.set_ylim(-0.02, 1.02)
        ax2.set_ylabel("proportion")
        ax2.set_xlabel("update")
        ax2.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def write_outputs(result: SimulationResult, out_dir: str | Path, config: TreatmentConfig, seed: int,
                  svg: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "samples.csv").write_text(format_samples_csv(result.samples), encoding="utf-8")
    with open(out / "explosions.jsonl", "w", encoding="utf-8") as fh:
        fh.writelines(event_lines(result.events))
    (out / "run_meta.json").write_text(json.dumps(run_meta(result, config, seed), indent=2) + "\n",
                                       encoding="utf-8")
    if svg:
        write_summary_svg(result.samples, out / "summary.svg", title=f"{config.treatment} seed {seed}")
    return out


def window_kills_from_events(events: np.ndarray, start: int, stop: int) -> int:
    """Total kills for events with ``start < update <= stop``."""
    sel = (events[:, EV_UPDATE] > start) & (events[:, EV_UPDATE] <= stop)
    return int(events[sel, EV_KILLS].sum())


def as_dict(row: SampleRow) -> dict:
    return dataclasses.asdict(row)


# -- per-replicate scalar metrics -------------------------------------------

#: Metrics computed from explosion events of the final quarter of a run.
EVENT_METRICS = (
    "final_quarter_kills_per_explosion",
    "final_quarter_kills_per_explosion_normalized",
    "final_quarter_threshold_median",
    "final_quarter_explosions_per_organism",
)


def _final_quarter_start(rows) -> float:
    return 0.75 * rows[-1].update


def replicate_metrics(rep_dir: str | Path, names) -> dict[str, float | None]:
    """Several metrics of one replicate, reading its files at most once.

    Each name is either a :data:`SAMPLE_COLUMNS` entry (value in the last
    sampled row), ``<column>:final_quarter`` (mean over rows in the last
    quarter of the run, ignoring absent values), or one of
    :data:`EVENT_METRICS`, which pool all explosion events with ``update`` in
    the last quarter. The threshold median uses smart-explode events only.
    Undefined values are ``None``.
    """
    names = list(names)
    rep = Path(rep_dir)
    rows = read_samples(rep / "samples.csv")
    if not rows:
        return {n: None for n in names}
    start = _final_quarter_start(rows)
    ev = None
    out: dict[str, float | None] = {}
    for name in names:
        if name in EVENT_METRICS:
            if ev is None:
                ev = read_event_array(rep / "explosions.jsonl")
                ev = ev[ev[:, EV_UPDATE] > start]
            out[name] = _event_metric(name, ev, rows, start)
            continue
        column, _, mode = name.partition(":")
        if column not in SAMPLE_COLUMNS:
            raise KeyError(f"unknown metric {name!r}")
        if mode == "":
            out[name] = getattr(rows[-1], column)
        elif mode == "final_quarter":
            vals = [getattr(r, column) for r in rows if r.update > start and getattr(r, column) is not None]
            out[name] = float(np.mean(vals)) if vals else None
        else:
            raise KeyError(f"unknown metric mode {mode!r}")
    return out


def _event_metric(name: str, ev: np.ndarray, rows, start: float) -> float | None:
    q_rows = [r for r in rows if r.update > start]
    mean_pop = float(np.mean([r.population_size for r in q_rows])) if q_rows else 0.0
    span = rows[-1].update - start
    if name == "final_quarter_threshold_median":
        thr = ev[(ev[:, EV_OP] == OPCODE_INDEX["smart-explode"]) & (ev[:, EV_THRESHOLD] >= 0), EV_THRESHOLD]
        return float(np.median(thr)) if thr.size else None
    if name == "final_quarter_explosions_per_organism":
        if mean_pop <= 0 or span <= 0:
            return None
        # per organism per 100 updates, the sampling-window scale
        return ev.shape[0] / mean_pop * 100.0 / span
    if ev.shape[0] == 0:
        return None
    kpe = float(ev[:, EV_KILLS].sum()) / ev.shape[0]
    if name == "final_quarter_kills_per_explosion":
        return kpe
    return kpe / mean_pop if mean_pop > 0 else None


def replicate_metric(rep_dir: str | Path, name: str) -> float | None:
    """Single-metric form of :func:`replicate_metrics`."""
    return replicate_metrics(rep_dir, [name])[name]


def replicate_dirs(set_dir: str | Path) -> list[Path]:
    """Replicate subdirectories ``repNN`` of a result set, in index order."""
    root = Path(set_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    reps = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("rep") and p.name[3:].isdigit())
    return sorted(reps, key=lambda p: int(p.name[3:]))


def set_metric(set_dir: str | Path, name: str) -> list[float]:
    """Metric values for every replicate of a set; undefined values are skipped."""
    out = []
    for rep in replicate_dirs(set_dir):
        v = replicate_metric(rep, name)
        if v is not None:
            out.append(float(v))
    return out


#: Per-replicate metrics the evolution comparisons are based on.
SUMMARY_METRICS = (
    "mean_exec_smart_explode",
    "mean_exec_nop_y",
    "mean_exec_quorum_sense",
    "mean_exec_explode",
    "population_size",
    *EVENT_METRICS,
)


def summarize_results(root: str | Path, metrics=SUMMARY_METRICS) -> dict:
    """Compact per-replicate summary of every result set under ``root``.

    A set is any subdirectory holding ``repNN`` folders. Each set maps metric
    names to one value per replicate (``None`` where undefined) and, when the
    set wrote ``outcomes.json``, carries the outcome counts as well.
    """
    root = Path(root)
    summary: dict = {"root": str(root), "sets": {}}
    for set_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        reps = replicate_dirs(set_dir)
        if not reps:
            continue
        per_rep = [replicate_metrics(r, metrics) for r in reps]
        entry: dict = {"replicates": len(reps),
                       "metrics": {m: [v[m] for v in per_rep] for m in metrics}}
        outcomes = set_dir / "outcomes.json"
        if outcomes.exists():
            entry["outcomes"] = json.loads(outcomes.read_text(encoding="utf-8"))
        meta = reps[0] / "run_meta.json"
        if meta.exists():
            entry["config"] = json.loads(meta.read_text(encoding="utf-8"))["config"]
        summary["sets"][set_dir.name] = entry
    return summary
