"""The two evolution treatments, the three competition assays and replicate orchestration.

Replicate ``i`` of a set always uses seed ``seed_base + i`` and writes into
``out/repNN``; a process pool runs replicates concurrently and results are
collected by replicate index, so the output tree does not depend on ``jobs``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ancestors import ANCESTOR_KINDS, make_ancestor
from .config import NONQS_PALETTE, QS_PALETTE, ConfigError, Placement, TreatmentConfig
from .genome import STANDARD_OPCODES
from .metrics import write_outputs
from .world import detect_fixation, fixation_outcome, run_simulation

__all__ = [
    "ANCESTOR_KINDS", "AssayResult", "COMPETITION_FRACTIONS", "OUTCOMES", "competition_config",
    "detect_fixation", "fixation_outcome", "make_ancestor", "run_competition_assay", "run_replicates",
    "run_single_lineage_treatment", "treatment_config",
]

OUTCOMES = ("qs_fixed", "nonqs_fixed", "coexist_at_end", "both_extinct")
COMPETITION_FRACTIONS = (0.5, 0.05, 0.95)
QS_LINEAGE, NONQS_LINEAGE = 0, 1


def treatment_config(kind: str, base: TreatmentConfig | None = None) -> TreatmentConfig:
    """One default ancestor at the centre; palette chosen by treatment ``kind``."""
    if kind not in ("qs", "nonqs"):
        raise ConfigError(f"unknown treatment {kind!r}")
    base = base or TreatmentConfig()
    return base.replace(
        treatment=kind,
        palette=QS_PALETTE if kind == "qs" else NONQS_PALETTE,
        initial_placements=(Placement("default", 0, "center"),),
        protected=False,
        stop_on_fixation=False,
    )


def competition_placements(qs_fraction: float, width: int, height: int,
                           seeding: str = "block") -> tuple[Placement, ...]:
    """Colony layout for a competition with the given initial qs share."""
    if not 0.0 < qs_fraction < 1.0:
        raise ConfigError("qs_fraction must lie strictly between 0 and 1")
    if seeding not in ("block", "mixed"):
        raise ConfigError(f"unknown seeding {seeding!r}")
    qs, nonqs = "qs_altruist", "nonqs_altruist"
    if math.isclose(qs_fraction, 0.5):
        if seeding == "block":
            return (Placement(qs, QS_LINEAGE, "left_half"), Placement(nonqs, NONQS_LINEAGE, "right_half"))
        n = width * height // 2
        return (Placement(qs, QS_LINEAGE, f"mixed:{n}"), Placement(nonqs, NONQS_LINEAGE, "rest"))
    minority_qs = qs_fraction < 0.5
    n = math.ceil(min(qs_fraction, 1.0 - qs_fraction) * width * height)
    if minority_qs:
        region = f"block:{n}:left" if seeding == "block" else f"mixed:{n}"
        return (Placement(qs, QS_LINEAGE, region), Placement(nonqs, NONQS_LINEAGE, "rest"))
    region = f"block:{n}:right" if seeding == "block" else f"mixed:{n}"
    return (Placement(nonqs, NONQS_LINEAGE, region), Placement(qs, QS_LINEAGE, "rest"))


def competition_config(qs_fraction: float, base: TreatmentConfig | None = None,
                       seeding: str = "block") -> TreatmentConfig:
    """Protected-mode competition between the two hand-written altruists."""
    base = base or TreatmentConfig()
    return base.replace(
        treatment=f"compete_{qs_fraction:g}",
        palette=STANDARD_OPCODES,
        initial_placements=competition_placements(qs_fraction, base.width, base.height, seeding),
        protected=True,
        stop_on_fixation=True,
    )


@dataclass
class AssayResult:
    """Outcome of one competition replicate.

    ``proportions`` is a ``(samples, 2)`` array of each lineage's share of the
    grid, sampled every ``sample_interval`` updates and padded with the final
    state out to ``updates`` after an early stop.
    """

    outcome: str
    fixation_update: int | None
    updates: np.ndarray
    proportions: np.ndarray
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def qs_proportion(self) -> np.ndarray:
        return self.proportions[:, QS_LINEAGE]

    @property
    def nonqs_proportion(self) -> np.ndarray:
        return self.proportions[:, NONQS_LINEAGE]


def _assay_from_result(result, config: TreatmentConfig, seed: int) -> AssayResult:
    cells = config.width * config.height
    rows = [r for r in result.samples]
    ups = [r.update for r in rows]
    props = [(r.count_lineage_0 / cells, r.count_lineage_1 / cells) for r in rows]
    # pad to the full horizon with the fixed state
    last = props[-1]
    nxt = (ups[-1] // config.sample_interval + 1) * config.sample_interval
    for u in range(nxt, config.updates + 1, config.sample_interval):
        ups.append(u)
        props.append(last)
    return AssayResult(result.outcome, result.fixation_update, np.array(ups, dtype=np.int64),
                       np.array(props, dtype=np.float64).reshape(-1, 2), seed, result.diagnostics)


def run_competition_assay(qs_fraction: float, seed: int, base: TreatmentConfig | None = None,
                          seeding: str = "block", out_dir: str | Path | None = None,
                          svg: bool = True) -> AssayResult:
    config = competition_config(qs_fraction, base, seeding)
    result = run_simulation(config, seed)
    if out_dir is not None:
        write_outputs(result, out_dir, config, seed, svg=svg)
    return _assay_from_result(result, config, seed)


def run_single_lineage_treatment(kind: str, seed: int, base: TreatmentConfig | None = None,
                                 out_dir: str | Path | None = None, svg: bool = True):
    config = treatment_config(kind, base)
    result = run_simulation(config, seed)
    if out_dir is not None:
        write_outputs(result, out_dir, config, seed, svg=svg)
    return result


# -- replicate sets ---------------------------------------------------------

def _run_one(config: TreatmentConfig, seed: int, out_dir: str, svg: bool) -> dict:
    result = run_simulation(config, seed)
    write_outputs(result, out_dir, config, seed, svg=svg)
    return {"seed": seed, "dir": out_dir, "outcome": result.outcome,
            "fixation_update": result.fixation_update, "final_update": result.world.update,
            "final_population": result.world.population}


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def run_replicates(config: TreatmentConfig, seed_base: int, replicates: int, out_dir: str | Path,
                   jobs: int | None = None, svg: bool = True, skip_existing: bool = False,
                   progress=None) -> list[dict]:
    """Run ``replicates`` worlds of ``config`` into ``out_dir/repNN``.

    With ``skip_existing`` a replicate whose ``run_meta.json`` is present is
    not rerun, which lets an interrupted set be completed later.
    """
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    jobs = jobs or default_jobs()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(replicates - 1)))
    tasks = []
    for i in range(replicates):
        rep = out / f"rep{i:0{width}d}"
        tasks.append((config, seed_base + i, str(rep), svg))
    summaries: list[dict | None] = [None] * replicates
    todo = []
    for i, t in enumerate(tasks):
        meta = Path(t[2]) / "run_meta.json"
        if skip_existing and meta.exists():
            m = json.loads(meta.read_text(encoding="utf-8"))
            summaries[i] = {"seed": m["seed"], "dir": t[2], "outcome": m["outcome"],
                            "fixation_update": m["fixation_update"], "final_update": m["final_update"],
                            "final_population": m["final_population"]}
        else:
            todo.append(i)
    if jobs == 1 or len(todo) <= 1:
        for i in todo:
            summaries[i] = _run_one(*tasks[i])
            if progress:
                progress(summaries[i])
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(todo))) as pool:
            futures = {i: pool.submit(_run_one, *tasks[i]) for i in todo}
            for i in todo:
                summaries[i] = futures[i].result()
                if progress:
                    progress(summaries[i])
    index = {"config": config.to_dict(), "seed_base": seed_base, "replicates": summaries}
    (out / "index.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return summaries  # type: ignore[return-value]


def outcome_counts(summaries) -> dict[str, int]:
    counts = {k: 0 for k in OUTCOMES}
    for s in summaries:
        if s["outcome"] in counts:
            counts[s["outcome"]] += 1
    return counts
