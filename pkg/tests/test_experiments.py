import json
import math

import numpy as np
import pytest

from quorum_altruism.ancestors import QS_THRESHOLD, ancestor_names
from quorum_altruism.config import ConfigError, NONQS_PALETTE, QS_PALETTE, TreatmentConfig
from quorum_altruism.experiments import (
    AssayResult, competition_config, competition_placements, detect_fixation, fixation_outcome, make_ancestor,
    outcome_counts, run_competition_assay, run_replicates, run_single_lineage_treatment, treatment_config,
)
from quorum_altruism.genome import (
    GENOME_LENGTH, OPCODE_INDEX, STANDARD_OPCODES, STRATEGY_OPCODES, decode, hamming_distance,
)
from quorum_altruism.world import LINEAGE, World, region_cells, run_simulation, seed_world

SMALL = TreatmentConfig(width=20, height=20, updates=200, sample_interval=50)


def test_ancestor_shapes():
    default = decode(make_ancestor("default"))
    assert len(default) == GENOME_LENGTH
    assert default[0] == "h-alloc"
    assert default[-9:] == ["h-search", "h-copy", "if-label", "nop-C", "nop-A", "h-divide", "mov-head",
                            "nop-A", "nop-B"]
    assert set(default) <= {"h-alloc", "h-search", "h-copy", "if-label", "h-divide", "mov-head",
                             "nop-A", "nop-B", "nop-C"}
    qs = decode(make_ancestor("qs_altruist"))
    i = qs.index("quorum-sense")
    assert qs[i + 1] == "smart-explode"
    prologue = [op for op in qs[:i] if not op.startswith("nop")]
    assert prologue == ["inc", "shift-l", "shift-l", "inc", "shift-l", "inc", "shift-l", "inc", "shift-l",
                        "shift-l"]
    nonqs = decode(make_ancestor("nonqs_altruist"))
    assert nonqs.count("explode") == 1 and "smart-explode" not in nonqs
    with pytest.raises(ValueError):
        ancestor_names("mystery")


def test_prologue_arithmetic_reaches_92():
    v = 0
    trail = []
    for op in ["inc", "shift-l", "shift-l", "inc", "shift-l", "inc", "shift-l", "inc", "shift-l", "shift-l"]:
        v = v + 1 if op == "inc" else v * 2
        trail.append(v)
    assert trail == [1, 2, 4, 5, 10, 11, 22, 23, 46, 92]
    assert QS_THRESHOLD == 92


def test_altruist_ancestors_are_mutually_unrelated():
    assert hamming_distance(make_ancestor("qs_altruist"), make_ancestor("nonqs_altruist")) >= 4


@pytest.mark.parametrize("qs,nonqs,expected", [(3400, 0, "qs_fixed"), (0, 0, "both_extinct"),
                                               (1800, 1800, None), (0, 5, "nonqs_fixed")])
def test_fixation_outcome(qs, nonqs, expected):
    assert fixation_outcome(qs, nonqs) == expected


def test_detect_fixation_on_world():
    w = World(10, 10)
    w.place(0, make_ancestor("qs_altruist"), lineage=0)
    assert detect_fixation(w) == "qs_fixed"
    w.place(1, make_ancestor("nonqs_altruist"), lineage=1)
    assert detect_fixation(w) is None


def test_treatment_configs():
    qs = treatment_config("qs")
    assert set(qs.palette) == set(QS_PALETTE) and "explode" not in qs.palette
    nonqs = treatment_config("nonqs")
    assert set(nonqs.palette) == set(NONQS_PALETTE) and "smart-explode" not in nonqs.palette
    for cfg in (qs, nonqs):
        assert {"h-copy", "h-divide", "h-alloc", "nop-A", "nop-Y"} <= set(cfg.palette)
        assert [str(p) for p in cfg.initial_placements] == ["default/0/center"]
        assert not cfg.protected
    with pytest.raises(ConfigError):
        treatment_config("other")


def test_published_defaults():
    cfg = TreatmentConfig()
    assert (cfg.width, cfg.height, cfg.updates, cfg.sample_interval) == (60, 60, 30_000, 100)
    assert cfg.mutation_rate == 0.02 and cfg.explode_prob == 0.05 and cfg.max_distance == 3
    assert cfg.replicates == 30 and cfg.cycles_per_update == 30


@pytest.mark.parametrize("fraction", [0.5, 0.05, 0.95])
def test_competition_layouts(fraction):
    cfg = competition_config(fraction)
    assert cfg.protected and cfg.stop_on_fixation
    assert not set(STRATEGY_OPCODES) & set(cfg.palette)
    w = World(60, 60)
    seed_world(w, cfg.initial_placements)
    assert w.population == 3600
    qs = int(np.count_nonzero(w.cells[:, LINEAGE] == 0))
    minority = math.ceil(min(fraction, 1 - fraction) * 3600)
    assert qs == (1800 if fraction == 0.5 else minority if fraction < 0.5 else 3600 - minority)


def test_minority_block_is_a_centred_contiguous_square():
    w = World(60, 60)
    block = region_cells(w, "block:180:left")
    xs = sorted({w.coords(c)[0] for c in block})
    ys = sorted({w.coords(c)[1] for c in block})
    assert xs == list(range(xs[0], xs[-1] + 1)) and ys == list(range(ys[0], ys[-1] + 1))
    assert len(xs) == 14 and len(ys) == 13
    assert abs((xs[0] + xs[-1]) / 2 - 14.5) <= 1 and abs((ys[0] + ys[-1]) / 2 - 29.5) <= 1


def test_mixed_seeding_switch():
    placements = competition_placements(0.05, 60, 60, seeding="mixed")
    assert placements[0].region == "mixed:180"
    with pytest.raises(ConfigError):
        competition_placements(0.05, 60, 60, seeding="striped")
    with pytest.raises(ConfigError):
        competition_placements(1.0, 60, 60)


def test_protected_strategy_loci_and_lineages_are_conserved():
    base = TreatmentConfig(width=20, height=20, updates=400, sample_interval=100, mutation_rate=1.0,
                           explode_prob=0.2)
    cfg = competition_config(0.5, base)
    ancestors = {0: make_ancestor("qs_altruist"), 1: make_ancestor("nonqs_altruist")}
    strategy = [OPCODE_INDEX[o] for o in STRATEGY_OPCODES]
    res = run_simulation(cfg, seed=2)
    w = res.world
    alive = np.flatnonzero(w.alive)
    assert alive.size > 0
    for c in alive:
        lin = int(w.cells[c, LINEAGE])
        anc = ancestors[lin]
        loci = np.isin(anc, strategy)
        assert np.array_equal(w.genomes[c][loci], anc[loci])
        assert not np.isin(np.delete(w.genomes[c], np.flatnonzero(loci)), strategy).any()
    assert set(np.unique(w.cells[alive, LINEAGE])) <= {0, 1}


def test_assay_result_is_padded_to_full_horizon():
    base = TreatmentConfig(width=10, height=10, updates=3000, sample_interval=100, explode_prob=1.0)
    res = run_competition_assay(0.05, seed=1, base=base)
    assert isinstance(res, AssayResult)
    assert res.outcome in ("qs_fixed", "nonqs_fixed", "both_extinct", "coexist_at_end")
    assert res.updates[-1] == 3000
    assert res.proportions.shape == (res.updates.shape[0], 2)
    assert np.all(res.proportions.sum(axis=1) <= 1 + 1e-12)
    if res.fixation_update is not None:
        after = res.updates > res.fixation_update
        assert np.all(res.proportions[after] == res.proportions[-1])


def test_single_lineage_treatment_writes_outputs(tmp_path):
    res = run_single_lineage_treatment("nonqs", seed=5, base=SMALL, out_dir=tmp_path)
    assert res.world.update == 200
    assert (tmp_path / "samples.csv").exists()


def test_replicate_sets_do_not_depend_on_job_count(tmp_path):
    cfg = treatment_config("qs", SMALL)
    a = run_replicates(cfg, 7, 3, tmp_path / "a", jobs=1, svg=False)
    b = run_replicates(cfg, 7, 3, tmp_path / "b", jobs=2, svg=False)
    assert [s["seed"] for s in a] == [7, 8, 9]
    for i in range(3):
        for name in ("samples.csv", "explosions.jsonl"):
            assert (tmp_path / "a" / f"rep{i:02d}" / name).read_bytes() == \
                (tmp_path / "b" / f"rep{i:02d}" / name).read_bytes()
        meta = json.loads((tmp_path / "a" / f"rep{i:02d}" / "run_meta.json").read_text())
        assert meta["seed"] == 7 + i
    assert outcome_counts([{"outcome": "qs_fixed"}, {"outcome": "qs_fixed"}, {"outcome": None}])["qs_fixed"] == 2
