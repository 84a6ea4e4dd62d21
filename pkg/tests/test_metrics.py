import json

import numpy as np
import pytest

from quorum_altruism.config import Placement, TreatmentConfig, config_from_dict
from quorum_altruism.genome import GENOME_LENGTH, OPCODE_INDEX, STANDARD_OPCODES, encode
from quorum_altruism.metrics import (
    EVENT_KEYS, SAMPLE_COLUMNS, SampleRow, read_event_array, read_events, read_samples, replicate_metric,
    replicate_metrics, sample_population, set_metric, summarize_results, window_kills_from_events, write_outputs,
)
from quorum_altruism.world import (
    EV_KILLS, EV_UPDATE, W_EXPLOSIONS, W_KILLS, W_POP_SUM, W_UPDATES, World, run_simulation,
)

BASE = encode(["nop-Y"] * GENOME_LENGTH)
SE = OPCODE_INDEX["smart-explode"]

GOLDEN_HEADER = (
    "update,population_size,extinct,count_lineage_0,count_lineage_1,"
    "mean_exec_smart_explode,mean_exec_quorum_sense,mean_exec_explode,mean_exec_nop_y,"
    "window_exec_smart_explode,window_exec_quorum_sense,window_exec_explode,window_exec_nop_y,"
    "window_explosions,window_kills,kills_per_explosion,kills_per_explosion_normalized,"
    "explosions_per_organism,mean_window_population,mean_threshold,window_births"
)
GOLDEN_EVENT_KEYS = ("update", "x", "y", "lineage", "instruction", "threshold_pct", "related_count",
                     "unrelated_count", "empty_count", "kills")


@pytest.fixture(scope="module")
def busy_run():
    cfg = TreatmentConfig(width=16, height=16, updates=600, explode_prob=0.3, mutation_rate=0.2,
                          palette=STANDARD_OPCODES, protected=True,
                          initial_placements=(Placement("qs_altruist", 0, "left_half"),
                                              Placement("nonqs_altruist", 1, "right_half")))
    return cfg, run_simulation(cfg, seed=3)


def test_schemas_are_pinned():
    assert ",".join(SAMPLE_COLUMNS) == GOLDEN_HEADER
    assert EVENT_KEYS == GOLDEN_EVENT_KEYS


def test_lifetime_mean_over_living_organisms():
    w = World(8, 8)
    w.place(0, BASE)
    w.place(9, BASE)
    w.bank.exec_counts[0, SE] = 1
    w.bank.exec_counts[9, SE] = 3
    row = sample_population(w)
    assert row.mean_exec_smart_explode == 2.0
    assert row.kills_per_explosion is None and row.window_explosions == 0


def test_empty_population_means_are_absent():
    row = sample_population(World(8, 8), extinct=True)
    assert row.mean_exec_nop_y is None and row.population_size == 0 and row.extinct == 1


def test_normalised_kills_per_explosion_arithmetic():
    w = World(8, 8)
    w.place(0, BASE)
    w.window[W_EXPLOSIONS] = 3
    w.window[W_KILLS] = 6
    w.window[W_POP_SUM] = 3423 * 100
    w.window[W_UPDATES] = 100
    row = sample_population(w)
    assert row.kills_per_explosion == 2.0
    assert row.kills_per_explosion_normalized == pytest.approx(0.000584, abs=5e-7)
    assert row.explosions_per_organism == pytest.approx(3 / 3423)
    assert np.all(w.window == 0)


def test_zero_update_output_has_header_and_initial_row(tmp_path):
    cfg = TreatmentConfig(updates=0)
    write_outputs(run_simulation(cfg, 1), tmp_path, cfg, seed=1)
    lines = (tmp_path / "samples.csv").read_text().splitlines()
    assert lines[0] == GOLDEN_HEADER
    assert len(lines) == 2 and lines[1].startswith("0,1,0,1,0,")
    assert (tmp_path / "explosions.jsonl").read_text() == ""
    assert (tmp_path / "summary.svg").read_text().lstrip().startswith("<?xml")


def test_files_round_trip(tmp_path, busy_run):
    cfg, res = busy_run
    write_outputs(res, tmp_path, cfg, seed=3)
    assert read_samples(tmp_path / "samples.csv") == res.samples
    assert read_events(tmp_path / "explosions.jsonl") == res.explosion_events()
    assert np.array_equal(read_event_array(tmp_path / "explosions.jsonl"), res.events)
    meta = json.loads((tmp_path / "run_meta.json").read_text())
    assert meta["seed"] == 3
    assert config_from_dict(meta["config"]) == cfg
    for line in (tmp_path / "explosions.jsonl").read_text().splitlines():
        assert tuple(json.loads(line)) == GOLDEN_EVENT_KEYS


def test_window_kills_match_event_log(busy_run):
    cfg, res = busy_run
    assert res.events.shape[0] > 0
    prev = 0
    for row in res.samples[1:]:
        assert row.window_kills == window_kills_from_events(res.events, prev, row.update)
        sel = (res.events[:, EV_UPDATE] > prev) & (res.events[:, EV_UPDATE] <= row.update)
        assert row.window_explosions == int(sel.sum())
        prev = row.update
    assert sum(r.window_kills for r in res.samples) == int(res.events[:, EV_KILLS].sum())


def test_event_invariants(busy_run):
    _, res = busy_run
    for ev in res.explosion_events():
        assert ev.kills <= ev.unrelated_count
        assert ev.related_count + ev.unrelated_count + ev.empty_count == 24
        if ev.instruction == "explode":
            assert ev.threshold_pct is None
        elif ev.threshold_pct is not None:
            assert 0 <= ev.threshold_pct <= 100


def test_lineage_counts_sum_to_population(busy_run):
    _, res = busy_run
    for row in res.samples:
        assert row.count_lineage_0 + row.count_lineage_1 == row.population_size


def test_output_is_deterministic(tmp_path, busy_run):
    cfg, res = busy_run
    write_outputs(res, tmp_path / "a", cfg, 3)
    write_outputs(run_simulation(cfg, 3), tmp_path / "b", cfg, 3)
    for name in ("samples.csv", "explosions.jsonl", "run_meta.json", "summary.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_replicate_metrics(tmp_path, busy_run):
    cfg, res = busy_run
    write_outputs(res, tmp_path / "set" / "rep00", cfg, 3)
    write_outputs(res, tmp_path / "set" / "rep01", cfg, 3)
    rep = tmp_path / "set" / "rep00"
    assert replicate_metric(rep, "population_size") == res.samples[-1].population_size
    q = [r.population_size for r in res.samples if r.update > 450]
    assert replicate_metric(rep, "population_size:final_quarter") == pytest.approx(np.mean(q))
    ev = res.events[res.events[:, EV_UPDATE] > 450]
    kpe = replicate_metric(rep, "final_quarter_kills_per_explosion")
    assert kpe == pytest.approx(ev[:, EV_KILLS].sum() / ev.shape[0])
    assert replicate_metric(rep, "final_quarter_kills_per_explosion_normalized") == pytest.approx(kpe / np.mean(q))
    assert len(set_metric(tmp_path / "set", "population_size")) == 2
    with pytest.raises(KeyError):
        replicate_metric(rep, "nope")
    together = replicate_metrics(rep, ["population_size", "final_quarter_kills_per_explosion"])
    assert together["final_quarter_kills_per_explosion"] == kpe

    summary = summarize_results(tmp_path)
    entry = summary["sets"]["set"]
    assert entry["replicates"] == 2 and "outcomes" not in entry
    assert entry["metrics"]["final_quarter_kills_per_explosion"] == [kpe, kpe]
    assert entry["config"]["width"] == cfg.width
