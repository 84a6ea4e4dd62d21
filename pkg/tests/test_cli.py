import json

import pytest

from quorum_altruism.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, analyze_sets, parse_and_run
from quorum_altruism.config import (
    ConfigError, TreatmentConfig, config_from_dict, format_config, load_config, parse_config_text,
)

SMALL_CFG = "width = 12\nheight = 12\nupdates = 120\nsample_interval = 40\n"


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CFG)
    return path


def test_config_text_parsing():
    cfg = parse_config_text("# comment\nmutation_rate = 0.2  # inline\nprotected = yes\n"
                            "palette = nop-A, h-copy\ninitial_placements = default/0/center, default/1/rest\n")
    assert cfg.mutation_rate == 0.2 and cfg.protected
    assert cfg.palette == ("nop-A", "h-copy")
    assert [str(p) for p in cfg.initial_placements] == ["default/0/center", "default/1/rest"]


@pytest.mark.parametrize("text,fragment", [
    ("mutation_rat = 0.2", "line 1: unknown key 'mutation_rat'"),
    ("\nupdates = many", "line 2: bad value for 'updates'"),
    ("updates 5", "line 1: expected 'key = value'"),
    ("palette = nop-A, teleport", "teleport"),
    ("explode_prob = 1.5", "explode_prob"),
])
def test_config_errors_name_the_line(text, fragment):
    with pytest.raises(ConfigError, match=fragment.replace("(", r"\(")):
        parse_config_text(text)


def test_config_round_trips():
    cfg = TreatmentConfig(mutation_rate=0.2, width=30, protected=False, replicates=4)
    assert parse_config_text(format_config(cfg)) == cfg
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_unknown_key_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("width = 12\nspeed = 3\n")
    code = parse_and_run(["evolve", "--treatment", "qs", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["evolve"],
    ["evolve", "--treatment", "both"],
    ["compete", "--qs-fraction", "0.3"],
    ["evolve", "--treatment", "qs", "--replicates", "0"],
    ["frobnicate"],
])
def test_usage_errors_exit_1(argv):
    assert parse_and_run(argv) == EXIT_CONFIG


def test_missing_config_file_exits_2(tmp_path):
    assert parse_and_run(["evolve", "--treatment", "qs", "--config", str(tmp_path / "nope.cfg")]) == EXIT_IO


def test_unwritable_output_exits_2(tmp_path, small_cfg):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = parse_and_run(["evolve", "--treatment", "qs", "--config", str(small_cfg), "--replicates", "1",
                          "--jobs", "1", "--out", str(blocker / "sub"), "-q"])
    assert code == EXIT_IO


def test_evolve_compete_and_analyze(tmp_path, small_cfg, capsys):
    common = ["--config", str(small_cfg), "--replicates", "2", "--jobs", "1", "--no-svg", "-q"]
    assert parse_and_run(["evolve", "--treatment", "qs", "--out", str(tmp_path / "qs"), *common]) == EXIT_OK
    assert parse_and_run(["evolve", "--treatment", "nonqs", "--out", str(tmp_path / "nq"), *common]) == EXIT_OK
    for rep in ("rep00", "rep01"):
        for name in ("samples.csv", "explosions.jsonl", "run_meta.json"):
            assert (tmp_path / "qs" / rep / name).exists()
    meta = json.loads((tmp_path / "qs" / "rep01" / "run_meta.json").read_text())
    assert meta["seed"] == 43
    assert config_from_dict(meta["config"]) == load_config(small_cfg).replace(
        replicates=2, palette=tuple(meta["config"]["palette"]),
        initial_placements=config_from_dict(meta["config"]).initial_placements)

    assert parse_and_run(["compete", "--qs-fraction", "0.05", "--out", str(tmp_path / "c"), *common]) == EXIT_OK
    counts = json.loads((tmp_path / "c" / "outcomes.json").read_text())
    assert sum(counts.values()) == 2

    out = tmp_path / "report"
    assert parse_and_run(["analyze", "--a", str(tmp_path / "qs"), "--b", str(tmp_path / "nq"),
                          "--metric", "population_size", "--resamples", "1000", "--out", str(out), "-q"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["n_a"] == report["n_b"] == 2
    header, row = (out / "report.csv").read_text().splitlines()
    assert header.split(",")[0] == "metric" and row.startswith("population_size")
    with pytest.raises(ConfigError):
        analyze_sets(tmp_path / "qs", tmp_path / "nq", "no_such_metric")


@pytest.mark.parametrize("kind", ["default", "qs_altruist", "nonqs_altruist"])
def test_ancestor_check(kind, capsys):
    assert parse_and_run(["ancestor-check", "--kind", kind]) == EXIT_OK
    out = capsys.readouterr().out
    assert "self-replicates: yes" in out and "check: pass" in out
    if kind == "qs_altruist":
        assert "first quorum-sense CX: 92" in out


def test_exit_code_constants():
    assert (EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECK) == (0, 1, 2, 3)
