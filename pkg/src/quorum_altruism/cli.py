"""Run and analyse suicidal-altruism evolution experiments from the command line.

Subcommands::

    evolve --treatment {qs,nonqs}
    compete --qs-fraction {0.5,0.05,0.95} [--seeding block|mixed]
    analyze --a DIR --b DIR --metric NAME
    ancestor-check --kind {default,qs_altruist,nonqs_altruist}
    repro

Exit codes: 0 success, 1 configuration or usage error, 2 I/O error,
3 failed ancestor check.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ancestors import ANCESTOR_KINDS, QS_THRESHOLD, make_ancestor
from .config import ConfigError, TreatmentConfig, load_config
from .experiments import (
    COMPETITION_FRACTIONS, competition_config, default_jobs, outcome_counts, run_replicates, treatment_config,
)
from .genome import decode
from .metrics import EVENT_METRICS, SAMPLE_COLUMNS, set_metric
from .stats import mann_whitney_u, median_and_bootstrap_ci
from .vcpu import trace_isolated

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CHECK = 0, 1, 2, 3


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config_path: str | None
    seed_base: int
    replicates: int
    jobs: int
    out_dir: str | None

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("--replicates must be >= 1")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _fraction(text: str) -> float:
    value = float(text)
    if not any(abs(value - f) < 1e-12 for f in COMPETITION_FRACTIONS):
        raise argparse.ArgumentTypeError(f"must be one of {', '.join(map(str, COMPETITION_FRACTIONS))}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value file overriding the defaults")
    common.add_argument("--seed", type=int, default=42, help="seed base; replicate i uses seed + i")
    common.add_argument("--replicates", type=int, default=None, help="replicates per set (default 30)")
    common.add_argument("--jobs", type=int, default=None, help="parallel worlds (default: all cores)")
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--no-svg", action="store_true", help="skip summary.svg plots")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = _Parser(prog="quorum-altruism", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("evolve", parents=[common], help="single-lineage evolution treatment")
    p.add_argument("--treatment", choices=("qs", "nonqs"), required=True)

    p = sub.add_parser("compete", parents=[common], help="competition assay between the two altruists")
    p.add_argument("--qs-fraction", type=_fraction, required=True)
    p.add_argument("--seeding", choices=("block", "mixed"), default="block")

    p = sub.add_parser("analyze", parents=[common], help="compare a metric between two result sets")
    p.add_argument("--a", required=True, help="first result set directory")
    p.add_argument("--b", required=True, help="second result set directory")
    p.add_argument("--metric", required=True,
                   help="samples.csv column, COLUMN:final_quarter, or one of " + ", ".join(EVENT_METRICS))
    p.add_argument("--statistic", choices=("median_diff", "mean_diff"), default="median_diff")
    p.add_argument("--resamples", type=int, default=10_000)

    p = sub.add_parser("ancestor-check", parents=[common], help="trace an ancestor in isolation")
    p.add_argument("--kind", choices=ANCESTOR_KINDS, required=True)

    p = sub.add_parser("repro", parents=[common], help="both treatments and all three assays")
    p.add_argument("--seeding", choices=("block", "mixed"), default="block")
    return parser


def _base_config(args) -> TreatmentConfig:
    base = load_config(args.config) if args.config else TreatmentConfig()
    if args.replicates is not None:
        base = base.replace(replicates=args.replicates)
    return base


def _manifest(args, base: TreatmentConfig) -> RunManifest:
    return RunManifest(args.command, args.config, args.seed, base.replicates,
                       args.jobs if args.jobs is not None else default_jobs(), args.out)


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, flush=True)


def _progress(args, label: str):
    def report(summary):
        _log(args, f"{label} seed {summary['seed']}: {summary['outcome'] or 'done'} "
                   f"at update {summary['final_update']} (population {summary['final_population']})")
    return report


def _run_set(args, config: TreatmentConfig, m: RunManifest, out: Path, label: str) -> list[dict]:
    return run_replicates(config, m.seed_base, m.replicates, out, jobs=m.jobs, svg=not args.no_svg,
                          progress=_progress(args, label))


def cmd_evolve(args) -> int:
    base = _base_config(args)
    m = _manifest(args, base)
    out = Path(args.out or f"evolve_{args.treatment}")
    _run_set(args, treatment_config(args.treatment, base), m, out, args.treatment)
    _log(args, f"wrote {m.replicates} replicates to {out}")
    return EXIT_OK


def cmd_compete(args) -> int:
    base = _base_config(args)
    m = _manifest(args, base)
    out = Path(args.out or f"compete_{args.qs_fraction:g}")
    summaries = _run_set(args, competition_config(args.qs_fraction, base, args.seeding), m, out,
                         f"compete {args.qs_fraction:g}")
    counts = outcome_counts(summaries)
    (out / "outcomes.json").write_text(json.dumps(counts, indent=2) + "\n", encoding="utf-8")
    _log(args, " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def analyze_sets(a_dir, b_dir, metric: str, statistic: str = "median_diff", resamples: int = 10_000,
                 seed: int = 42) -> dict:
    if metric.partition(":")[0] not in SAMPLE_COLUMNS and metric not in EVENT_METRICS:
        raise ConfigError(f"unknown metric {metric!r}")
    a = set_metric(a_dir, metric)
    b = set_metric(b_dir, metric)
    if not a or not b:
        raise ConfigError(f"metric {metric!r} is undefined for every replicate of one set")
    test = mann_whitney_u(a, b)
    boot = median_and_bootstrap_ci(a, b, statistic, resamples, seed)
    return {
        "metric": metric,
        "a": str(a_dir), "b": str(b_dir),
        "n_a": len(a), "n_b": len(b),
        "median_a": float(np.median(a)), "median_b": float(np.median(b)),
        "mean_a": float(np.mean(a)), "mean_b": float(np.mean(b)),
        "u_statistic": test.u_statistic, "z_score": test.z_score, "p_two_sided": test.p_two_sided,
        "p_exact_two_sided": test.p_exact_two_sided,
        "statistic": statistic, "estimate": boot.estimate, "ci_low": boot.ci_low, "ci_high": boot.ci_high,
        "resamples": resamples, "bootstrap_seed": seed,
        "values_a": a, "values_b": b,
    }


def cmd_analyze(args) -> int:
    report = analyze_sets(args.a, args.b, args.metric, args.statistic, args.resamples, args.seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    keys = [k for k in report if not k.startswith("values_")]
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        w.writerow(["" if report[k] is None else report[k] for k in keys])
    _log(args, f"{args.metric}: median {report['median_a']:.6g} vs {report['median_b']:.6g}, "
               f"U={report['u_statistic']:g}, p={report['p_two_sided']:.3g}, "
               f"{args.statistic} {report['estimate']:.6g} CI [{report['ci_low']}, {report['ci_high']}]")
    return EXIT_OK


def cmd_ancestor_check(args) -> int:
    genome = make_ancestor(args.kind)
    trace = trace_isolated(genome, explode_prob=0.0, seed=args.seed)
    ok = trace.gestation is not None and trace.child is not None and np.array_equal(trace.child, genome)
    print(f"kind: {args.kind}")
    print(f"genome: {' '.join(decode(genome))}")
    print(f"gestation: {trace.gestation}")
    print(f"self-replicates: {'yes' if ok else 'no'}")
    if args.kind != "default":
        armed = trace_isolated(genome, explode_prob=1.0, seed=args.seed)
        can_explode = armed.first_explosion is not None
        print(f"first explosion (p=1, empty neighbourhood): cycle {armed.first_explosion}")
        ok = ok and can_explode
        if args.kind == "qs_altruist":
            print(f"first quorum-sense CX: {trace.first_quorum_cx}")
            ok = ok and trace.first_quorum_cx == QS_THRESHOLD
    print("check: " + ("pass" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_repro(args) -> int:
    base = _base_config(args)
    m = _manifest(args, base)
    out = Path(args.out or "repro")
    out.mkdir(parents=True, exist_ok=True)
    summary = {"seed_base": m.seed_base, "replicates": m.replicates, "sets": {}}
    for kind in ("qs", "nonqs"):
        name = f"evolve_{kind}"
        _run_set(args, treatment_config(kind, base), m, out / name, name)
        summary["sets"][name] = str(out / name)
    for frac in COMPETITION_FRACTIONS:
        name = f"compete_{frac:g}"
        summaries = _run_set(args, competition_config(frac, base, args.seeding), m, out / name, name)
        counts = outcome_counts(summaries)
        (out / name / "outcomes.json").write_text(json.dumps(counts, indent=2) + "\n", encoding="utf-8")
        summary["sets"][name] = counts
    (out / "repro.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _log(args, f"repro finished in {out}")
    return EXIT_OK


COMMANDS = {
    "evolve": cmd_evolve,
    "compete": cmd_compete,
    "analyze": cmd_analyze,
    "ancestor-check": cmd_ancestor_check,
    "repro": cmd_repro,
}


def parse_and_run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
