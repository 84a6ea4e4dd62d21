"""Full-scale runs behind acceptance criteria 5 to 10.

Runs both evolution treatments and the three competition assays (30
replicates each, 30,000 updates) at one mutation rate, then condenses every
replicate into ``results/summary_mu<rate>.json``. Raw output is large (tens
of MB of explosion log per evolution replicate), so it goes to
``--raw-dir``, outside the package. Interrupted runs resume: finished
replicates are kept.

    python demos/reproduce_results.py --mutation-rate 0.02 --raw-dir /data/qa
    python demos/reproduce_results.py --mutation-rate 0.02 --raw-dir /data/qa --summary-only
"""
import argparse
import json
from pathlib import Path

from quorum_altruism.config import TreatmentConfig
from quorum_altruism.experiments import (
    COMPETITION_FRACTIONS, competition_config, outcome_counts, run_replicates, treatment_config,
)
from quorum_altruism.metrics import summarize_results

HERE = Path(__file__).resolve().parents[1]

ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
ap.add_argument("--mutation-rate", type=float, default=0.02)
ap.add_argument("--raw-dir", required=True)
ap.add_argument("--seed", type=int, default=42)
ap.add_argument("--replicates", type=int, default=30)
ap.add_argument("--jobs", type=int, default=None)
ap.add_argument("--summary-only", action="store_true")
args = ap.parse_args()

tag = f"{args.mutation_rate:g}" if args.mutation_rate != 1 else "1.0"
raw = Path(args.raw_dir) / f"mu{tag}"
base = TreatmentConfig(mutation_rate=args.mutation_rate, replicates=args.replicates)

if not args.summary_only:
    def progress(s):
        print(f"  seed {s['seed']}: {s['outcome'] or 'done'} at update {s['final_update']}", flush=True)

    for kind in ("qs", "nonqs"):
        print(f"evolve_{kind}", flush=True)
        run_replicates(treatment_config(kind, base), args.seed, args.replicates, raw / f"evolve_{kind}",
                       jobs=args.jobs, svg=True, skip_existing=True, progress=progress)
    for frac in COMPETITION_FRACTIONS:
        name = f"compete_{frac:g}"
        print(name, flush=True)
        sums = run_replicates(competition_config(frac, base), args.seed, args.replicates, raw / name,
                              jobs=args.jobs, svg=True, skip_existing=True, progress=progress)
        (raw / name / "outcomes.json").write_text(json.dumps(outcome_counts(sums), indent=2) + "\n")

summary = summarize_results(raw)
summary["mutation_rate"] = args.mutation_rate
summary["seed_base"] = args.seed
summary.pop("root")
out = HERE / "results" / f"summary_mu{tag}.json"
out.parent.mkdir(exist_ok=True)
out.write_text(json.dumps(summary, indent=1) + "\n")
print(f"wrote {out}")
