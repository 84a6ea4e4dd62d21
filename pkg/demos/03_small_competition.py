"""A scaled-down competition between the two altruists.

Protected mode keeps each lineage's strategy instructions intact, so the
assay asks which hard-wired strategy wins on a 20x20 grid. With a high
explosion probability the contest resolves in a few thousand updates.
"""
# %%
import numpy as np

from quorum_altruism.config import TreatmentConfig
from quorum_altruism.experiments import run_competition_assay

base = TreatmentConfig(width=20, height=20, updates=4000, sample_interval=200, explode_prob=0.2)

# %% Five replicates at an even start
for seed in range(5):
    res = run_competition_assay(0.5, seed, base)
    trail = " ".join(f"{q:.2f}" for q in res.qs_proportion[::4])
    print(f"seed {seed}: {res.outcome:15s} fixed at {res.fixation_update}  qs share {trail}")

# %% Mean trajectory
runs = [run_competition_assay(0.5, s, base) for s in range(5)]
mean_qs = np.mean([r.qs_proportion for r in runs], axis=0)
for u, q in zip(runs[0].updates[::2], mean_qs[::2]):
    print(f"update {u:5d}  " + "#" * int(round(q * 40)))
