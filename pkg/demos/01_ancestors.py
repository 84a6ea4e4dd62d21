"""Meet the three hand-written ancestors.

Each one is traced alone on an otherwise empty grid until it divides. The
two altruists differ only in their strategy block: the quorum-sensing one
builds a threshold of 92 in CX, senses, and gates its explosion on the
result; the other explodes unconditionally.
"""
# %%
import numpy as np

from quorum_altruism.ancestors import ANCESTOR_KINDS, make_ancestor
from quorum_altruism.genome import decode, hamming_distance
from quorum_altruism.vcpu import trace_isolated

# %% Genomes, eight instructions per row
for kind in ANCESTOR_KINDS:
    names = decode(make_ancestor(kind))
    print(f"\n{kind}")
    for i in range(0, len(names), 8):
        print(f"  {i:3d}  " + " ".join(f"{n:13s}" for n in names[i:i + 8]))

# %% Gestation and exact self-copy in isolation
for kind in ANCESTOR_KINDS:
    genome = make_ancestor(kind)
    tr = trace_isolated(genome)
    exact = tr.child is not None and np.array_equal(tr.child, genome)
    print(f"{kind:15s} gestation {tr.gestation}  exact copy {exact}  first quorum-sense CX {tr.first_quorum_cx}")

# %% With p = 1 the altruists blow up on their first strategy instruction
for kind in ("qs_altruist", "nonqs_altruist"):
    tr = trace_isolated(make_ancestor(kind), explode_prob=1.0)
    print(f"{kind:15s} explodes at cycle {tr.first_explosion}")

# %% The two altruists count as unrelated, so each one's explosion can hit the other
d = hamming_distance(make_ancestor("qs_altruist"), make_ancestor("nonqs_altruist"))
print(f"distance between the altruists: {d}")
