"""Why the ancestor's 92% threshold is fragile under mutation.

The quorum-sensing ancestor computes its threshold with ten arithmetic
instructions before sensing. Here every single substitution inside that
prologue is applied in turn, and the mutant is traced in isolation to see
which threshold it hands to quorum-sense. Lower thresholds mean fewer
explosions, which is the selfish direction within a lineage.
"""
# %%
from collections import Counter

import numpy as np

from quorum_altruism.ancestors import make_ancestor
from quorum_altruism.config import QS_PALETTE
from quorum_altruism.genome import OPCODE_INDEX, decode
from quorum_altruism.vcpu import trace_isolated

anc = make_ancestor("qs_altruist")
sense = decode(anc).index("quorum-sense")
palette = [OPCODE_INDEX[o] for o in QS_PALETTE]

# %% Threshold handed to quorum-sense by every one-step mutant of the prologue
thresholds = []
viable = 0
for locus in range(sense):
    for op in palette:
        if op == anc[locus]:
            continue
        g = anc.copy()
        g[locus] = op
        tr = trace_isolated(g)
        if tr.gestation is None or tr.first_quorum_cx is None:
            continue
        viable += 1
        thresholds.append(int(np.clip(tr.first_quorum_cx, 0, 100)))

t = np.array(thresholds)
print(f"{viable} viable one-step mutants of the {sense}-locus prologue")
print(f"threshold unchanged (92): {np.mean(t == 92):.2f}")
print(f"lower than 92:            {np.mean(t < 92):.2f}")
print(f"higher than 92:           {np.mean(t > 92):.2f}")

# %% Distribution, binned by how many kin must be present to hold fire
kin_needed = Counter(int(np.ceil(x * 24 / 100)) for x in t)
for k in sorted(kin_needed):
    print(f"explodes while kin < {k:2d} of 24: " + "#" * (kin_needed[k] // 2))
