"""What a single explosion does to a 5x5 neighbourhood.

A focal organism sits in the middle of a small torus. Neighbours within
three substitutions of it are kin and survive; everything else in the 5x5
block dies with the focal organism.
"""
# %%
import numpy as np

from quorum_altruism.ancestors import make_ancestor
from quorum_altruism.vcpu import quorum_flag
from quorum_altruism.world import World, apply_explosion, neighborhood_summary

rng = np.random.default_rng(1)
w = World(9, 9)
focal = make_ancestor("qs_altruist")
centre = w.cell(4, 4)

# %% Fill the 5x5 block with a mix of kin (2 differences) and strangers (6)
for n in w.neighbors5x5(centre):
    if rng.random() < 0.2:
        continue
    g = focal.copy()
    k = 2 if rng.random() < 0.5 else 6
    loci = rng.choice(g.size, k, replace=False)
    g[loci] = (g[loci] + 1) % 30
    w.place(n, g, lineage=0 if k == 2 else 1)
w.place(centre, focal)


def show(world):
    for y in range(world.height):
        row = ""
        for x in range(world.width):
            c = world.cell(x, y)
            row += "." if not world.is_occupied(c) else "K" if world.cells[c, 1] == 0 else "s"
        print("   " + row)


show(w)
s = neighborhood_summary(w, centre)
print(f"related {s.related_count}, unrelated {s.unrelated_count}, empty {s.empty_count}")

# %% The quorum flag the ancestor's threshold would produce here
print(f"threshold 92 -> flag {quorum_flag(s.related_count, 92)}  (fires while kin < 92% of 24 cells)")

# %% Detonate
ev = apply_explosion(w, centre, "smart-explode")
print(f"kills {ev.kills}")
show(w)
