"""Exact conditionals for the three-image, two-mask-set example."""

from msgen.dsep import appendix_instance, check_ci, condition, dsep_holds_everywhere, random_instance
import numpy as np

dj = appendix_instance()
for ev in ({"X": 4}, {"X": 4, "Y": 1}):
    print("given", ev)
    for key, p in condition(dj, ev).items():
        if p:
            print("   C=%d Z=%d  %s" % (key[0], key[1], p))
    print("   C indep Z:", check_ci(dj, "C", "Z", ev))

rng = np.random.default_rng(0)
print("random instances where C indep Z | X, Y:",
      sum(dsep_holds_everywhere(random_instance(rng)) for _ in range(50)), "/ 50")
