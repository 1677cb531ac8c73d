"""Three-step pendulum model: does the 1-d detail code pick up the mass?"""

import numpy as np

from msgen.pendulum import (PendulumConfig, dominant_period, posterior_z, pearson, sample_pendulum_dataset,
                            train_hierarchy, traverse, z_mass_correlation)

data = sample_pendulum_dataset(2000, seed=0)
train, test = data.split()
h = train_hierarchy(PendulumConfig(epochs1=40, epochs2=40, epochs3=60), train)

r, _ = z_mass_correlation(h, test)
null, _ = pearson(posterior_z(h, test), np.random.default_rng(0).permutation(test.M))
print(f"corr(z, M) = {r:.3f}   shuffled = {null:.3f}")

for L, row in zip((1.0, 2.0, 3.0), traverse(h, "L", [1.0, 2.0, 3.0])["y0"]):
    print(f"L={L}: period of generated y0 ~ {dominant_period(row, 0.1):.2f} s")
