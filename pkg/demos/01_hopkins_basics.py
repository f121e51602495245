"""
Clustering tendency of three point patterns
===========================================

H compares nearest-neighbour distances of uniform reference points with those
of real points. Regular lattices score low, random scatter about 0.5, blobs high.
"""
import numpy as np

from hopkinsloss import HopkinsConfig, SynthSpec, generate, hopkins_statistic
from hopkinsloss.autodiff import make_rng

# one dataset of each kind in the unit square
for kind in ("grid", "uniform", "clusters"):
    x, _ = generate(SynthSpec(kind, 2000, 2, seed=0))
    hs = [hopkins_statistic(x, HopkinsConfig(), make_rng(s)).H for s in range(10)]
    print(f"{kind:<9} H = {np.mean(hs):.3f} (min {min(hs):.3f}, max {max(hs):.3f})")

# the witness keeps everything that was drawn
x, _ = generate(SynthSpec("clusters", 400, 2, seed=1))
wit = hopkins_statistic(x, HopkinsConfig(), make_rng(0))
print("\nsampled rows:", wit.sampled_indices[:5], "...")
print("sum u = %.4f, sum w = %.4f, H = %.4f" % (wit.u.sum(), wit.w.sum(), wit.H))

# the metric changes the numbers but not the ordering
print()
for metric in ("chebyshev", "euclidean", "manhattan", "cosine"):
    row = []
    for kind in ("grid", "uniform", "clusters"):
        x, _ = generate(SynthSpec(kind, 1000, 8, seed=2))
        row.append(hopkins_statistic(x, HopkinsConfig(metric=metric), make_rng(3)).H)
    print(f"{metric:<10}" + "  ".join(f"{h:.3f}" for h in row))
