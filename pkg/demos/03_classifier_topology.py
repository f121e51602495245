"""
Shaping a classifier's hidden features
======================================

The second hidden layer of a small MLP is tapped and the loss becomes
0.75 * cross-entropy + 0.25 * |H - H_T|. Baseline and Hopkins runs share
the seed, so they start from the same weights and see the same batches.
"""
from dataclasses import replace

from hopkinsloss import HopkinsConfig, SynthSpec, TrainConfig, generate, run_classifier
from hopkinsloss.io import make_dataset

x, y = generate(SynthSpec("clusters", 3000, 16, seed=0, num_clusters=3, spread=0.05,
                          labelled=True))
data = make_dataset(x, y)
base = TrainConfig(max_epochs=60, seed=0)

_, rec = run_classifier(data, base)
print(f"baseline     acc {rec.accuracy:.3f}  H {rec.hopkins:.3f}")
for target in (0.01, 0.5, 0.99):
    cfg = replace(base, weight=0.75, hopkins=HopkinsConfig(target=target))
    _, rec = run_classifier(data, cfg)
    print(f"H_T = {target:<5}  acc {rec.accuracy:.3f}  H {rec.hopkins:.3f}")
