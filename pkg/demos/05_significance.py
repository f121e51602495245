"""
Comparing run sets
==================

Accuracy distributions are compared with a two-sided Mann-Whitney U test;
H values are summarised as mean +- Student-t 95% interval.
"""
import numpy as np

from hopkinsloss.autodiff import make_rng
from hopkinsloss.cli import report
from hopkinsloss.stats import mann_whitney_u, mean_ci95
from hopkinsloss.train import RunRecord

c = mann_whitney_u([1, 2], [3, 4])
print(f"{{1,2}} vs {{3,4}}: U = {c.U:g}, p = {c.p_two_sided:.4f} ({'exact' if c.exact else 'normal'})")

rng = make_rng(0)
base = rng.normal(0.85, 0.02, 25)
shifted = rng.normal(0.83, 0.02, 25)
c = mann_whitney_u(shifted, base)
print(f"25 vs 25 runs: U = {c.U:g}, p = {c.p_two_sided:.4g} {c.stars}")

m, h = mean_ci95(rng.normal(0.6, 0.05, 25))
print(f"mean H = {m:.3f} +- {h:.3f}")


# the same machinery behind the `report` subcommand
def rec(target, seed, acc, hval):
    return RunRecord("classify", seed, 0.75 if target is not None else 1.0, target, None,
                     float(acc), float(hval), 10, 10, 0.1, "demo")


records = [rec(None, s, a, 0.8 + 0.01 * rng.normal()) for s, a in enumerate(base)]
records += [rec(0.5, s, a, 0.65 + 0.01 * rng.normal()) for s, a in enumerate(shifted)]
summary, _ = report(records)
for row in summary:
    print({k: row[k] for k in ("condition", "acc_mean", "H_mean", "H_ci95", "p", "stars")
           if k in row})
