"""
Pushing a point cloud towards a target H
========================================

The Hopkins loss |H - H_T| is differentiable once the sampled rows, the
reference points and the nearest-neighbour pairs are frozen for a step.
Here the points themselves are the parameters.
"""
from hopkinsloss import HopkinsConfig
from hopkinsloss.autodiff import Tape, backward, make_rng
from hopkinsloss.hopkins import hopkins_loss, hopkins_statistic
from hopkinsloss.train import AdamState, adam_step

rng = make_rng(0)
x = rng.random((500, 2))

for target in (0.95, 0.2):
    pts = [x.copy()]
    state = AdamState.zeros(pts)
    cfg = HopkinsConfig(target=target, k=0.1)
    for step in range(301):
        tape = Tape()
        leaf = tape.leaf(pts[0])
        loss, wit = hopkins_loss(tape, leaf, cfg, rng)
        grad = backward(tape, loss)[leaf]
        pts, state = adam_step(pts, [grad], state, 2e-3)
        if step % 100 == 0:
            h = hopkins_statistic(pts[0], HopkinsConfig(), make_rng(99)).H
            print(f"target {target}: step {step:3d}  H = {h:.3f}")
    print()
