"""
The topology-constrained loss
=============================

The training loss is cross-entropy + soft Dice + a weighted penalty that is
plain cross-entropy restricted to the key voxels of the predicted
segmentation. A topologically clean prediction pays nothing; a broken one is
penalized exactly where it breaks.
"""

import numpy as np

from topoguard import (
    PhantomKind,
    PhantomSpec,
    default_whs_spec,
    generate,
    score_gradient,
    soften,
    total_loss,
    tp_loss,
)

spec = default_whs_spec()

clean = generate(PhantomSpec(PhantomKind.NESTED_SPHERES, seed=4))
punched = generate(PhantomSpec(PhantomKind.PUNCHED_SHELL, seed=4))

# soften() turns labels into a plausible likelihood map whose argmax still
# equals the labels, standing in for a network prediction.
for name, truth in (("clean", clean), ("punched", punched)):
    probs = soften(truth, temperature=0.25, seed=4, channels=8)
    breakdown, grad = total_loss(probs, truth, spec)
    print(f"{name:8s} l_ce={breakdown.l_ce:.6f} l_dice={breakdown.l_dice:.6f} "
          f"l_tp={breakdown.l_tp:.6f} key_voxels={breakdown.key_voxel_count}")

# The penalty's gradient lives only on the key voxels.
probs = soften(punched, temperature=0.25, seed=4, channels=8)
l_tp, g_tp, n = tp_loss(probs, punched, spec)
touched = np.abs(g_tp).sum(axis=0) > 0
print("\npenalty gradient support:", int(touched.sum()), "voxels,",
      "all inside N" if not (touched & ~n.data).any() else "LEAK")

# Gradients arrive in likelihood space; score_gradient() pushes them through
# the per-voxel normalization for trainers that inject at raw scores.
_, grad = total_loss(probs, punched, spec)
at_scores = score_gradient(grad, probs)
print("likelihood-space gradient norm:", float(np.abs(grad).sum()))
print("score-space gradient norm:     ", float(np.abs(at_scores).sum()))

# Quick numerical check of one score-space component via central differences.
c, z, y, x = 2, 16, 16, 16
h = 1e-4


def loss_at(scores):
    e = np.exp(scores - scores.max(axis=0, keepdims=True))
    from topoguard import ProbVolume

    p = ProbVolume(e / e.sum(axis=0, keepdims=True), probs.spacing)
    b, _ = total_loss(p, punched, spec, mask=n)
    return b.l_total


base = np.log(np.maximum(probs.data.astype(np.float64), 1e-300))
plus, minus = base.copy(), base.copy()
plus[c, z, y, x] += h
minus[c, z, y, x] -= h
fd = (loss_at(plus) - loss_at(minus)) / (2 * h)
an = score_gradient(total_loss(probs, punched, spec, mask=n)[1], probs)[c, z, y, x]
print(f"\nfinite difference at one coordinate: {fd:.8f} vs analytic {an:.8f}")
