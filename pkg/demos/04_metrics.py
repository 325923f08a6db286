"""
Scoring a prediction
====================

Distribution metrics compare two attention maps; overlap metrics compare
two label masks; the training objective combines both.
"""

import numpy as np

from gaze360 import metrics as M
from gaze360.attention import WindowConfig, build_attention_map

w, h = 160, 48
cfg = WindowConfig(sigma=4.0)
gt = build_attention_map([(40, 20), (42, 24)], cfg, w, h)
near = build_attention_map([(44, 22)], cfg, w, h)
far = build_attention_map([(120, 20)], cfg, w, h)

fix = M.fixation_point_map([(40, 20), (42, 24)], w, h)
print(f"{'':6s} {'KLD':>8s} {'CC':>7s} {'SIM':>6s} {'NSS':>7s}")
for name, pred in (("near", near), ("far", far)):
    print(f"{name:6s} {M.kld(gt, pred):8.3f} {M.cc(gt, pred):7.3f} {M.sim(gt, pred):6.3f} {M.nss(pred, fix):7.2f}")

# KLD is not symmetric
print("KLD(gt, near) vs KLD(near, gt):", round(M.kld(gt, near), 4), round(M.kld(near, gt), 4))

# Segmentation: a half-overlapping vehicle mask
x = np.zeros((8, 8), int)
x[2:6, 2:6] = 1
y = np.roll(x, 2, axis=1)
print("dice", M.dice(x, y), "iou", round(M.iou(x, y), 4))

# Joint objective for a perfect prediction: about -1 (saliency) + -2 (segmentation);
# the small excess comes from the epsilon inside the KLD logarithm
prob = np.eye(2)[x]
print("L_total(perfect) =", round(M.loss_total(gt, x, gt, prob), 5))
