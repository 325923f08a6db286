"""
Attention maps from a fixation window
=====================================

Each frame's map is a sum of Gaussians over the fixations in a centered
window of neighbouring frames, normalized into a probability map.
"""

import numpy as np

from gaze360.attention import ThresholdPolicy, WindowConfig, binarize, build_attention_map

# Default window: 31 frames centred on t (15 either side), sigma at 1.5% of
# the map width
cfg = WindowConfig()
width, height = 1120, 224
print("window half-width:", cfg.half, "frames; sigma:", cfg.sigma_for(width), "px")

# A driver glancing between the road ahead and the left mirror
rng = np.random.default_rng(0)
ahead = rng.normal([560, 112], 4, size=(25, 2))
mirror = rng.normal([110, 90], 4, size=(6, 2))
amap = build_attention_map(np.vstack([ahead, mirror]), cfg, width, height)
print("sum:", amap.values.sum(), "valid:", amap.valid)

# Peak location and the mass near each target
r, c = np.unravel_index(amap.values.argmax(), amap.shape)
print("peak at (x, y) =", (int(c), int(r)))
print("mass left of x=160 (the mirror glance):", round(float(amap.values[:, :160].sum()), 3))

# Binarizing at half the maximum keeps only the dominant region
salient = binarize(amap, ThresholdPolicy(0.5))
print("salient pixels at tau=0.5:", int(salient.sum()))
print("salient pixels at tau=0.1:", int(binarize(amap, ThresholdPolicy(0.1)).sum()))

# No fixations in the window: the map is flagged invalid rather than faked
print("empty window valid?", build_attention_map([], cfg, width, height).valid)
