"""
Mapping a gaze sample onto a screen
===================================

A camera sees five screens, each carrying four fiducial tags. We locate the
screen under the gaze, fit a homography from the tag corners and land the
gaze point in the stitched scene frame.
"""

import numpy as np

from gaze360.geometry import calibrate_fixation, homography_from_correspondences, screen_strips
from gaze360.synth import make_scenario

# A synthetic session gives us a layout, tag detections and gaze samples
scn = make_scenario(seed=7)
layout = scn.layout
for s in layout.screens:
    print(f"screen {s.screen_id}: {s.role:13s} tags {s.tag_ids}")

# The tag corners in frame 0 split the camera image into vertical strips
strips = screen_strips(scn.detections[0], layout)
for sid, (left, right) in sorted(strips.items(), key=lambda kv: kv[1]):
    print(f"strip of screen {sid}: x in [{left:7.1f}, {right:7.1f}]")

# Four exact correspondences pin a homography down to numerical precision
src = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
dst = np.array([[10, 20], [200, 25], [210, 180], [5, 170]], float)
h = homography_from_correspondences(src, dst)
print("max corner error (px):", np.abs(h.apply(src) - dst).max())

# Calibrate the first few confident samples and compare with the script
for t in range(5):
    g = scn.gaze[t]
    if g.confidence < 0.6:
        print(f"frame {t}: low confidence, skipped")
        continue
    (x, y), sid = calibrate_fixation(g, scn.detections[t], layout)
    tx, ty = scn.targets[t]["point"]
    print(f"frame {t}: screen {sid}, scene ({x:6.2f}, {y:5.2f}), scripted ({tx:6.2f}, {ty:5.2f})")
