"""
Panoramas, splits and statistics
================================

Camera views are stitched side by side; sessions are routed to train or
validation by town; gaze statistics count where drivers looked.
"""

from gaze360.dataset import (
    FrameEntry,
    SessionManifest,
    ViewConcatSpec,
    assign_split,
    concat_view_transform,
    window_sampler,
)

spec = ViewConcatSpec()
print("view order:", spec.order)
print("centre of the front-center view lands at", concat_view_transform(spec, 2, (640, 360)))

frames = [FrameEntry(i, [f"v{j}.png" for j in range(5)], (i / 30, (i + 1) / 30), "detections.csv")
          for i in range(300)]
for town in (3, 5, 12):
    m = SessionManifest(f"s{town}", "C001", town, "goal-directed", "ClearNoon", frames)
    print(f"town {town:2d} -> {assign_split(m)}")

# Clips for a temporal model: 16 consecutive frames ending at t
print("clip ending at frame 100:", window_sampler(m, 100)[:3], "...", window_sampler(m, 100)[-1])
print("session duration:", m.duration, "s")
