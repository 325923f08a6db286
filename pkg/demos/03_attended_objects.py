"""
Which objects did the driver look at?
=====================================

Road-user instances touched by the salient region are kept whole and
labelled with their class; everything else is cleared.
"""

import numpy as np

from gaze360.attended import ClassTable, InstanceMask, attended_instance_ids, extract_attended
from gaze360.attention import ThresholdPolicy, WindowConfig, build_attention_map

classes = ClassTable()
h, w = 64, 320

# Three objects: a car the driver mostly looks at, a pedestrian given one
# brief glance and a building right next to the car
ids = np.zeros((h, w), dtype=np.uint16)
ids[20:40, 40:90] = 1
ids[10:50, 250:270] = 2
ids[0:15, 50:80] = 3
inst = InstanceMask(ids, {1: classes.id_of("vehicle"), 2: classes.id_of("pedestrian"),
                          3: classes.id_of("building")})

sal = build_attention_map([(60, 22), (64, 18), (62, 20), (260, 30)], WindowConfig(sigma=6.0), w, h)
for tau in (0.9, 0.5, 0.2):
    print(f"tau={tau}: attended instances {sorted(attended_instance_ids(sal, inst, ThresholdPolicy(tau)))}")

# The mask carries class ids; the building never appears, however salient
mask = extract_attended(sal, inst)
print("classes in the attended mask:", sorted(set(np.unique(mask.class_id).tolist()) - {0}))
print("car pixels kept:", int((mask.class_id == classes.id_of("vehicle")).sum()), "of", int((ids == 1).sum()))
