"""Attended-object masks: road-user instances touched by the salient region."""

import struct
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Set

import numpy as np

from .attention import AttentionMap, ThresholdPolicy, binarize
from .errors import BadConfig, FormatError, ShapeMismatch

ROAD_USERS = frozenset({"vehicle", "pedestrian", "cyclist", "traffic sign", "traffic light"})

DEFAULT_CLASSES = {
    1: "vehicle",
    2: "pedestrian",
    3: "cyclist",
    4: "traffic sign",
    5: "traffic light",
    6: "building",
    7: "road",
    8: "sidewalk",
    9: "vegetation",
    10: "pole",
}

AGM_MAGIC = b"AGM1"
KIND_SEMANTIC = 0
KIND_INSTANCE = 1


@dataclass(frozen=True)
class ClassTable:
    """class_id -> name; road-user membership is decided by name."""

    names: Mapping[int, str] = field(default_factory=lambda: dict(DEFAULT_CLASSES))

    def __post_init__(self):
        names = {int(k): str(v) for k, v in self.names.items()}
        if 0 in names:
            raise BadConfig("class id 0 is reserved for background")
        if len(set(names.values())) != len(names):
            raise BadConfig("class names must be unique")
        missing = ROAD_USERS - set(names.values())
        if missing:
            raise BadConfig(f"class table lacks road-user classes {sorted(missing)}")
        object.__setattr__(self, "names", names)

    @property
    def road_user_ids(self) -> Set[int]:
        return {cid for cid, name in self.names.items() if name in ROAD_USERS}

    def is_road_user(self, class_id: int) -> bool:
        return self.names.get(class_id) in ROAD_USERS

    def id_of(self, name: str) -> int:
        for cid, n in self.names.items():
            if n == name:
                return cid
        raise KeyError(name)


@dataclass
class InstanceMask:
    instance_id: np.ndarray
    class_of: Dict[int, int]

    def __post_init__(self):
        self.instance_id = np.asarray(self.instance_id)
        if self.instance_id.ndim != 2:
            raise ValueError("instance mask must be 2-D")
        if self.instance_id.size and (self.instance_id.min() < 0 or self.instance_id.max() > 0xFFFF):
            raise ValueError("instance ids must fit in u16")
        self.instance_id = self.instance_id.astype(np.uint16)
        self.class_of = {int(k): int(v) for k, v in self.class_of.items()}
        present = set(np.unique(self.instance_id).tolist()) - {0}
        missing = present - set(self.class_of)
        if missing:
            raise ValueError(f"instances without class: {sorted(missing)}")

    @property
    def shape(self):
        return self.instance_id.shape


@dataclass
class SemanticMask:
    class_id: np.ndarray

    def __post_init__(self):
        self.class_id = np.asarray(self.class_id).astype(np.uint16)
        if self.class_id.ndim != 2:
            raise ValueError("semantic mask must be 2-D")

    @property
    def shape(self):
        return self.class_id.shape

    def __array__(self, dtype=None, copy=None):
        return self.class_id if dtype is None else self.class_id.astype(dtype)


def _class_lut(inst: InstanceMask) -> np.ndarray:
    lut = np.zeros(int(inst.instance_id.max(initial=0)) + 1, dtype=np.uint16)
    for iid, cid in inst.class_of.items():
        if 0 < iid < len(lut):
            lut[iid] = cid
    return lut


def _attended(sal: AttentionMap, inst: InstanceMask, tau: ThresholdPolicy, classes: ClassTable):
    if sal.shape != inst.shape:
        raise ShapeMismatch(f"attention map {sal.shape} vs instance mask {inst.shape}")
    salient = binarize(sal, tau)
    lut = _class_lut(inst)
    road_lut = np.isin(lut, list(classes.road_user_ids))
    road_lut[0] = False
    ids = inst.instance_id
    hit = np.unique(ids[salient & road_lut[ids]])
    return hit, lut


def attended_instance_ids(
    sal: AttentionMap,
    inst: InstanceMask,
    tau: ThresholdPolicy = ThresholdPolicy(),
    classes: Optional[ClassTable] = None,
) -> Set[int]:
    hit, _ = _attended(sal, inst, tau, classes or ClassTable())
    return set(hit.tolist())


def extract_attended(
    sal: AttentionMap,
    inst: InstanceMask,
    tau: ThresholdPolicy = ThresholdPolicy(),
    classes: Optional[ClassTable] = None,
) -> SemanticMask:
    """Every pixel of an attended road-user instance gets its class id; all else 0.

    An instance is attended when at least one of its pixels lies in the
    binarized attention region.
    """
    hit, lut = _attended(sal, inst, tau, classes or ClassTable())
    keep = np.zeros(len(lut), dtype=bool)
    keep[hit] = True
    ids = inst.instance_id
    return SemanticMask(np.where(keep[ids], lut[ids], 0))


# ---------------------------------------------------------------------------
# AGM1


def _header(kind: int, shape) -> bytes:
    h, w = shape
    return AGM_MAGIC + struct.pack("<IIB", w, h, kind)


def encode_agm(mask) -> bytes:
    if isinstance(mask, InstanceMask):
        rows = ["instance_id,class_id"] + [f"{i},{c}" for i, c in sorted(mask.class_of.items())]
        table = ("\n".join(rows) + "\n").encode("ascii")
        return _header(KIND_INSTANCE, mask.shape) + mask.instance_id.astype("<u2").tobytes() + table
    if isinstance(mask, SemanticMask):
        return _header(KIND_SEMANTIC, mask.shape) + mask.class_id.astype("<u2").tobytes()
    raise TypeError(f"cannot encode {type(mask).__name__}")


def decode_agm(data: bytes):
    if len(data) < 13 or data[:4] != AGM_MAGIC:
        raise FormatError("not an AGM1 mask")
    w, h, kind = struct.unpack("<IIB", data[4:13])
    end = 13 + 2 * w * h
    if len(data) < end:
        raise FormatError("AGM1 payload truncated")
    ids = np.frombuffer(data[13:end], dtype="<u2").reshape(h, w).astype(np.uint16)
    if kind == KIND_SEMANTIC:
        if len(data) != end:
            raise FormatError("trailing bytes after semantic AGM1 payload")
        return SemanticMask(ids)
    if kind != KIND_INSTANCE:
        raise FormatError(f"unknown AGM1 kind {kind}")
    lines = data[end:].decode("ascii").splitlines()
    if not lines or lines[0] != "instance_id,class_id":
        raise FormatError("instance AGM1 lacks its instance_id,class_id table")
    class_of = {}
    for line in lines[1:]:
        if line:
            i, c = line.split(",")
            class_of[int(i)] = int(c)
    return InstanceMask(ids, class_of)


def write_agm(path, mask):
    with open(path, "wb") as fh:
        fh.write(encode_agm(mask))


def read_agm(path):
    with open(path, "rb") as fh:
        return decode_agm(fh.read())


def save_png(path, mask) -> None:
    """Lossless 16-bit PNG export of a mask for visual inspection (needs Pillow)."""
    from PIL import Image

    arr = np.asarray(mask.class_id if isinstance(mask, SemanticMask) else mask.instance_id)
    Image.fromarray(arr.astype(np.uint16)).save(path)
