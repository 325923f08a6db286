"""Session manifests, panoramic view geometry, town splits and gaze statistics.

Manifest files are JSON lines: the first record (``"type": "session"``)
holds session metadata, every following record (``"type": "frame"``) one
frame. See README for the field list.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import BadConfig, FormatError, InsufficientHistory, OutOfBounds, UnknownTown
from .geometry import MIRROR_ROLES, ScreenLayout

log = logging.getLogger(__name__)

SCENARIO_CLASSES = ("unscripted", "goal-directed", "safety-critical")
DEFAULT_VIEW_ORDER = ("mirror-left", "front-left", "front-center", "front-right", "mirror-right")
TRAIN_TOWNS = frozenset({2, 3, 4, 7, 10, 11})
VAL_TOWNS = frozenset({1, 5, 6, 12, 15})
# validation towns that may have no recorded footage; routing them logs a warning
FLAGGED_TOWNS = frozenset({12, 15})
N_VIEWS = 5


@dataclass
class FrameEntry:
    frame_id: int
    views: List[str]
    gaze_span: Tuple[float, float]
    detections: str
    instances: Optional[str] = None

    def to_json(self) -> dict:
        d = {"type": "frame", "frame_id": self.frame_id, "views": list(self.views),
             "gaze_span": list(self.gaze_span), "detections": self.detections}
        if self.instances is not None:
            d["instances"] = self.instances
        return d


@dataclass
class SessionManifest:
    session_id: str
    driver_id: str
    town: int
    scenario_class: str
    weather: str
    frames: List[FrameEntry] = field(default_factory=list)
    fps: int = 30
    gaze_log: str = "gaze.csv"
    layout: str = "layout.cfg"

    def __post_init__(self):
        if self.scenario_class not in SCENARIO_CLASSES:
            raise BadConfig(f"unknown scenario class {self.scenario_class!r}")
        if self.fps != 30:
            raise BadConfig(f"sessions are recorded at 30 fps, got {self.fps}")
        for i, f in enumerate(self.frames):
            if len(f.views) != N_VIEWS:
                raise BadConfig(f"frame {f.frame_id}: expected {N_VIEWS} views, got {len(f.views)}")
            if i and f.frame_id != self.frames[i - 1].frame_id + 1:
                raise BadConfig(f"frame ids are not contiguous at {f.frame_id}")

    @property
    def frame_ids(self) -> List[int]:
        return [f.frame_id for f in self.frames]

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps

    def frame(self, frame_id: int) -> FrameEntry:
        if not self.frames:
            raise OutOfBounds("manifest has no frames")
        i = frame_id - self.frames[0].frame_id
        if not 0 <= i < len(self.frames):
            raise OutOfBounds(f"frame {frame_id} not in session {self.session_id}")
        return self.frames[i]

    def header_json(self) -> dict:
        return {"type": "session", "session_id": self.session_id, "driver_id": self.driver_id,
                "town": self.town, "scenario_class": self.scenario_class, "weather": self.weather,
                "fps": self.fps, "gaze_log": self.gaze_log, "layout": self.layout}


def dumps_manifest(m: SessionManifest) -> str:
    lines = [json.dumps(m.header_json(), sort_keys=True)]
    lines += [json.dumps(f.to_json(), sort_keys=True) for f in m.frames]
    return "\n".join(lines) + "\n"


def loads_manifest(text: str) -> SessionManifest:
    records = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not records or records[0].get("type") != "session":
        raise FormatError("manifest must start with a session record")
    head = dict(records[0])
    head.pop("type")
    frames = []
    for r in records[1:]:
        if r.get("type") != "frame":
            raise FormatError(f"unexpected record type {r.get('type')!r}")
        frames.append(FrameEntry(int(r["frame_id"]), list(r["views"]), tuple(r["gaze_span"]),
                                 r["detections"], r.get("instances")))
    try:
        return SessionManifest(frames=frames, **head)
    except TypeError as e:
        raise FormatError(f"bad session record: {e}") from e


def read_manifest(path) -> SessionManifest:
    with open(path) as fh:
        return loads_manifest(fh.read())


def write_manifest(path, m: SessionManifest):
    with open(path, "w") as fh:
        fh.write(dumps_manifest(m))


# ---------------------------------------------------------------------------
# panoramic concatenation


@dataclass(frozen=True)
class ViewConcatSpec:
    order: Tuple[str, ...] = DEFAULT_VIEW_ORDER
    source_size: Tuple[int, int] = (1280, 720)
    output_size: Tuple[int, int] = (1120, 224)

    def __post_init__(self):
        if sorted(self.order) != sorted(DEFAULT_VIEW_ORDER):
            raise BadConfig(f"view order must be a permutation of {DEFAULT_VIEW_ORDER}")
        if self.output_size[0] % N_VIEWS:
            raise BadConfig("output width must be divisible by the number of views")

    @property
    def tile_width(self) -> int:
        return self.output_size[0] // N_VIEWS

    def view_index(self, role: str) -> int:
        return self.order.index(role)


def concat_view_transform(spec: ViewConcatSpec, view_index: int, point) -> Tuple[float, float]:
    """Map (u, v) in source view ``view_index`` into the concatenated frame."""
    if not 0 <= view_index < N_VIEWS:
        raise OutOfBounds(f"view index {view_index} outside [0, {N_VIEWS})")
    u, v = float(point[0]), float(point[1])
    sw, sh = spec.source_size
    if not (0 <= u < sw and 0 <= v < sh):
        raise OutOfBounds(f"point ({u}, {v}) outside the {sw}x{sh} source view")
    tw = spec.tile_width
    return view_index * tw + u * tw / sw, v * spec.output_size[1] / sh


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    train_towns: frozenset = TRAIN_TOWNS
    val_towns: frozenset = VAL_TOWNS

    def __post_init__(self):
        object.__setattr__(self, "train_towns", frozenset(self.train_towns))
        object.__setattr__(self, "val_towns", frozenset(self.val_towns))
        if self.train_towns & self.val_towns:
            raise BadConfig(f"towns in both splits: {sorted(self.train_towns & self.val_towns)}")


def assign_split(manifest: SessionManifest, spec: SplitSpec = SplitSpec()) -> str:
    town = manifest.town
    if town in FLAGGED_TOWNS:
        log.warning("town %d is listed for validation but may be absent from the collected data", town)
    if town in spec.train_towns:
        return "train"
    if town in spec.val_towns:
        return "val"
    raise UnknownTown(f"town {town} belongs to neither split")


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class CalibratedFixation:
    frame: int
    timestamp: float
    x: float
    y: float
    screen_id: Optional[int]


@dataclass
class GazeStats:
    """Counts that merge by addition; fractions are derived on demand."""

    screen_counts: Counter = field(default_factory=Counter)
    role_counts: Counter = field(default_factory=Counter)
    unassigned: int = 0
    driver_frames: Counter = field(default_factory=Counter)
    town_frames: Counter = field(default_factory=Counter)
    fps: int = 30

    def merge(self, other: "GazeStats") -> "GazeStats":
        return GazeStats(self.screen_counts + other.screen_counts, self.role_counts + other.role_counts,
                         self.unassigned + other.unassigned, self.driver_frames + other.driver_frames,
                         self.town_frames + other.town_frames, self.fps)

    @property
    def assigned(self) -> int:
        return sum(self.screen_counts.values())

    def screen_fractions(self) -> Dict[int, float]:
        n = self.assigned
        return {k: (v / n if n else 0.0) for k, v in sorted(self.screen_counts.items())}

    def role_fractions(self) -> Dict[str, float]:
        n = self.assigned
        return {k: (v / n if n else 0.0) for k, v in sorted(self.role_counts.items())}

    @property
    def rear_fraction(self) -> float:
        n = self.assigned
        rear = sum(self.role_counts[r] for r in MIRROR_ROLES)
        return rear / n if n else 0.0

    def to_json(self) -> dict:
        return {
            "assigned_fixations": self.assigned,
            "unassigned_fixations": self.unassigned,
            "screen_fractions": {str(k): v for k, v in self.screen_fractions().items()},
            "role_fractions": self.role_fractions(),
            "rear_fraction": self.rear_fraction,
            "driver_frames": dict(sorted(self.driver_frames.items())),
            "town_durations_s": {str(k): v / self.fps for k, v in sorted(self.town_frames.items())},
        }


def session_statistics(manifest: SessionManifest, fixations: Iterable[CalibratedFixation],
                       layout: ScreenLayout) -> GazeStats:
    st = GazeStats(fps=manifest.fps)
    for f in fixations:
        if f.screen_id is None:
            st.unassigned += 1
            continue
        st.screen_counts[f.screen_id] += 1
        st.role_counts[layout.role_of(f.screen_id)] += 1
    st.driver_frames[manifest.driver_id] += len(manifest.frames)
    st.town_frames[manifest.town] += len(manifest.frames)
    return st


def gaze_statistics(sessions: Sequence[Tuple[SessionManifest, Sequence[CalibratedFixation]]],
                    layout: ScreenLayout) -> GazeStats:
    total = GazeStats()
    for manifest, fixations in sessions:
        total = total.merge(session_statistics(manifest, fixations, layout))
    return total


# ---------------------------------------------------------------------------
# clip sampling


def window_sampler(manifest: SessionManifest, t: int, length: int = 16) -> List[int]:
    """The ``length`` consecutive frame ids ending at ``t``."""
    first = manifest.frames[0].frame_id if manifest.frames else 0
    if t - (length - 1) < first:
        raise InsufficientHistory(f"frame {t} has fewer than {length - 1} frames of history")
    manifest.frame(t)
    return list(range(t - length + 1, t + 1))
