"""Screen resolution and screen-to-scene projection of eye-tracker gaze.

The eye tracker's world camera sees the five cockpit displays, each carrying
fiducial tags at known positions. A gaze sample is assigned to a display by
the vertical strip spanned by that display's detected tags, then carried into
the scene frame by a homography fitted between the detected tag corners and
their known scene-frame locations.
"""

import configparser
import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AtInfinity,
    BadConfig,
    Degenerate,
    EmptyDetections,
    FormatError,
    LowConfidence,
    NoScreen,
    OutsideScreen,
    Underdetermined,
    UnknownTag,
)

ROLES = ("front-left", "front-center", "front-right", "mirror-left", "mirror-right")
MIRROR_ROLES = ("mirror-left", "mirror-right")
UNIT_SQUARE = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

DEFAULT_MIN_CONFIDENCE = 0.6
SCREEN_MARGIN = 0.02


@dataclass(frozen=True)
class FixationRecord:
    timestamp: float
    x: float
    y: float
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"gaze coordinates must lie in [0, 1], got ({self.x}, {self.y})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


def _is_strictly_convex(pts) -> bool:
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if cross <= 0:
            return False
    return True


@dataclass(frozen=True)
class TagDetection:
    """Detected tag corners (TL, TR, BR, BL) in eye-tracker image pixels."""

    tag_id: int
    corners: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        corners = tuple((float(x), float(y)) for x, y in self.corners)
        if len(corners) != 4:
            raise ValueError("a tag detection needs exactly 4 corners")
        if not _is_strictly_convex(corners):
            raise ValueError(f"tag {self.tag_id}: corners do not form a strictly convex quad")
        object.__setattr__(self, "corners", corners)

    @property
    def left_edge(self) -> float:
        return min(self.corners[0][0], self.corners[3][0])

    @property
    def right_edge(self) -> float:
        return max(self.corners[1][0], self.corners[2][0])


@dataclass(frozen=True)
class ScreenSpec:
    """One display.

    ``tags`` maps each expected tag id to its four corners in normalized
    screen coordinates (unit square, same corner order as detections).
    """

    screen_id: int
    role: str
    scene_quad: Tuple[Tuple[float, float], ...]
    tags: Dict[int, Tuple[Tuple[float, float], ...]]

    def __post_init__(self):
        if self.role not in ROLES:
            raise BadConfig(f"screen {self.screen_id}: unknown role {self.role!r}")
        quad = tuple((float(x), float(y)) for x, y in self.scene_quad)
        if len(quad) != 4 or not _is_strictly_convex(quad):
            raise BadConfig(f"screen {self.screen_id}: scene_quad must be a strictly convex quad")
        object.__setattr__(self, "scene_quad", quad)
        tags = {
            int(k): tuple((float(u), float(v)) for u, v in corners)
            for k, corners in self.tags.items()
        }
        object.__setattr__(self, "tags", tags)

    @property
    def tag_ids(self) -> List[int]:
        return sorted(self.tags)

    def quad_homography(self) -> "Homography":
        """Unit screen square -> scene_quad."""
        return homography_from_correspondences(UNIT_SQUARE, self.scene_quad)

    def tag_scene_corners(self, tag_id: int) -> np.ndarray:
        return self.quad_homography().apply(self.tags[tag_id])


def _quads_overlap(a, b) -> bool:
    # separating axis test for convex polygons; shared edges do not count
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for poly in (a, b):
        for i in range(len(poly)):
            edge = poly[(i + 1) % len(poly)] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            pa, pb = a @ axis, b @ axis
            tol = 1e-9 * (np.abs(pa).max() + np.abs(pb).max() + 1.0)
            if pa.max() <= pb.min() + tol or pb.max() <= pa.min() + tol:
                return False
    return True


@dataclass
class ScreenLayout:
    screens: List[ScreenSpec]
    camera_size: Tuple[int, int] = (1280, 720)
    scene_size: Tuple[int, int] = (1120, 224)
    _tag_index: Dict[int, ScreenSpec] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [s.screen_id for s in self.screens]
        if len(set(ids)) != len(ids):
            raise BadConfig("screen ids must be unique")
        self._tag_index = {}
        for s in self.screens:
            for t in s.tags:
                if t in self._tag_index:
                    raise BadConfig(f"tag {t} assigned to more than one screen")
                self._tag_index[t] = s
        for i, a in enumerate(self.screens):
            for b in self.screens[i + 1:]:
                if _quads_overlap(a.scene_quad, b.scene_quad):
                    raise BadConfig(f"scene quads of screens {a.screen_id} and {b.screen_id} overlap")

    def screen(self, screen_id: int) -> ScreenSpec:
        for s in self.screens:
            if s.screen_id == screen_id:
                return s
        raise KeyError(screen_id)

    def screen_of_tag(self, tag_id: int) -> ScreenSpec:
        try:
            return self._tag_index[tag_id]
        except KeyError:
            raise UnknownTag(f"tag {tag_id} is not part of the screen layout") from None

    def role_of(self, screen_id: int) -> str:
        return self.screen(screen_id).role


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, stored with m[2, 2] = 1 when possible."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise Degenerate("homography has non-finite entries")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        else:
            m = m / np.linalg.norm(m)
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[0] == 0 or sv[-1] / sv[0] < 1e-13:
            raise Degenerate("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def apply(self, points) -> np.ndarray:
        """Vectorized projection of an (N, 2) array; raises AtInfinity."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        hom = np.column_stack([pts, np.ones(len(pts))]) @ self.m.T
        w = hom[:, 2]
        if np.any(np.abs(w) < 1e-12):
            raise AtInfinity("point maps to the line at infinity")
        return hom[:, :2] / w[:, None]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))


def _hartley(pts: np.ndarray):
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.hypot(*(pts - centroid).T))
    if mean_dist == 0:
        raise Degenerate("all points coincide")
    s = math.sqrt(2) / mean_dist
    t = np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1]])
    return (pts - centroid) * s, t


def _has_collinear_triple(pts: np.ndarray, tol: float = 1e-9) -> bool:
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = pts[i], pts[j], pts[k]
                cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                if abs(cross) < tol:
                    return True
    return False


def homography_from_correspondences(src, dst) -> Homography:
    """Fit ``dst ~ H src`` with the normalized direct linear transform.

    Exactly determined for 4 pairs, least squares (smallest right singular
    vector of the 2N x 9 design matrix) for more.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same number of points")
    if len(src) < 4:
        raise Underdetermined(f"need at least 4 point pairs, got {len(src)}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise ValueError("points must be finite")

    src_n, t_src = _hartley(src)
    dst_n, t_dst = _hartley(dst)
    if len(src) == 4 and (_has_collinear_triple(src_n) or _has_collinear_triple(dst_n)):
        raise Degenerate("three of the four points are collinear")

    n = len(src)
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    zeros, ones = np.zeros(n), np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u])
    a[1::2] = np.column_stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v])

    _, s, vt = np.linalg.svd(a)
    if s[7] <= 1e-10 * s[0]:
        raise Degenerate("design matrix is rank deficient")
    h_n = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(t_dst) @ h_n @ t_src)


def project_fixation(h: Homography, p) -> Tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("point must be finite")
    m = h.m
    hx = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    hy = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) < 1e-12:
        raise AtInfinity(f"point ({x}, {y}) maps to the line at infinity")
    return hx / w, hy / w


def _check_detections(detections: Sequence[TagDetection], layout: ScreenLayout):
    if not detections:
        raise EmptyDetections("no tags detected")
    for d in detections:
        layout.screen_of_tag(d.tag_id)


def screen_strips(detections: Sequence[TagDetection], layout: ScreenLayout) -> Dict[int, Tuple[float, float]]:
    """Horizontal extent [left, right] spanned by each screen's detected tags."""
    _check_detections(detections, layout)
    strips: Dict[int, Tuple[float, float]] = {}
    for d in detections:
        sid = layout.screen_of_tag(d.tag_id).screen_id
        lo, hi = strips.get(sid, (math.inf, -math.inf))
        strips[sid] = (min(lo, d.left_edge), max(hi, d.right_edge))
    return strips


def screen_for_gaze(gaze, detections: Sequence[TagDetection], layout: ScreenLayout) -> Optional[int]:
    """Screen whose tag strip contains ``gaze[0]``, or None.

    On a shared edge (or overlapping strips) the leftmost strip wins.
    """
    gx = float(gaze[0])
    strips = screen_strips(detections, layout)
    hits = [(lo, sid) for sid, (lo, hi) in strips.items() if lo <= gx <= hi]
    if not hits:
        return None
    return min(hits)[1]


def screen_homography(screen_id: int, detections: Sequence[TagDetection], layout: ScreenLayout) -> Homography:
    """Eye-tracker pixels -> scene pixels for one screen, from its detected tags."""
    screen = layout.screen(screen_id)
    quad_h = screen.quad_homography()
    src, dst = [], []
    for d in sorted(detections, key=lambda d: d.tag_id):
        if layout.screen_of_tag(d.tag_id).screen_id != screen_id:
            continue
        src.extend(d.corners)
        dst.extend(quad_h.apply(screen.tags[d.tag_id]))
    return homography_from_correspondences(src, dst)


def point_in_quad(quad_h: Homography, p, margin: float = SCREEN_MARGIN) -> bool:
    u, v = project_fixation(quad_h.inverse(), p)
    return -margin <= u <= 1 + margin and -margin <= v <= 1 + margin


def gaze_pixel(f: FixationRecord, layout: ScreenLayout) -> Tuple[float, float]:
    w, h = layout.camera_size
    return f.x * w, f.y * h


def calibrate_fixation(
    f: FixationRecord,
    detections: Sequence[TagDetection],
    layout: ScreenLayout,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> Tuple[Tuple[float, float], int]:
    """Map one gaze sample to scene-frame pixels; returns ``(point, screen_id)``."""
    if f.confidence < min_confidence:
        raise LowConfidence(f"confidence {f.confidence} below threshold {min_confidence}")
    px = gaze_pixel(f, layout)
    sid = screen_for_gaze(px, detections, layout)
    if sid is None:
        raise NoScreen(f"gaze at x={px[0]:.3f} px falls in no tag strip")
    point = project_fixation(screen_homography(sid, detections, layout), px)
    if not point_in_quad(layout.screen(sid).quad_homography(), point):
        raise OutsideScreen(f"projected gaze {point} lies outside screen {sid}")
    return point, sid


# ---------------------------------------------------------------------------
# file formats


GAZE_HEADER = ["timestamp", "x", "y", "confidence"]
DETECTION_HEADER = ["frame", "tag_id", "x0", "y0", "x1", "y1", "x2", "y2", "x3", "y3"]


def _check_header(path, got, expected):
    if got != expected:
        raise FormatError(f"{path}: expected header {','.join(expected)}, got {got}")


def read_gaze_csv(path) -> List[FixationRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(path, next(reader, None), GAZE_HEADER)
        records = [FixationRecord(*map(float, row)) for row in reader if row]
    for a, b in zip(records, records[1:]):
        if b.timestamp < a.timestamp:
            raise FormatError(f"{path}: timestamps are not sorted")
    return records


def write_gaze_csv(path, records: Iterable[FixationRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAZE_HEADER)
        for r in records:
            w.writerow([repr(r.timestamp), repr(r.x), repr(r.y), repr(r.confidence)])


def read_detections_csv(path) -> Dict[int, List[TagDetection]]:
    out: Dict[int, List[TagDetection]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(path, next(reader, None), DETECTION_HEADER)
        for row in reader:
            if not row:
                continue
            frame, tag_id = int(row[0]), int(row[1])
            c = list(map(float, row[2:10]))
            out.setdefault(frame, []).append(TagDetection(tag_id, tuple(zip(c[0::2], c[1::2]))))
    return out


def write_detections_csv(path, detections: Dict[int, Sequence[TagDetection]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for frame in sorted(detections):
            for d in detections[frame]:
                w.writerow([frame, d.tag_id] + [repr(c) for pt in d.corners for c in pt])


def _floats(text: str, n: int, what: str) -> List[float]:
    vals = [float(t) for t in text.split()]
    if len(vals) != n:
        raise BadConfig(f"{what}: expected {n} numbers, got {len(vals)}")
    return vals


def _pairs(vals):
    return tuple(zip(vals[0::2], vals[1::2]))


def parse_layout(text: str) -> ScreenLayout:
    """Parse the ``key = value`` layout config (see README for the schema)."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise BadConfig(str(e)) from e
    camera, scene = (1280, 720), (1120, 224)
    screens = []
    for name in cp.sections():
        sec = cp[name]
        if name in ("camera", "scene"):
            unknown = set(sec) - {"width", "height"}
            if unknown:
                raise BadConfig(f"[{name}]: unknown keys {sorted(unknown)}")
            size = (sec.getint("width"), sec.getint("height"))
            if name == "camera":
                camera = size
            else:
                scene = size
        elif name.startswith("screen."):
            sid = int(name.split(".", 1)[1])
            tags = {}
            for key in sec:
                if key.startswith("tag."):
                    tags[int(key[4:])] = _pairs(_floats(sec[key], 8, f"[{name}] {key}"))
                elif key not in ("role", "scene_quad"):
                    raise BadConfig(f"[{name}]: unknown key {key!r}")
            if "role" not in sec or "scene_quad" not in sec:
                raise BadConfig(f"[{name}]: role and scene_quad are required")
            quad = _pairs(_floats(sec["scene_quad"], 8, f"[{name}] scene_quad"))
            screens.append(ScreenSpec(sid, sec["role"], quad, tags))
        else:
            raise BadConfig(f"unknown section [{name}]")
    if not screens:
        raise BadConfig("layout defines no screens")
    return ScreenLayout(screens, camera, scene)


def format_layout(layout: ScreenLayout) -> str:
    def nums(pts):
        return " ".join(repr(float(c)) for pt in pts for c in pt)

    lines = [
        "[camera]",
        f"width = {layout.camera_size[0]}",
        f"height = {layout.camera_size[1]}",
        "",
        "[scene]",
        f"width = {layout.scene_size[0]}",
        f"height = {layout.scene_size[1]}",
    ]
    for s in layout.screens:
        lines += ["", f"[screen.{s.screen_id}]", f"role = {s.role}", f"scene_quad = {nums(s.scene_quad)}"]
        lines += [f"tag.{t} = {nums(s.tags[t])}" for t in s.tag_ids]
    return "\n".join(lines) + "\n"


def read_layout(path) -> ScreenLayout:
    with open(path) as fh:
        return parse_layout(fh.read())


def write_layout(path, layout: ScreenLayout):
    with open(path, "w") as fh:
        fh.write(format_layout(layout))
