"""Deterministic synthetic sessions with analytically known answers.

A scenario places rectangular instances in the scene, scripts a gaze
trajectory as a sequence of dwells on targets (instance centers or
background points), and renders what the eye tracker would log: gaze
samples, per-frame tag detections under head motion, and instance masks.

The expected attended set per frame is computed from the script alone:
within a window, each target contributes ``count * exp(-d^2 / 2 sigma^2)``
to every other target's peak; a road-user target is attended when its peak
exceeds ``tau * max``. Targets are kept at least 4 sigma apart and instances
at least 2 sigma apart, so these peak values match the rasterized map to
well under 1%. Frames where a road-user target's peak ratio falls within
``AMBIGUITY_BAND`` of tau are flagged ambiguous and not scored.

All randomness comes from :class:`SplitMix64` so the same seed gives the
same bytes in any implementation.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .attended import ClassTable, InstanceMask, write_agm
from .attention import DEFAULT_K, DEFAULT_SIGMA_RATIO
from .dataset import DEFAULT_VIEW_ORDER, FrameEntry, SessionManifest, write_manifest
from .errors import BadConfig, MissingOutputs
from .geometry import (
    FixationRecord,
    Homography,
    ScreenLayout,
    ScreenSpec,
    TagDetection,
    homography_from_correspondences,
    screen_for_gaze,
    write_detections_csv,
    write_gaze_csv,
    write_layout,
    UNIT_SQUARE,
)
from .pipeline import ATTENDED_MANIFEST, CALIBRATED, MANIFEST, read_calibrated, read_jsonl

MASK64 = (1 << 64) - 1
AMBIGUITY_BAND = 0.1
TRUTH_FILE = "truth.json"
INSTANCES_FILE = "instances/frame_static.agm"

SCREEN_ROLES = ("front-center", "front-left", "front-right", "mirror-left", "mirror-right")
# normalized (u, v) corners of the four tags on every screen: TL, TR, BR, BL
TAG_LAYOUT = (
    ((0.02, 0.03), (0.12, 0.03), (0.12, 0.13), (0.02, 0.13)),
    ((0.88, 0.03), (0.98, 0.03), (0.98, 0.13), (0.88, 0.13)),
    ((0.88, 0.87), (0.98, 0.87), (0.98, 0.97), (0.88, 0.97)),
    ((0.02, 0.87), (0.12, 0.87), (0.12, 0.97), (0.02, 0.97)),
)
INSTANCE_CLASSES = ("vehicle", "pedestrian", "building", "traffic light", "cyclist", "traffic sign",
                    "vegetation", "vehicle")


class SplitMix64:
    """SplitMix64 (Steele, Lea, Flood 2014); uniform doubles use the top 53 bits."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def randrange(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)


@dataclass
class Segment:
    """Dwell of ``frames`` frames on an instance center or a background point of a screen."""

    kind: str  # "instance" | "screen"
    target: str  # instance id, or screen role
    frames: int


def parse_script(text: str) -> List[Segment]:
    """``instance:4:3, screen:mirror-left:6`` -> segments."""
    segs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 3 or parts[0] not in ("instance", "screen"):
            raise BadConfig(f"bad script segment {item!r}")
        segs.append(Segment(parts[0], parts[1], int(parts[2])))
    return segs


@dataclass
class SynthConfig:
    n_frames: int = 90
    scene_size: Tuple[int, int] = (320, 64)
    camera_size: Tuple[int, int] = (1280, 720)
    n_screens: int = 5
    n_instances: int = 6
    head_motion_px: float = 4.0
    gaze_jitter_px: float = 0.3
    low_confidence_rate: float = 0.05
    dwell_range: Tuple[int, int] = (6, 40)
    background_rate: float = 0.3
    script: Optional[List[Segment]] = None
    k: int = DEFAULT_K
    tau: float = 0.5
    min_confidence: float = 0.6

    def validate(self):
        if not 1 <= self.n_screens <= 5:
            raise BadConfig(f"need 1..5 screens, got {self.n_screens}")
        if self.n_instances < 1:
            raise BadConfig("need at least one instance")
        if self.n_frames < 1:
            raise BadConfig("need at least one frame")
        if self.scene_size[0] % 5:
            raise BadConfig("scene width must be divisible by 5")
        if self.dwell_range[0] < 1 or self.dwell_range[1] < self.dwell_range[0]:
            raise BadConfig("bad dwell range")
        if self.script is not None and sum(s.frames for s in self.script) != self.n_frames:
            raise BadConfig("script dwell lengths must add up to n_frames")

    @property
    def sigma(self) -> float:
        return DEFAULT_SIGMA_RATIO * self.scene_size[0]

    def to_json(self) -> dict:
        d = asdict(self)
        d["script"] = None if self.script is None else [asdict(s) for s in self.script]
        return d


@dataclass
class Instance:
    instance_id: int
    class_name: str
    rect: Tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive pixel bounds
    screen_id: int

    @property
    def center(self) -> Tuple[float, float]:
        x0, y0, x1, y1 = self.rect
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0


@dataclass
class SynthScenario:
    seed: int
    config: SynthConfig
    layout: ScreenLayout
    instances: List[Instance]
    targets: List[dict]           # per frame: {"screen": id, "point": (x, y), "instance": id | None, "key": str}
    gaze: List[FixationRecord]
    detections: Dict[int, List[TagDetection]]
    truth: List[dict] = field(default_factory=list)


def _rect_gap(a, b) -> float:
    dx = max(b[0] - a[2], a[0] - b[2], 0)
    dy = max(b[1] - a[3], a[1] - b[3], 0)
    return math.hypot(dx, dy)


def _point_rect_dist(p, r) -> float:
    dx = max(r[0] - p[0], 0, p[0] - r[2])
    dy = max(r[1] - p[1], 0, p[1] - r[3])
    return math.hypot(dx, dy)


def _make_layout(cfg: SynthConfig) -> ScreenLayout:
    w, h = cfg.scene_size
    tw = w // 5
    screens = []
    for sid, role in enumerate(SCREEN_ROLES[: cfg.n_screens]):
        i = DEFAULT_VIEW_ORDER.index(role)
        quad = ((i * tw, 0), ((i + 1) * tw, 0), ((i + 1) * tw, h), (i * tw, h))
        tags = {4 * sid + j: TAG_LAYOUT[j] for j in range(4)}
        screens.append(ScreenSpec(sid, role, quad, tags))
    return ScreenLayout(screens, cfg.camera_size, cfg.scene_size)


def _camera_quads(cfg: SynthConfig, layout: ScreenLayout, rng: SplitMix64) -> Dict[int, np.ndarray]:
    """Static keystoned quad of every screen in the eye-tracker image."""
    cw, ch = cfg.camera_size
    slot = cw / 5
    quads = {}
    for s in layout.screens:
        i = DEFAULT_VIEW_ORDER.index(s.role)
        x0, x1 = i * slot + 0.12 * slot, (i + 1) * slot - 0.12 * slot
        y0, y1 = 0.3 * ch, 0.7 * ch
        base = np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
        quads[s.screen_id] = base + np.array([[rng.uniform(-6, 6), rng.uniform(-6, 6)] for _ in range(4)])
    return quads


def _place_instances(cfg: SynthConfig, layout: ScreenLayout, rng: SplitMix64) -> List[Instance]:
    w, h = cfg.scene_size
    tw = w // 5
    sigma = cfg.sigma
    lo_w, hi_w = 6, max(7, tw // 3)
    lo_h, hi_h = 6, max(7, h // 2)
    placed: List[Instance] = []
    for n in range(cfg.n_instances):
        for _ in range(10000):
            screen = layout.screens[rng.randrange(len(layout.screens))]
            qx0 = int(screen.scene_quad[0][0])
            rw = lo_w + rng.randrange(hi_w - lo_w + 1)
            rh = lo_h + rng.randrange(hi_h - lo_h + 1)
            x0 = qx0 + 3 + rng.randrange(max(1, tw - rw - 6))
            y0 = 3 + rng.randrange(max(1, h - rh - 6))
            rect = (x0, y0, x0 + rw - 1, y0 + rh - 1)
            cand = Instance(n + 1, INSTANCE_CLASSES[n % len(INSTANCE_CLASSES)], rect, screen.screen_id)
            ok = all(
                _rect_gap(rect, o.rect) >= 2 * sigma
                and math.dist(cand.center, o.center) >= 4 * sigma
                for o in placed
            )
            if ok:
                placed.append(cand)
                break
        else:
            raise BadConfig(f"cannot place {cfg.n_instances} separated instances in the scene")
    return placed


def _background_point(screen: ScreenSpec, cfg: SynthConfig, instances, used, rng: SplitMix64):
    w, h = cfg.scene_size
    qx0 = screen.scene_quad[0][0]
    tw = w // 5
    sigma = cfg.sigma
    for _ in range(10000):
        # stay clear of the tag bands and tile edges
        p = (qx0 + rng.uniform(0.15, 0.85) * tw, rng.uniform(0.2, 0.8) * h)
        if all(_point_rect_dist(p, i.rect) >= 2 * sigma for i in instances) and \
           all(math.dist(p, q) >= 4 * sigma for q in used):
            return p
    return None


def _build_script(cfg: SynthConfig, layout: ScreenLayout, instances: List[Instance], rng: SplitMix64):
    """Resolve segments into one target per frame."""
    inst_by_id = {i.instance_id: i for i in instances}
    by_role = {s.role: s for s in layout.screens}
    backgrounds: Dict[str, Tuple[float, float]] = {}

    def bg_target(screen: ScreenSpec):
        key = f"bg:{screen.screen_id}"
        if key not in backgrounds:
            used = [i.center for i in instances] + list(backgrounds.values())
            p = _background_point(screen, cfg, instances, used, rng)
            if p is None:
                raise BadConfig(f"no free background point on screen {screen.screen_id}")
            backgrounds[key] = p
        return {"screen": screen.screen_id, "point": backgrounds[key], "instance": None, "key": key}

    def inst_target(inst: Instance):
        return {"screen": inst.screen_id, "point": inst.center, "instance": inst.instance_id,
                "key": f"inst:{inst.instance_id}"}

    frames = []
    if cfg.script is not None:
        for seg in cfg.script:
            if seg.kind == "instance":
                iid = int(seg.target)
                if iid not in inst_by_id:
                    raise BadConfig(f"script references unknown instance {iid}")
                tgt = inst_target(inst_by_id[iid])
            else:
                if seg.target not in by_role:
                    raise BadConfig(f"script references absent screen {seg.target!r}")
                tgt = bg_target(by_role[seg.target])
            frames += [tgt] * seg.frames
        return frames

    while len(frames) < cfg.n_frames:
        lo, hi = cfg.dwell_range
        dwell = lo + rng.randrange(hi - lo + 1)
        if rng.random() < cfg.background_rate:
            tgt = bg_target(layout.screens[rng.randrange(len(layout.screens))])
        else:
            tgt = inst_target(instances[rng.randrange(len(instances))])
        frames += [tgt] * dwell
    del frames[cfg.n_frames:]
    return frames


def _instance_mask(cfg: SynthConfig, instances: List[Instance], classes: ClassTable) -> InstanceMask:
    w, h = cfg.scene_size
    ids = np.zeros((h, w), dtype=np.uint16)
    for inst in instances:
        x0, y0, x1, y1 = inst.rect
        ids[y0:y1 + 1, x0:x1 + 1] = inst.instance_id
    return InstanceMask(ids, {i.instance_id: classes.id_of(i.class_name) for i in instances})


def expected_attended(scn: SynthScenario, classes: Optional[ClassTable] = None) -> List[dict]:
    """Per-frame truth derived from the script (not from the pipeline)."""
    cfg = scn.config
    classes = classes or ClassTable()
    half = cfg.k // 2
    sigma = cfg.sigma
    road = {i.instance_id for i in scn.instances if classes.is_road_user(classes.id_of(i.class_name))}
    ok = [g.confidence >= cfg.min_confidence for g in scn.gaze]
    truth = []
    for t in range(cfg.n_frames):
        counts: Dict[str, int] = {}
        points: Dict[str, Tuple[float, float]] = {}
        owner: Dict[str, Optional[int]] = {}
        for f in range(max(0, t - half), min(cfg.n_frames - 1, t + half) + 1):
            if not ok[f]:
                continue
            tg = scn.targets[f]
            counts[tg["key"]] = counts.get(tg["key"], 0) + 1
            points[tg["key"]] = tg["point"]
            owner[tg["key"]] = tg["instance"]
        peaks = {
            a: sum(n * math.exp(-math.dist(points[a], points[b]) ** 2 / (2 * sigma ** 2))
                   for b, n in counts.items())
            for a in counts
        }
        attended, ambiguous = set(), False
        if peaks:
            top = max(peaks.values())
            for key, v in peaks.items():
                iid = owner[key]
                if iid is None or iid not in road:
                    continue
                ratio = v / top
                if abs(ratio - cfg.tau) <= AMBIGUITY_BAND:
                    ambiguous = True
                if ratio > cfg.tau:
                    attended.add(iid)
        truth.append({
            "frame": t,
            "screen": scn.targets[t]["screen"],
            "gaze_ok": ok[t],
            "attended": sorted(attended),
            "ambiguous": ambiguous,
        })
    return truth


def make_scenario(seed: int, cfg: Optional[SynthConfig] = None) -> SynthScenario:
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = SplitMix64(seed)
    layout = _make_layout(cfg)
    cam_quads = _camera_quads(cfg, layout, rng)
    instances = _place_instances(cfg, layout, rng)
    targets = _build_script(cfg, layout, instances, rng)

    cw, ch = cfg.camera_size
    gaze, detections = [], {}
    for t in range(cfg.n_frames):
        shift = np.array([rng.uniform(-cfg.head_motion_px, cfg.head_motion_px),
                          rng.uniform(-cfg.head_motion_px, cfg.head_motion_px)])
        cam_h: Dict[int, Homography] = {}
        dets = []
        for s in layout.screens:
            cam_h[s.screen_id] = homography_from_correspondences(UNIT_SQUARE, cam_quads[s.screen_id] + shift)
            for tag_id in s.tag_ids:
                corners = cam_h[s.screen_id].apply(s.tags[tag_id])
                dets.append(TagDetection(tag_id, tuple(map(tuple, corners))))
        detections[t] = dets

        tg = targets[t]
        screen = layout.screen(tg["screen"])
        jx = rng.uniform(-cfg.gaze_jitter_px, cfg.gaze_jitter_px)
        jy = rng.uniform(-cfg.gaze_jitter_px, cfg.gaze_jitter_px)
        scene_pt = (tg["point"][0] + jx, tg["point"][1] + jy)
        uv = screen.quad_homography().inverse().apply([scene_pt])
        px = cam_h[screen.screen_id].apply(uv)[0]
        if screen_for_gaze(px, dets, layout) != screen.screen_id:
            raise AssertionError(f"frame {t}: generated gaze leaves its screen strip")
        if rng.random() < cfg.low_confidence_rate:
            conf = rng.uniform(0.0, 0.5)
        else:
            conf = rng.uniform(0.8, 1.0)
        gaze.append(FixationRecord((t + 0.5) / 30.0, float(px[0] / cw), float(px[1] / ch), conf))

    scn = SynthScenario(seed, cfg, layout, instances, targets, gaze, detections)
    scn.truth = expected_attended(scn)
    return scn


def write_session(scn: SynthScenario, out_dir, classes: Optional[ClassTable] = None) -> Path:
    """Write gaze CSV, detections CSV, layout, instance mask, manifest and truth sidecar."""
    classes = classes or ClassTable()
    out = Path(out_dir)
    (out / "instances").mkdir(parents=True, exist_ok=True)
    write_gaze_csv(out / "gaze.csv", scn.gaze)
    write_detections_csv(out / "detections.csv", scn.detections)
    write_layout(out / "layout.cfg", scn.layout)
    write_agm(out / INSTANCES_FILE, _instance_mask(scn.config, scn.instances, classes))
    frames = [
        FrameEntry(t, [f"views/frame_{t:06d}_{role}.png" for role in DEFAULT_VIEW_ORDER],
                   (t / 30.0, (t + 1) / 30.0), "detections.csv", INSTANCES_FILE)
        for t in range(scn.config.n_frames)
    ]
    manifest = SessionManifest(f"synth-{scn.seed}", "S000", 3, "unscripted", "ClearNoon", frames)
    write_manifest(out / MANIFEST, manifest)
    truth = {
        "seed": scn.seed,
        "config": scn.config.to_json(),
        "instances": [asdict(i) for i in scn.instances],
        "frames": scn.truth,
    }
    with open(out / TRUTH_FILE, "w") as fh:
        json.dump(truth, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return out


def generate(seed: int, config: Optional[SynthConfig] = None, out_dir=None) -> SynthScenario:
    scn = make_scenario(seed, config)
    if out_dir is not None:
        write_session(scn, out_dir)
    return scn


def verify(session_dir, work_dir) -> dict:
    """Compare pipeline outputs in ``work_dir`` against the session's truth sidecar."""
    session_dir, work_dir = Path(session_dir), Path(work_dir)
    try:
        with open(session_dir / TRUTH_FILE) as fh:
            truth = json.load(fh)
    except FileNotFoundError:
        raise MissingOutputs(f"missing {session_dir / TRUTH_FILE}") from None
    rows = read_calibrated(work_dir / CALIBRATED)
    attended = {line["frame_id"]: line for line in read_jsonl(work_dir / ATTENDED_MANIFEST)}
    frames = truth["frames"]

    screen_mismatches, attended_mismatches = [], []
    if len(rows) != len(frames):
        raise MissingOutputs(f"calibrated rows: expected {len(frames)}, got {len(rows)}")
    for row, tr in zip(rows, frames):
        if tr["gaze_ok"]:
            if row["status"] != "ok" or row["screen_id"] != tr["screen"]:
                screen_mismatches.append({"frame": tr["frame"], "expected": tr["screen"],
                                          "got": row["screen_id"], "status": row["status"]})
        elif row["status"] != "LowConfidence":
            screen_mismatches.append({"frame": tr["frame"], "expected": "LowConfidence",
                                      "got": row["status"]})

    checked = ambiguous = 0
    for tr in frames:
        line = attended.get(tr["frame"])
        if line is None:
            raise MissingOutputs(f"no attended record for frame {tr['frame']}")
        if not (work_dir / line["mask"]).exists():
            raise MissingOutputs(f"missing {work_dir / line['mask']}")
        if tr["ambiguous"]:
            ambiguous += 1
            continue
        checked += 1
        if sorted(line["attended"]) != tr["attended"]:
            attended_mismatches.append({"frame": tr["frame"], "expected": tr["attended"],
                                        "got": sorted(line["attended"])})
    return {
        "pass": not screen_mismatches and not attended_mismatches,
        "frames_total": len(frames),
        "frames_checked": checked,
        "frames_ambiguous": ambiguous,
        "empty_attended_frames": sum(1 for tr in frames if not tr["ambiguous"]
                                     and not attended[tr["frame"]]["attended"]),
        "screen_mismatches": screen_mismatches,
        "attended_mismatches": attended_mismatches,
    }
