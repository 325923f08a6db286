"""Session-level batch stages.

Per-frame work runs through :func:`parallel_map`, which preserves input
order, so results (and the bytes written from them) do not depend on the
worker count. Workers only write their own per-frame files; manifests are
written by the caller.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import metrics as M
from .attended import ClassTable, SemanticMask, attended_instance_ids, extract_attended, read_agm, write_agm
from .attention import ThresholdPolicy, WindowConfig, build_attention_map, read_agz, write_agz
from .dataset import CalibratedFixation, SessionManifest, read_manifest
from .errors import FormatError, Gaze360Error, MissingOutputs, ShapeMismatch, ZeroVariance
from .geometry import (
    DEFAULT_MIN_CONFIDENCE,
    ScreenLayout,
    calibrate_fixation,
    read_detections_csv,
    read_gaze_csv,
    read_layout,
)

MANIFEST = "manifest.jsonl"
CALIBRATED = "calibrated.csv"
MAPS_MANIFEST = "maps.jsonl"
ATTENDED_MANIFEST = "attended.jsonl"
CALIBRATED_HEADER = ["frame", "timestamp", "x", "y", "screen_id", "status"]


def parallel_map(fn, items, jobs: int = 1) -> list:
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    chunk = max(1, math.ceil(len(items) / (4 * jobs)))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path) -> List[dict]:
    try:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except FileNotFoundError:
        raise MissingOutputs(f"missing {path}") from None


@dataclass
class Session:
    root: Path
    manifest: SessionManifest
    layout: ScreenLayout

    @classmethod
    def open(cls, root) -> "Session":
        root = Path(root)
        try:
            manifest = read_manifest(root / MANIFEST)
        except FileNotFoundError:
            raise MissingOutputs(f"no {MANIFEST} in {root}") from None
        return cls(root, manifest, read_layout(root / manifest.layout))

    def path(self, rel) -> Path:
        return self.root / rel


# ---------------------------------------------------------------------------
# calibrate


def frame_of(timestamp: float, fps: float) -> int:
    return int(math.floor(timestamp * fps + 1e-9))


def _calibrate_one(item, layout: ScreenLayout, min_confidence: float):
    rec, dets, frame = item
    try:
        (x, y), sid = calibrate_fixation(rec, dets, layout, min_confidence)
    except Gaze360Error as e:
        return [frame, repr(rec.timestamp), "", "", "", type(e).__name__]
    return [frame, repr(rec.timestamp), repr(float(x)), repr(float(y)), sid, "ok"]


def calibrate_session(session: Session, min_confidence: float = DEFAULT_MIN_CONFIDENCE, jobs: int = 1):
    """Calibrated CSV rows for every gaze sample (failed samples keep their error name)."""
    gaze = read_gaze_csv(session.path(session.manifest.gaze_log))
    det_files = {f.detections for f in session.manifest.frames}
    detections: Dict[int, list] = {}
    for rel in sorted(det_files):
        detections.update(read_detections_csv(session.path(rel)))
    fps = session.manifest.fps
    items = []
    for g in gaze:
        frame = frame_of(g.timestamp, fps)
        items.append((g, detections.get(frame, []), frame))
    return parallel_map(partial(_calibrate_one, layout=session.layout, min_confidence=min_confidence),
                        items, jobs)


def write_calibrated(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CALIBRATED_HEADER)
        w.writerows(rows)


def read_calibrated(path) -> List[dict]:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise MissingOutputs(f"missing {path}") from None
    with fh:
        reader = csv.reader(fh)
        if next(reader, None) != CALIBRATED_HEADER:
            raise FormatError(f"{path}: bad calibrated header")
        rows = []
        for r in reader:
            if not r:
                continue
            ok = r[5] == "ok"
            rows.append({
                "frame": int(r[0]), "timestamp": float(r[1]),
                "x": float(r[2]) if ok else None, "y": float(r[3]) if ok else None,
                "screen_id": int(r[4]) if ok else None, "status": r[5],
            })
    return rows


def calibrated_fixations(rows) -> List[CalibratedFixation]:
    return [CalibratedFixation(r["frame"], r["timestamp"], r["x"], r["y"], r["screen_id"])
            for r in rows if r["status"] in ("ok", "NoScreen", "OutsideScreen")]


# ---------------------------------------------------------------------------
# build-maps


def window_points(by_frame: Dict[int, list], t: int, cfg: WindowConfig, first: int, last: int):
    pts, offs = [], []
    for f in range(max(first, t - cfg.half), min(last, t + cfg.half) + 1):
        for p in by_frame.get(f, ()):
            pts.append(p)
            offs.append(f - t)
    return pts, offs


def _map_one(item, cfg: WindowConfig, width: int, height: int, out_dir: str, write: bool):
    t, pts, offs = item
    amap = build_attention_map(pts, cfg, width, height, offsets=offs)
    rel = f"maps/frame_{t:06d}.agz"
    if write:
        write_agz(os.path.join(out_dir, rel), amap)
    return {"frame_id": t, "map": rel, "valid": amap.valid,
            "fixations": [[float(x), float(y)] for x, y in pts]}


def build_session_maps(session: Session, out_dir, cfg: WindowConfig = WindowConfig(), jobs: int = 1,
                       write: bool = True):
    out_dir = Path(out_dir)
    rows = read_calibrated(out_dir / CALIBRATED)
    by_frame: Dict[int, list] = {}
    for r in rows:
        if r["status"] == "ok":
            by_frame.setdefault(r["frame"], []).append((r["x"], r["y"]))
    ids = session.manifest.frame_ids
    width, height = session.layout.scene_size
    items = [(t, *window_points(by_frame, t, cfg, ids[0], ids[-1])) for t in ids]
    if write:
        (out_dir / "maps").mkdir(parents=True, exist_ok=True)
    lines = parallel_map(partial(_map_one, cfg=cfg, width=width, height=height, out_dir=str(out_dir),
                                 write=write), items, jobs)
    if write:
        write_jsonl(out_dir / MAPS_MANIFEST, lines)
    return lines


# ---------------------------------------------------------------------------
# extract-attended


def _extract_one(item, tau: ThresholdPolicy, classes: ClassTable, out_dir: str, write: bool):
    line, inst_path = item
    amap = read_agz(os.path.join(out_dir, line["map"]))
    inst = read_agm(inst_path)
    if amap.valid:
        ids = sorted(attended_instance_ids(amap, inst, tau, classes))
        mask = extract_attended(amap, inst, tau, classes)
    else:
        ids = []
        mask = SemanticMask(np.zeros(inst.shape, dtype=np.uint16))
    rel = f"masks/frame_{line['frame_id']:06d}.agm"
    if write:
        write_agm(os.path.join(out_dir, rel), mask)
    return {"frame_id": line["frame_id"], "mask": rel, "map": line["map"], "valid": amap.valid,
            "attended": ids, "fixations": line.get("fixations", [])}


def extract_session(session: Session, out_dir, tau: ThresholdPolicy = ThresholdPolicy(),
                    classes: Optional[ClassTable] = None, jobs: int = 1, write: bool = True):
    out_dir = Path(out_dir)
    lines = read_jsonl(out_dir / MAPS_MANIFEST)
    items = []
    for line in lines:
        entry = session.manifest.frame(line["frame_id"])
        if entry.instances is None:
            raise MissingOutputs(f"frame {entry.frame_id} has no instance mask")
        p = session.path(entry.instances)
        if not p.exists():
            raise MissingOutputs(f"missing instance mask {p}")
        if not (out_dir / line["map"]).exists():
            raise MissingOutputs(f"missing attention map {out_dir / line['map']}")
        items.append((line, str(p)))
    if write:
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    out = parallel_map(partial(_extract_one, tau=tau, classes=classes or ClassTable(),
                               out_dir=str(out_dir), write=write), items, jobs)
    if write:
        write_jsonl(out_dir / ATTENDED_MANIFEST, out)
    return out


# ---------------------------------------------------------------------------
# evaluate


def _maybe(fn, *args):
    try:
        return fn(*args)
    except (ZeroVariance, M.EmptyGroundTruth, M.NoFixations):
        return None


def _evaluate_one(item, eps: float):
    frame_id, gt, pred = item
    scores = M.FrameScores(frame_id, valid=True, values={k: None for k in M.METRIC_NAMES + ("loss_sal",)})
    if "map" in gt and "map" in pred:
        g, p = gt["map"], pred["map"]
        if g.shape != p.shape:
            raise ShapeMismatch(f"frame {frame_id}: map shapes {g.shape} vs {p.shape}")
        if not g.valid:
            scores.valid, scores.reason = False, "invalid ground-truth map"
        elif not p.valid:
            scores.valid, scores.reason = False, "invalid predicted map"
        else:
            v = scores.values
            v["kld"] = M.kld(g, p, eps)
            v["sim"] = M.sim(g, p)
            v["cc"] = _maybe(M.cc, g, p)
            if v["cc"] is not None:
                v["loss_sal"] = v["kld"] - v["cc"]
            fix = gt.get("fixations")
            if fix:
                fmap = M.fixation_point_map(fix, g.width, g.height)
                v["nss"] = _maybe(M.nss, p, fmap)
    if "mask" in gt and "mask" in pred:
        if gt["mask"].shape != pred["mask"].shape:
            raise ShapeMismatch(f"frame {frame_id}: mask shapes differ")
        seg = _maybe(M.segmentation_scores, gt["mask"], pred["mask"])
        if seg:
            scores.values["dice"] = float(np.mean([s[0] for s in seg.values()]))
            scores.values["iou"] = float(np.mean([s[1] for s in seg.values()]))
    if scores.valid and all(v is None for v in scores.values.values()):
        scores.valid, scores.reason = False, "no computable metric"
    return scores


def _load_line(line, root: Path) -> dict:
    out = {}
    for key, reader in (("map", read_agz), ("mask", read_agm)):
        if key in line:
            p = root / line[key]
            if not p.exists():
                raise MissingOutputs(f"missing {p}")
            out[key] = reader(p)
    if line.get("fixations"):
        out["fixations"] = line["fixations"]
    return out


def evaluate_manifests(gt_path, pred_path, eps: float = M.KLD_EPS, jobs: int = 1) -> M.EvalReport:
    gt_path, pred_path = Path(gt_path), Path(pred_path)
    gt_lines, pred_lines = read_jsonl(gt_path), read_jsonl(pred_path)
    if len(gt_lines) != len(pred_lines):
        raise ShapeMismatch(f"manifests have {len(gt_lines)} vs {len(pred_lines)} frames")
    items = []
    for g, p in zip(gt_lines, pred_lines):
        if g["frame_id"] != p["frame_id"]:
            raise ShapeMismatch(f"frame ids differ: {g['frame_id']} vs {p['frame_id']}")
        items.append((g["frame_id"], _load_line(g, gt_path.parent), _load_line(p, pred_path.parent)))
    return M.EvalReport(parallel_map(partial(_evaluate_one, eps=eps), items, jobs))


REPORT_COLUMNS = ("kld", "cc", "nss", "sim", "dice", "iou", "loss_sal")


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_report(out_dir, report: M.EvalReport):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg = report.aggregates()
    loss_vals = [f.values["loss_sal"] for f in report.frames if f.valid and f.values.get("loss_sal") is not None]
    agg["loss_sal"] = math.fsum(loss_vals) / len(loss_vals) if loss_vals else None
    with open(out_dir / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("frame_id", "valid") + REPORT_COLUMNS)
        for f in report.frames:
            w.writerow([f.frame_id, int(f.valid)] + [_fmt(f.values.get(c)) for c in REPORT_COLUMNS])
        w.writerow(["mean", report.valid_count] + [_fmt(agg.get(c)) for c in REPORT_COLUMNS])
    summary = {"aggregates": agg, "valid_frames": report.valid_count,
               "skipped_frames": report.skipped_count, "total_frames": len(report.frames),
               "skipped": {str(f.frame_id): f.reason for f in report.frames if not f.valid}}
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary
