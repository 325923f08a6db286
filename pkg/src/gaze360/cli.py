"""``gaze360`` command line.

Exit status is 0 on success. Failures print one JSON line
``{"error": ..., "exit_code": ..., "message": ...}`` to stderr and exit
with the error class's code (see :mod:`gaze360.errors`).
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline as P
from .config import PipelineConfig, load_config
from .dataset import SplitSpec, assign_split, gaze_statistics, read_manifest
from .errors import Gaze360Error, UsageError, VerificationFailed
from .synth import SynthConfig, generate, make_scenario, parse_script, verify

log = logging.getLogger("gaze360")


def _add_common(p):
    p.add_argument("--config", help="pipeline config file (key = value sections)")
    p.add_argument("--jobs", type=int, help="worker processes (default: $GAZE360_JOBS or 1)")
    p.add_argument("--dry-run", action="store_true", help="validate inputs without writing anything")


def _add_session_io(p):
    p.add_argument("--session", help="session directory (holds manifest.jsonl)")
    p.add_argument("--out", help="output / work directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaze360", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic session")
    _add_common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--scene-width", type=int)
    p.add_argument("--scene-height", type=int)
    p.add_argument("--screens", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--low-confidence-rate", type=float)
    p.add_argument("--script", help="dwell script, e.g. 'instance:2:40,screen:mirror-left:6'")

    p = sub.add_parser("calibrate", help="map gaze samples into the scene frame")
    _add_common(p)
    _add_session_io(p)
    p.add_argument("--min-confidence", type=float)

    p = sub.add_parser("build-maps", help="write one AGZ1 attention map per frame")
    _add_common(p)
    _add_session_io(p)
    p.add_argument("--k", type=int, help="window length in frames (even)")
    p.add_argument("--sigma", type=float, help="Gaussian std in scene pixels")

    p = sub.add_parser("extract-attended", help="write one AGM1 attended-object mask per frame")
    _add_common(p)
    _add_session_io(p)
    p.add_argument("--tau", type=float, help="binarization ratio of the map maximum")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    _add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth frame manifest (JSON lines)")
    p.add_argument("--pred", required=True, help="prediction frame manifest (JSON lines)")
    p.add_argument("--out", required=True, help="directory for report.csv and summary.json")
    p.add_argument("--eps", type=float)

    p = sub.add_parser("stats", help="gaze distribution statistics as JSON")
    _add_common(p)
    p.add_argument("--session", action="append", required=True)
    p.add_argument("--work", action="append", required=True,
                   help="work directory holding calibrated.csv, one per --session")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("split", help="route sessions into train/val manifests by town")
    _add_common(p)
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--town", type=int, help="override the town label of every session")
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="check pipeline outputs against synthetic truth")
    _add_common(p)
    _add_session_io(p)
    p.add_argument("--report", help="write the verification report JSON here")
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    session = getattr(args, "session", None)
    cfg = cfg.override(jobs=args.jobs,
                       session=session if isinstance(session, str) else None,
                       output=getattr(args, "out", None),
                       min_confidence=getattr(args, "min_confidence", None),
                       k=getattr(args, "k", None), sigma=getattr(args, "sigma", None),
                       tau_ratio=getattr(args, "tau", None), eps=getattr(args, "eps", None))
    if cfg.jobs is None:
        cfg.jobs = int(os.environ.get("GAZE360_JOBS", "1"))
    return cfg.validate()


def _session_dirs(cfg: PipelineConfig):
    if not cfg.session or not cfg.output:
        raise UsageError("--session and --out are required (or [paths] in --config)")
    return P.Session.open(cfg.session), Path(cfg.output)


def cmd_synth(args, cfg):
    s = cfg.synth
    pick = lambda flag, key: flag if flag is not None else s.get(key)  # noqa: E731
    kw = {}
    frames = pick(args.frames, "frames")
    if frames is not None:
        kw["n_frames"] = frames
    width, height = pick(args.scene_width, "scene_width"), pick(args.scene_height, "scene_height")
    if width or height:
        kw["scene_size"] = (width or 320, height or 64)
    for flag, key, name in ((args.screens, "screens", "n_screens"), (args.instances, "instances", "n_instances"),
                            (args.low_confidence_rate, "low_confidence_rate", "low_confidence_rate"),
                            (None, "head_motion_px", "head_motion_px"), (None, "gaze_jitter_px", "gaze_jitter_px")):
        v = pick(flag, key)
        if v is not None:
            kw[name] = v
    script = pick(args.script, "script")
    if script:
        kw["script"] = parse_script(script)
        kw.setdefault("n_frames", sum(seg.frames for seg in kw["script"]))
    kw.update(k=cfg.k, tau=cfg.tau_ratio, min_confidence=cfg.min_confidence)
    scfg = SynthConfig(**kw)
    if args.dry_run:
        make_scenario(args.seed, scfg)
    else:
        generate(args.seed, scfg, args.out)
    return 0


def cmd_calibrate(args, cfg):
    session, out = _session_dirs(cfg)
    rows = P.calibrate_session(session, cfg.min_confidence, cfg.jobs)
    if not args.dry_run:
        out.mkdir(parents=True, exist_ok=True)
        P.write_calibrated(out / P.CALIBRATED, rows)
    return 0


def cmd_build_maps(args, cfg):
    session, out = _session_dirs(cfg)
    P.build_session_maps(session, out, cfg.window(), cfg.jobs, write=not args.dry_run)
    return 0


def cmd_extract(args, cfg):
    session, out = _session_dirs(cfg)
    P.extract_session(session, out, cfg.threshold(), jobs=cfg.jobs, write=not args.dry_run)
    return 0


def cmd_evaluate(args, cfg):
    report = P.evaluate_manifests(args.gt, args.pred, cfg.eps, cfg.jobs)
    if not args.dry_run:
        P.write_report(args.out, report)
    return 0


def cmd_stats(args, cfg):
    if len(args.session) != len(args.work):
        raise UsageError("give one --work per --session")
    total = None
    for sdir, wdir in zip(args.session, args.work):
        session = P.Session.open(sdir)
        fix = P.calibrated_fixations(P.read_calibrated(Path(wdir) / P.CALIBRATED))
        st = gaze_statistics([(session.manifest, fix)], session.layout)
        total = st if total is None else total.merge(st)
    text = json.dumps(total.to_json(), sort_keys=True, indent=2) + "\n"
    if args.dry_run:
        return 0
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_split(args, cfg):
    spec: SplitSpec = cfg.split_spec()
    routed = {"train": [], "val": []}
    for path in args.manifest:
        m = read_manifest(path)
        if args.town is not None:
            m.town = args.town
        routed[assign_split(m, spec)].append({"session_id": m.session_id, "manifest": path, "town": m.town})
    if not args.dry_run:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, records in routed.items():
            P.write_jsonl(out / f"{name}.jsonl", records)
    return 0


def cmd_verify(args, cfg):
    if not cfg.session or not cfg.output:
        raise UsageError("--session and --out are required")
    report = verify(cfg.session, cfg.output)
    if args.report and not args.dry_run:
        Path(args.report).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    summary = {k: report[k] for k in ("pass", "frames_total", "frames_checked", "frames_ambiguous")}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    if not report["pass"]:
        raise VerificationFailed(
            f"{len(report['screen_mismatches'])} screen and "
            f"{len(report['attended_mismatches'])} attended-set mismatches")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "calibrate": cmd_calibrate,
    "build-maps": cmd_build_maps,
    "extract-attended": cmd_extract,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
    "split": cmd_split,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except Gaze360Error as e:
        err = {"error": type(e).__name__, "exit_code": e.exit_code, "message": str(e)}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
