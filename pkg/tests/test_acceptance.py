"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
also appear in the terminal report of a full run.
"""

import json
import math
import time

import numpy as np

from gaze360 import metrics as M
from gaze360.attended import InstanceMask, attended_instance_ids, extract_attended
from gaze360.attention import ThresholdPolicy, WindowConfig, build_attention_map
from gaze360.cli import main
from gaze360.geometry import homography_from_correspondences

from acceptance_log import record
from e2e import run_pipeline
from oracles import apply_h, ref_attended, ref_cc, ref_kld, ref_nss, ref_seg, ref_sim

CAM_W, CAM_H = 1280, 720
MAP_W, MAP_H = 1120, 224


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# 1. homography exactness


def _min_triangle_area(pts):
    best = math.inf
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                (ax, ay), (bx, by), (cx, cy) = pts[i], pts[j], pts[k]
                best = min(best, abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax)) / 2)
    return best


def _random_h(rng):
    """Well-conditioned perspective map that keeps the camera frame in front of the viewer."""
    a = np.eye(3)
    a[:2, :2] += rng.normal(0, 0.2, (2, 2))
    a[:2, 2] = rng.uniform(-200, 200, 2)
    a[2, :2] = rng.normal(0, 2e-4, 2)
    return a


def _random_pair(rng, n):
    while True:
        h = _random_h(rng)
        src = rng.uniform([0, 0], [CAM_W, CAM_H], size=(n, 2))
        w = src @ h[2, :2] + h[2, 2]
        if w.min() < 0.3:
            continue
        dst = np.array([apply_h(h.tolist(), p) for p in src])
        if n == 4 and min(_min_triangle_area(src), _min_triangle_area(dst)) < 5000:
            continue
        return h, src, dst


def test_c1_homography_exactness():
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        _, src, dst = _random_pair(rng, 4)
        fit = homography_from_correspondences(src, dst)
        worst = max(worst, float(np.abs(fit.apply(src) - dst).max()))
    worst_rms = 0.0
    for _ in range(1000):
        _, src, dst = _random_pair(rng, 10)
        noisy = dst + rng.normal(0, 0.5, dst.shape)
        fit = homography_from_correspondences(src, noisy)
        rms = float(np.sqrt(np.mean(np.sum((fit.apply(src) - noisy) ** 2, axis=1))))
        worst_rms = max(worst_rms, rms)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and worst_rms <= 1.5 and elapsed < 5
    record(1, "homography exactness", ok,
           f"max 4-point error {worst:.2e} px (<= 1e-6), worst noisy RMS residual {worst_rms:.3f} px (<= 1.5), "
           f"{elapsed:.2f} s (< 5)")
    assert worst <= 1e-6
    assert worst_rms <= 1.5
    assert elapsed < 5


# ---------------------------------------------------------------------------
# 2. attention-map contract


def test_c2_attention_map_contract():
    rng = np.random.default_rng(2)
    cfg = WindowConfig()
    t0 = time.perf_counter()
    worst_sum, neg, unordered, valid = 0.0, 0, 0, 0
    for _ in range(1000):
        n = int(rng.integers(0, cfg.k + 2))
        pts = rng.uniform([-20, -20], [MAP_W + 20, MAP_H + 20], size=(n, 2))
        amap = build_attention_map(pts, cfg, MAP_W, MAP_H)
        if not amap.valid:
            assert n == 0
            continue
        valid += 1
        worst_sum = max(worst_sum, abs(float(amap.values.sum()) - 1))
        neg += int((amap.values < 0).any())
        other = build_attention_map(pts[rng.permutation(n)], cfg, MAP_W, MAP_H)
        unordered += int(not np.allclose(other.values, amap.values, rtol=1e-12, atol=1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst_sum <= 1e-6 and neg == 0 and unordered == 0 and elapsed < 30
    record(2, "attention-map contract", ok,
           f"{valid} valid maps at {MAP_H}x{MAP_W}, worst |sum-1| {worst_sum:.1e} (<= 1e-6), "
           f"{neg} with negatives, {unordered} order-dependent, {elapsed:.2f} s (< 30)")
    assert worst_sum <= 1e-6 and neg == 0 and unordered == 0
    assert elapsed < 30


# ---------------------------------------------------------------------------
# 3. attended-object oracle equivalence


def _scene(rng, h=64, w=320):
    ids = np.zeros((h, w), dtype=np.uint16)
    n = int(rng.integers(0, 21))
    class_of = {}
    for iid in range(1, n + 1):
        r0, c0 = rng.integers(0, h), rng.integers(0, w)
        ids[r0:r0 + rng.integers(1, 24), c0:c0 + rng.integers(1, 80)] = iid
        class_of[iid] = int(rng.integers(1, 11))
    pts = rng.uniform([0, 0], [w, h], size=(int(rng.integers(1, 31)), 2))
    sal = build_attention_map(pts, WindowConfig(sigma=float(rng.uniform(1.5, 12))), w, h)
    return sal, InstanceMask(ids, class_of)


def test_c3_attended_oracle_equivalence():
    rng = np.random.default_rng(3)
    road = {1, 2, 3, 4, 5}
    taus = (0.1, 0.3, 0.5, 0.7, 0.9)
    t0 = time.perf_counter()
    mismatches, non_antitone = 0, 0
    for _ in range(500):
        sal, inst = _scene(rng)
        tau = float(rng.uniform(0.05, 0.95))
        want_mask, want_ids = ref_attended(sal.values.tolist(), inst.instance_id.tolist(), inst.class_of, road, tau)
        got = extract_attended(sal, inst, ThresholdPolicy(tau)).class_id
        if not np.array_equal(got, np.array(want_mask)) or attended_instance_ids(sal, inst, ThresholdPolicy(tau)) != want_ids:
            mismatches += 1
        sets = [attended_instance_ids(sal, inst, ThresholdPolicy(t)) for t in taus]
        non_antitone += int(any(not b <= a for a, b in zip(sets, sets[1:])))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and non_antitone == 0 and elapsed < 60
    record(3, "attended-object oracle equivalence", ok,
           f"500 scenes 64x320, {mismatches} oracle mismatches, {non_antitone} antitone violations, "
           f"{elapsed:.2f} s (< 60)")
    assert mismatches == 0 and non_antitone == 0
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 4. metric identities and fixtures


def _dist(rng):
    v = rng.random((8, 8)) ** 3
    return v / v.sum()


def test_c4_metric_identities_and_fixtures():
    rng = np.random.default_rng(4)
    checks = {}
    p = _dist(rng)
    checks["KLD(P,P) <= 1e-5"] = M.kld(p, p) <= 1e-5
    checks["CC(X,X) = 1"] = abs(M.cc(p, p) - 1) <= 1e-9
    checks["SIM(P,P) = 1"] = abs(M.sim(p, p) - 1) <= 1e-9
    labels = rng.integers(0, 4, (8, 8))
    checks["Dice = IoU = 1"] = M.dice(labels, labels) == 1 and M.iou(labels, labels) == 1

    p2, q2 = np.array([[0.5, 0.5]]), np.array([[0.25, 0.75]])
    checks["KLD fixture"] = abs(M.kld(p2, q2, eps=0) - 0.14384) <= 1e-4
    checks["SIM fixture"] = abs(M.sim(p2, q2) - 0.75) <= 1e-4
    checks["NSS fixture"] = abs(M.nss([[0.1, 0.2], [0.3, 0.4]], [[0, 0], [0, 1]]) - 1.3416) <= 1e-4
    gt = np.zeros((4, 4), int)
    gt[0, :] = 1
    pr = np.zeros((4, 4), int)
    pr[0, :2] = pr[1, :2] = 1
    checks["Dice/IoU fixture"] = abs(M.dice(gt, pr) - 0.5) <= 1e-4 and abs(M.iou(gt, pr) - 1 / 3) <= 1e-4

    worst = 0.0
    for _ in range(100):
        a, b = _dist(rng), _dist(rng)
        fix = (rng.random((8, 8)) < 0.1).astype(int)
        fix[rng.integers(8), rng.integers(8)] = 1
        g, q = rng.integers(0, 4, (8, 8)), rng.integers(0, 4, (8, 8))
        d, j = ref_seg(g.tolist(), q.tolist())
        worst = max(worst,
                    abs(M.kld(a, b) - ref_kld(a.tolist(), b.tolist())),
                    abs(M.cc(a, b) - ref_cc(a.tolist(), b.tolist())),
                    abs(M.nss(a, fix) - ref_nss(a.tolist(), fix.tolist())),
                    abs(M.sim(a, b) - ref_sim(a.tolist(), b.tolist())),
                    abs(M.dice(g, q) - d), abs(M.iou(g, q) - j))
    checks["double-loop reference"] = worst <= 1e-9
    failed = [k for k, v in checks.items() if not v]
    record(4, "metric identities and fixtures", not failed,
           f"{len(checks) - len(failed)}/{len(checks)} checks, worst reference gap {worst:.1e} (<= 1e-9)"
           + (f", failed: {failed}" if failed else ""))
    assert not failed


# ---------------------------------------------------------------------------
# 5. loss contracts


def test_c5_loss_contracts():
    rng = np.random.default_rng(5)
    x = _dist(rng)
    l_sal = M.loss_sal(x, x)
    labels = rng.integers(0, 5, (8, 8))
    onehot = np.eye(5)[labels]
    l_seg = M.loss_seg(labels, onehot)
    y = _dist(rng)
    prob = rng.random((8, 8, 5))
    prob /= prob.sum(axis=2, keepdims=True)
    total = M.loss_total(x, labels, y, prob, 1.0, 1.0)
    parts = M.loss_sal(x, y) + M.loss_seg(labels, prob)
    ok_sal, ok_seg, ok_tot = abs(l_sal + 1) <= 1e-5, abs(l_seg + 2) <= 1e-9, abs(total - parts) <= 1e-12
    record(5, "loss contracts", ok_sal and ok_seg and ok_tot,
           f"L_sal(X,X) = {l_sal:.7f} (-1 +/- 1e-5), L_seg(one-hot) = {l_seg:.12f} (-2 +/- 1e-9), "
           f"|L_total - sum| = {abs(total - parts):.1e} (<= 1e-12)")
    assert ok_sal and ok_seg and ok_tot


# ---------------------------------------------------------------------------
# 6. end-to-end synthetic verification


SEEDS = list(range(101, 113))
MIRROR_SCRIPT = "screen:front-center:40,screen:mirror-left:3,screen:front-left:27,screen:mirror-right:3,screen:front-right:27"


def test_c6_end_to_end_synthetic(tmp_path):
    t0 = time.perf_counter()
    passed, checked = 0, 0
    for seed in SEEDS:
        s, w = tmp_path / f"s{seed}", tmp_path / f"w{seed}"
        assert main(["synth", "--seed", str(seed), "--out", str(s)]) == 0
        rc = run_pipeline(s, w)
        report = json.loads((w / "verify.json").read_text())
        passed += int(rc == 0 and report["pass"])
        checked += report["frames_checked"]

    s, w = tmp_path / "mirror", tmp_path / "mirror-work"
    assert main(["synth", "--seed", "6", "--out", str(s), "--script", MIRROR_SCRIPT,
                 "--low-confidence-rate", "0"]) == 0
    assert main(["calibrate", "--session", str(s), "--out", str(w)]) == 0
    assert main(["stats", "--session", str(s), "--work", str(w), "--out", str(w / "stats.json")]) == 0
    stats = json.loads((w / "stats.json").read_text())
    rear = stats["rear_fraction"]
    elapsed = time.perf_counter() - t0
    ok = passed == len(SEEDS) and stats["assigned_fixations"] == 100 and rear == 0.06 and elapsed < 120
    record(6, "end-to-end synthetic verification", ok,
           f"{passed}/{len(SEEDS)} seeded scenarios pass ({checked} frames compared), "
           f"rear-view fraction {rear:.4f} over {stats['assigned_fixations']} fixations (0.0600), "
           f"{elapsed:.1f} s (< 120)")
    assert passed == len(SEEDS)
    assert stats["assigned_fixations"] == 100 and rear == 0.06
    assert elapsed < 120


# ---------------------------------------------------------------------------
# 7. determinism and throughput


def test_c7_determinism_and_throughput(tmp_path):
    s = tmp_path / "s"
    assert main(["synth", "--seed", "77", "--out", str(s), "--frames", "150"]) == 0
    run_pipeline(s, tmp_path / "j1", jobs=1)
    run_pipeline(s, tmp_path / "j4", jobs=4)
    a, b = tree(tmp_path / "j1"), tree(tmp_path / "j4")
    identical = a == b

    rng = np.random.default_rng(7)
    cfg = WindowConfig()
    windows = [rng.uniform([0, 0], [MAP_W, MAP_H], size=(cfg.k + 1, 2)) for _ in range(300)]
    t0 = time.perf_counter()
    for pts in windows:
        build_attention_map(pts, cfg, MAP_W, MAP_H)
    fps = len(windows) / (time.perf_counter() - t0)
    record(7, "determinism and throughput", identical,
           f"--jobs 1 vs --jobs 4: {len(a)} files {'byte-identical' if identical else 'DIFFER'}; "
           f"map generation {fps:.0f} frames/s at {MAP_H}x{MAP_W} (soft target 300, not gated)")
    assert identical
