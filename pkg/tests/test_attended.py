import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaze360.attended import (
    ClassTable,
    InstanceMask,
    SemanticMask,
    attended_instance_ids,
    decode_agm,
    encode_agm,
    extract_attended,
)
from gaze360.attention import AttentionMap, ThresholdPolicy, WindowConfig, build_attention_map
from gaze360.errors import BadConfig, FormatError, InvalidMap, ShapeMismatch

from oracles import ref_attended

CLASSES = ClassTable()
ROAD = CLASSES.road_user_ids
VEHICLE, BUILDING = CLASSES.id_of("vehicle"), CLASSES.id_of("building")


def peaked(h, w, r, c):
    v = np.full((h, w), 1e-3)
    v[r, c] = 1.0
    return AttentionMap(v / v.sum())


def random_scene(rng, h=64, w=320, max_inst=20):
    """Random rectangles painted in order (later ones occlude earlier ones)."""
    ids = np.zeros((h, w), dtype=np.uint16)
    n = int(rng.integers(0, max_inst + 1))
    class_of = {}
    for iid in range(1, n + 1):
        r0, c0 = rng.integers(0, h), rng.integers(0, w)
        ids[r0:r0 + rng.integers(1, 20), c0:c0 + rng.integers(1, 60)] = iid
        class_of[iid] = int(rng.integers(1, 11))
    pts = rng.uniform([0, 0], [w, h], size=(int(rng.integers(1, 8)), 2))
    sal = build_attention_map(pts, WindowConfig(sigma=float(rng.uniform(2, 20))), w, h)
    return sal, InstanceMask(ids, class_of)


def test_no_overlap_gives_empty_mask():
    inst = np.zeros((10, 10), dtype=int)
    inst[7:, 7:] = 1
    out = extract_attended(peaked(10, 10, 1, 1), InstanceMask(inst, {1: VEHICLE}))
    assert not out.class_id.any()


def test_single_salient_pixel_labels_whole_instance():
    inst = np.zeros((8, 12), dtype=int)
    inst[2:6, 3:9] = 1
    out = extract_attended(peaked(8, 12, 2, 3), InstanceMask(inst, {1: VEHICLE}))
    np.testing.assert_array_equal(out.class_id, np.where(inst == 1, VEHICLE, 0))


def test_non_road_user_filtered():
    inst = np.zeros((8, 8), dtype=int)
    inst[:, :] = 1
    out = extract_attended(peaked(8, 8, 4, 4), InstanceMask(inst, {1: BUILDING}))
    assert not out.class_id.any()


def test_only_touched_instance_of_same_class():
    inst = np.zeros((6, 20), dtype=int)
    inst[:, :5] = 1
    inst[:, 15:] = 2
    m = InstanceMask(inst, {1: VEHICLE, 2: VEHICLE})
    out = extract_attended(peaked(6, 20, 3, 2), m)
    assert (out.class_id[:, :5] == VEHICLE).all()
    assert not out.class_id[:, 5:].any()
    assert attended_instance_ids(peaked(6, 20, 3, 2), m) == {1}


def test_attended_ids_reported():
    inst = np.zeros((10, 30), dtype=int)
    inst[:, 0:10] = 3
    inst[:, 10:20] = 5
    inst[:, 20:30] = 7
    v = np.zeros((10, 30))
    v[5, 4] = v[5, 25] = 1.0
    v[5, 15] = 0.1
    ids = attended_instance_ids(AttentionMap(v / v.sum()),
                                InstanceMask(inst, {3: VEHICLE, 5: VEHICLE, 7: CLASSES.id_of("pedestrian")}))
    assert ids == {3, 7}


def test_matches_literal_oracle_on_random_scenes():
    rng = np.random.default_rng(11)
    for _ in range(25):
        sal, inst = random_scene(rng)
        tau = float(rng.uniform(0.05, 0.95))
        want_mask, want_ids = ref_attended(sal.values.tolist(), inst.instance_id.tolist(),
                                           inst.class_of, ROAD, tau)
        got = extract_attended(sal, inst, ThresholdPolicy(tau))
        np.testing.assert_array_equal(got.class_id, np.array(want_mask))
        assert attended_instance_ids(sal, inst, ThresholdPolicy(tau)) == want_ids


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_antitone_in_tau(seed, a, b):
    lo, hi = sorted((a, b))
    sal, inst = random_scene(np.random.default_rng(seed), h=24, w=80, max_inst=8)
    m_lo = extract_attended(sal, inst, ThresholdPolicy(lo)).class_id
    m_hi = extract_attended(sal, inst, ThresholdPolicy(hi)).class_id
    assert ((m_hi == 0) | (m_hi == m_lo)).all()
    assert attended_instance_ids(sal, inst, ThresholdPolicy(hi)) <= attended_instance_ids(sal, inst, ThresholdPolicy(lo))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_class_closure_and_idempotence(seed):
    sal, inst = random_scene(np.random.default_rng(seed), h=24, w=80, max_inst=8)
    out = extract_attended(sal, inst).class_id
    assert set(np.unique(out).tolist()) <= ROAD | {0}
    # every instance is either fully kept or fully dropped
    for iid in np.unique(inst.instance_id):
        region = out[inst.instance_id == iid]
        assert (region == region[0]).all()
    # feeding the output back (as a 0/1 map) keeps exactly the same pixels
    kept = out > 0
    if kept.any():
        again = extract_attended(AttentionMap(kept / kept.sum()), inst, ThresholdPolicy(0.5)).class_id
        np.testing.assert_array_equal(again, out)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        extract_attended(peaked(4, 4, 0, 0), InstanceMask(np.zeros((4, 5), int), {}))


def test_invalid_map_rejected():
    with pytest.raises(InvalidMap):
        extract_attended(AttentionMap.empty(4, 4), InstanceMask(np.zeros((4, 4), int), {}))


def test_class_table_validation():
    with pytest.raises(BadConfig):
        ClassTable({0: "vehicle"})
    with pytest.raises(BadConfig):
        ClassTable({1: "vehicle"})


def test_instance_without_class_rejected():
    with pytest.raises(ValueError):
        InstanceMask(np.ones((2, 2), int), {})


def test_agm_instance_round_trip_and_layout():
    ids = np.array([[0, 1, 1], [2, 2, 0]])
    m = InstanceMask(ids, {1: VEHICLE, 2: BUILDING})
    data = encode_agm(m)
    assert data[:4] == b"AGM1"
    assert data[4:12] == (3).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert data[12] == 1
    assert data[13:15] == (0).to_bytes(2, "little") and data[15:17] == (1).to_bytes(2, "little")
    assert data[13 + 12:].decode() == f"instance_id,class_id\n1,{VEHICLE}\n2,{BUILDING}\n"
    back = decode_agm(data)
    np.testing.assert_array_equal(back.instance_id, ids)
    assert back.class_of == m.class_of


def test_agm_semantic_round_trip():
    m = SemanticMask(np.array([[0, 4], [65535, 1]]))
    data = encode_agm(m)
    assert data[12] == 0 and len(data) == 13 + 8
    np.testing.assert_array_equal(decode_agm(data).class_id, m.class_id)


@pytest.mark.parametrize("data", [b"AGM1", b"XXXX" + bytes(9),
                                  b"AGM1" + (1).to_bytes(4, "little") * 2 + b"\x07" + bytes(2),
                                  b"AGM1" + (1).to_bytes(4, "little") * 2 + b"\x01" + bytes(2)])
def test_agm_rejects_garbage(data):
    with pytest.raises(FormatError):
        decode_agm(data)
