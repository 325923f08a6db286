import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaze360.dataset import (
    CalibratedFixation,
    FrameEntry,
    GazeStats,
    SessionManifest,
    SplitSpec,
    ViewConcatSpec,
    assign_split,
    concat_view_transform,
    dumps_manifest,
    gaze_statistics,
    loads_manifest,
    read_manifest,
    session_statistics,
    window_sampler,
)
from gaze360.errors import BadConfig, FormatError, InsufficientHistory, OutOfBounds, UnknownTown
from gaze360.geometry import ScreenLayout, ScreenSpec

SPEC = ViewConcatSpec()
VIEWS = [f"views/{i}.png" for i in range(5)]


def manifest(n=120, town=3, driver="C001"):
    frames = [FrameEntry(i, VIEWS, (i / 30, (i + 1) / 30), "detections.csv") for i in range(n)]
    return SessionManifest("s1", driver, town, "goal-directed", "ClearNoon", frames)


def five_screen_layout():
    roles = ["mirror-left", "front-left", "front-center", "front-right", "mirror-right"]
    screens = []
    for i, role in enumerate(roles):
        x0 = 224 * i
        quad = ((x0, 0), (x0 + 224, 0), (x0 + 224, 224), (x0, 224))
        screens.append(ScreenSpec(i, role, quad, {i: ((0, 0), (0.1, 0), (0.1, 0.1), (0, 0.1))}))
    return ScreenLayout(screens)


def fixes(screens):
    return [CalibratedFixation(i, i / 30, 0.0, 0.0, s) for i, s in enumerate(screens)]


# ---------------------------------------------------------------------------
# view concatenation


def test_concat_examples():
    assert concat_view_transform(SPEC, 0, (0, 0)) == (0, 0)
    assert concat_view_transform(SPEC, 2, (640, 360)) == (560, 112)
    with pytest.raises(OutOfBounds):
        concat_view_transform(SPEC, 5, (0, 0))
    with pytest.raises(OutOfBounds):
        concat_view_transform(SPEC, 0, (1280, 0))


@given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 1279), st.integers(0, 719),
       st.integers(0, 1279), st.integers(0, 719))
def test_concat_injective_and_in_range(i, j, u1, v1, u2, v2):
    a = concat_view_transform(SPEC, i, (u1, v1))
    b = concat_view_transform(SPEC, j, (u2, v2))
    assert 0 <= a[0] < 1120 and 0 <= a[1] < 224
    assert 224 * i <= a[0] < 224 * (i + 1)
    if (i, u1, v1) != (j, u2, v2):
        assert a != b


def test_concat_spec_validation():
    with pytest.raises(BadConfig):
        ViewConcatSpec(order=("front-center",) * 5)
    assert SPEC.view_index("front-center") == 2


# ---------------------------------------------------------------------------
# splits


def test_split_examples():
    assert assign_split(manifest(town=3)) == "train"
    assert assign_split(manifest(town=5)) == "val"
    with pytest.raises(UnknownTown):
        assign_split(manifest(town=99))


def test_split_default_towns():
    assert SplitSpec().train_towns == {2, 3, 4, 7, 10, 11}
    assert SplitSpec().val_towns == {1, 5, 6, 12, 15}
    with pytest.raises(BadConfig):
        SplitSpec({1, 2}, {2, 3})


def test_flagged_town_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert assign_split(manifest(town=12)) == "val"
    assert "town 12" in caplog.text


@given(st.integers(-5, 40))
def test_split_is_partition(town):
    spec = SplitSpec()
    try:
        got = assign_split(manifest(n=1, town=town), spec)
    except UnknownTown:
        assert town not in spec.train_towns | spec.val_towns
    else:
        assert (got == "train") == (town in spec.train_towns)


# ---------------------------------------------------------------------------
# statistics


def test_stats_all_front_center():
    st_ = session_statistics(manifest(), fixes([2] * 50), five_screen_layout())
    assert st_.role_fractions() == {"front-center": 1.0}
    assert st_.rear_fraction == 0.0


def test_stats_six_percent_mirror():
    screens = [0] * 3 + [4] * 3 + [2] * 94
    st_ = session_statistics(manifest(), fixes(screens), five_screen_layout())
    assert st_.rear_fraction == 0.06
    assert sum(st_.screen_fractions().values()) == pytest.approx(1.0)


def test_stats_empty():
    st_ = gaze_statistics([], five_screen_layout())
    assert st_.assigned == 0 and st_.rear_fraction == 0.0 and st_.screen_fractions() == {}


def test_stats_merge_and_unassigned():
    layout = five_screen_layout()
    a = session_statistics(manifest(n=30, driver="C001"), fixes([0, None, 2]), layout)
    b = session_statistics(manifest(n=60, town=5, driver="C002"), fixes([2, 2]), layout)
    both = a.merge(b)
    assert both.assigned == 4 and both.unassigned == 1
    assert both.to_json()["town_durations_s"] == {"3": 1.0, "5": 2.0}
    assert both.to_json()["driver_frames"] == {"C001": 30, "C002": 60}
    assert b.merge(a).to_json() == both.to_json()
    assert isinstance(GazeStats().to_json(), dict)


# ---------------------------------------------------------------------------
# clip sampling


def test_window_sampler_examples():
    m = manifest()
    assert window_sampler(m, 15) == list(range(16))
    assert window_sampler(m, 100) == list(range(85, 101))
    with pytest.raises(InsufficientHistory):
        window_sampler(m, 3)
    with pytest.raises(OutOfBounds):
        window_sampler(m, 500)


# ---------------------------------------------------------------------------
# manifests


def test_manifest_round_trip(tmp_path):
    m = manifest(n=5)
    m.frames[2].instances = "instances/frame_000002.agm"
    text = dumps_manifest(m)
    assert loads_manifest(text) == m
    (tmp_path / "m.jsonl").write_text(text)
    assert read_manifest(tmp_path / "m.jsonl") == m
    assert dumps_manifest(loads_manifest(text)) == text


def test_manifest_validation():
    with pytest.raises(BadConfig):
        SessionManifest("s", "d", 3, "joyride", "ClearNoon")
    with pytest.raises(BadConfig):
        SessionManifest("s", "d", 3, "unscripted", "ClearNoon", fps=25)
    with pytest.raises(BadConfig):
        SessionManifest("s", "d", 3, "unscripted", "ClearNoon",
                        [FrameEntry(0, VIEWS, (0, 0), "d"), FrameEntry(2, VIEWS, (0, 0), "d")])
    with pytest.raises(BadConfig):
        SessionManifest("s", "d", 3, "unscripted", "ClearNoon", [FrameEntry(0, VIEWS[:4], (0, 0), "d")])
    with pytest.raises(FormatError):
        loads_manifest('{"type": "frame"}\n')
