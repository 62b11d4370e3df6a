import numpy as np
import pytest
from hypothesis import given, strategies as st

from trackheads.core import Box, Mask, Pose
from trackheads.metrics import (TrackSet, clear_metrics, evaluate, format_report, idf1, identity_scores,
                                mask_iou, pck)


def two_objects(n=20, swap_at=None, swap_both=True, third_id=3):
    """GT: objects 1 and 2 on parallel lanes. Pred mirrors them, optionally
    relabeling from frame ``swap_at`` on."""
    gt, pred = TrackSet(), TrackSet()
    for f in range(1, n + 1):
        a, b = Box(10 + 2 * f, 20, 10, 10), Box(10 + 2 * f, 80, 10, 10)
        gt.add(f, 1, a)
        gt.add(f, 2, b)
        late = swap_at is not None and f >= swap_at
        if late and swap_both:
            pred.add(f, 2, a)
            pred.add(f, 1, b)
        else:
            pred.add(f, third_id if late else 1, a)
            pred.add(f, 2, b)
    return gt, pred


def test_perfect():
    gt, pred = two_objects()
    m = evaluate(gt, pred)
    assert m["MOTA"] == 1.0 and m["IDs"] == 0 and m["IDF1"] == 1.0


def test_empty_predictions():
    gt, _ = two_objects()
    m = evaluate(gt, TrackSet())
    assert m["MOTA"] <= 0 and m["FN"] == 40 and m["IDF1"] == 0.0


def test_mid_sequence_swap_counts_two():
    # Hand count: from frame 11 both objects change predicted id once.
    gt, pred = two_objects(swap_at=11)
    m = clear_metrics(gt, pred)
    assert m["IDs"] == 2 and m["FP"] == 0 and m["FN"] == 0
    assert m["MOTA"] == pytest.approx(1 - 2 / 40)


def test_half_relabel_idf1_hand_count():
    # Object 1 carries pred id 1 for frames 1..10 and id 3 for 11..20; object 2 is clean.
    # Best identity map: 1->1 (10) and 2->2 (20), so IDTP = 30 and IDF1 = 60 / 80.
    gt, pred = two_objects(swap_at=11, swap_both=False)
    s = identity_scores(gt, pred)
    assert s["IDTP"] == 30 and s["IDFP"] == 10 and s["IDFN"] == 10
    assert s["IDF1"] == pytest.approx(0.75)
    assert clear_metrics(gt, pred)["IDs"] == 1


def test_half_swap_between_objects_idf1():
    # Overlaps are 10 for every gt/pred pair, so IDTP = 20 of 40 on each side.
    gt, pred = two_objects(swap_at=11)
    assert idf1(gt, pred) == pytest.approx(0.5)


def test_carry_over_keeps_previous_match():
    # Two predictions overlap gt 1 equally well in frame 2; the carried match wins.
    gt, pred = TrackSet(), TrackSet()
    g = Box(50, 50, 20, 20)
    for f in (1, 2):
        gt.add(f, 1, g)
    pred.add(1, 5, g)
    pred.add(2, 4, Box(51, 50, 20, 20))
    pred.add(2, 5, Box(49, 50, 20, 20))
    assert clear_metrics(gt, pred)["IDs"] == 0


def test_masks_and_iou():
    a = np.zeros((6, 6), bool)
    a[:3] = True
    assert mask_iou(Mask(a), Mask(a)) == 1.0
    assert mask_iou(Mask(a), Mask(~a)) == 0.0
    gt, pred = TrackSet(), TrackSet()
    gt.add(1, 1, Mask(a))
    pred.add(1, 9, Mask(a))
    assert evaluate(gt, pred)["IDF1"] == 1.0


def test_pck_boundary():
    gt = Pose([[0, 0], [100, 0]])                   # body size 100, threshold 10 at delta 0.1
    assert pck(gt, Pose([[10, 0], [100, 0]])) == 1.0
    assert pck(gt, Pose([[10.01, 0], [100, 0]])) == 0.5
    assert pck(gt, Pose([[0, 0], [100, 0]], [True, False])) == 0.5


def test_trackset_rejects_bad_ids():
    ts = TrackSet()
    with pytest.raises(ValueError):
        ts.add(1, 0, Box(1, 1, 1, 1))
    ts.add(1, 1, Box(1, 1, 1, 1))
    with pytest.raises(ValueError):
        ts.add(1, 1, Box(1, 1, 1, 1))


def test_report_lists_summary():
    gt, pred = two_objects()
    text = format_report(evaluate(gt, pred))
    assert "IDF1=1.000000" in text and "IDs=0" in text


@st.composite
def track_sets(draw):
    n_frames = draw(st.integers(1, 8))
    n_obj = draw(st.integers(1, 4))
    gt, pred = TrackSet(), TrackSet()
    for f in range(1, n_frames + 1):
        for k in range(1, n_obj + 1):
            b = Box(30.0 * k + f, 40.0, 12, 12)
            if draw(st.booleans()) or f == 1:
                gt.add(f, k, b)
            if draw(st.booleans()):
                pred.add(f, draw(st.sampled_from([10 + k, 20 + k])), Box(b.u + draw(st.sampled_from([0, 3, 15])), b.v, 12, 12))
    return gt, pred


@given(track_sets(), st.randoms(use_true_random=False))
def test_relabel_invariance(sets, rnd):
    gt, pred = sets
    ids = pred.ids()
    perm = ids[:]
    rnd.shuffle(perm)
    m1, m2 = evaluate(gt, pred), evaluate(gt, pred.relabeled(dict(zip(ids, [p + 100 for p in perm]))))
    assert m1 == pytest.approx(m2)


@given(track_sets())
def test_perfect_iff_bijection(sets):
    gt, _ = sets
    mapping = {i: 7 * i for i in gt.ids()}
    m = evaluate(gt, gt.relabeled(mapping))
    assert m["IDF1"] == 1.0 and m["MOTA"] == 1.0
    # Dropping any single entry breaks both.
    f = min(gt.frames)
    i = min(gt.frames[f])
    pred = gt.relabeled(mapping)
    del pred.frames[f][7 * i]
    m = evaluate(gt, pred)
    assert m["IDF1"] < 1.0 and m["MOTA"] < 1.0


@given(track_sets())
def test_bounds(sets):
    m = evaluate(*sets)
    assert 0.0 <= m["IDF1"] <= 1.0 and m["MOTA"] <= 1.0 and m["IDs"] >= 0
