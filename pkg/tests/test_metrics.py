import numpy as np
import pytest

from pitfinder.errors import DimensionMismatchError
from pitfinder.metrics import (
    EvalReport,
    evaluate,
    mean_report,
    read_metrics_csv,
    write_metrics_csv,
)


def test_hand_counted_case():
    # 4x4 with TP=2, FP=1, FN=1
    pred = np.zeros((4, 4), dtype=bool)
    gt = np.zeros((4, 4), dtype=bool)
    pred[0, 0] = gt[0, 0] = True
    pred[1, 1] = gt[1, 1] = True
    pred[2, 2] = True   # false positive
    gt[3, 3] = True     # miss
    r = evaluate(pred, gt, image_id="hand")
    assert (r.tp, r.fp, r.fn, r.tn) == (2, 1, 1, 12)
    assert r.precision == pytest.approx(2 / 3)
    assert r.recall == pytest.approx(2 / 3)
    assert r.f_score == pytest.approx(2 / 3)
    assert r.iou == pytest.approx(1 / 2)


def test_perfect_prediction():
    gt = np.zeros((5, 5), dtype=bool)
    gt[1:3, 1:4] = True
    r = evaluate(gt.copy(), gt)
    assert r.precision == r.recall == r.f_score == r.iou == 1.0


def test_complement_prediction_scores_zero():
    gt = np.zeros((4, 4), dtype=bool)
    gt[:, :2] = True
    r = evaluate(~gt, gt)
    assert r.tp == 0
    assert r.f_score == 0.0
    assert r.iou == 0.0


def test_empty_mask_conventions():
    empty = np.zeros((3, 3), dtype=bool)
    some = empty.copy()
    some[1, 1] = True
    both_empty = evaluate(empty, empty)
    assert (both_empty.precision, both_empty.recall,
            both_empty.f_score, both_empty.iou) == (1.0, 1.0, 1.0, 1.0)
    missed = evaluate(empty, some)
    assert missed.precision == 1.0  # no false alarms raised
    assert missed.recall == 0.0
    assert missed.f_score == 0.0
    assert missed.iou == 0.0
    spurious = evaluate(some, empty)
    assert spurious.precision == 0.0
    assert spurious.recall == 1.0
    assert spurious.f_score == 0.0


def test_counts_partition_the_image():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred = rng.random((9, 13)) < rng.random()
        gt = rng.random((9, 13)) < rng.random()
        r = evaluate(pred, gt)
        assert r.tp + r.fp + r.fn + r.tn == 9 * 13


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        evaluate(np.zeros((2, 2), dtype=bool), np.zeros((3, 2), dtype=bool))


def test_mean_report_and_csv_round_trip(tmp_path):
    reports = [
        EvalReport.from_counts("a", 10, 0, 0, 90),
        EvalReport.from_counts("b", 5, 5, 5, 85),
    ]
    mean = mean_report(reports)
    assert mean.image_id == "mean"
    assert mean.iou == pytest.approx((1.0 + 1 / 3) / 2)
    assert mean.tp == 15
    path = tmp_path / "metrics.csv"
    write_metrics_csv(reports, path)
    rows = read_metrics_csv(path)
    assert [r.image_id for r in rows] == ["a", "b", "mean"]
    assert rows[2].iou == pytest.approx(mean.iou, abs=5e-7)  # 6-decimal CSV
    text = path.read_text().splitlines()
    assert text[0] == "id,precision,recall,f_score,iou,tp,fp,fn,tn"
    assert text[1].startswith("a,1.000000,1.000000,1.000000,1.000000,10,")
