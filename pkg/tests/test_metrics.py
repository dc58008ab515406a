import numpy as np
import pytest

from cibse.metrics import (
    GroundTruth,
    IOU_GRID,
    average_precision,
    early_stop,
    evaluate,
    export_pr_curve,
    iou,
    match_detections,
    pr_csv_text,
    precision_recall,
    render_report,
)
from cibse.pipeline import Detection
from oracles import (
    ap_interp101_ref,
    ap_rectangles,
    early_stop_sim,
    greedy_match,
    independent_evaluate,
    iou_ref,
)


def det(cls, score, box):
    return Detection(cls, score, box)


def random_dets_and_truths(rng, n_pred, n_truth, span=100.0, classes=2):
    def box():
        x1, y1 = rng.uniform(0, span * 0.7, 2)
        return (float(x1), float(y1), float(x1 + rng.uniform(2, span * 0.3)), float(y1 + rng.uniform(2, span * 0.3)))

    preds = [det(int(rng.integers(0, classes)), float(rng.uniform(0.01, 1)), box()) for _ in range(n_pred)]
    truths = [box() for _ in range(n_truth)]
    return preds, truths


class TestIou:
    def test_identical(self):
        assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0

    def test_area_arithmetic(self):
        assert abs(iou((0, 0, 2, 2), (1, 1, 3, 3)) - 1 / 7) < 1e-12

    def test_zero_union(self):
        assert iou((0, 0, 0, 0), (0, 0, 0, 0)) == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_against_reference(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(20):
            a = sorted(rng.uniform(0, 10, 2).tolist()) + sorted(rng.uniform(0, 10, 2).tolist())
            a = (a[0], a[2], a[1], a[3])
            b = sorted(rng.uniform(0, 10, 2).tolist()) + sorted(rng.uniform(0, 10, 2).tolist())
            b = (b[0], b[2], b[1], b[3])
            assert abs(iou(a, b) - iou_ref(a, b)) < 1e-12


class TestMatching:
    def test_exact_hit(self):
        preds = [det(0, 0.9, (0, 0, 10, 10))]
        flags, fn = match_detections(preds, [(0, 0, 10, 10)], 0.5)
        assert flags == [True] and fn == 0

    def test_one_match_rule(self):
        preds = [det(0, 0.9, (0, 0, 10, 10)), det(0, 0.8, (0, 0, 10, 10))]
        flags, fn = match_detections(preds, [(0, 0, 10, 10)], 0.5)
        assert flags == [True, False] and fn == 0

    def test_higher_score_wins_regardless_of_order(self):
        preds = [det(0, 0.8, (0, 0, 10, 10)), det(0, 0.9, (0, 0, 10, 10))]
        flags, _ = match_detections(preds, [(0, 0, 10, 10)], 0.5)
        assert flags == [False, True]

    def test_unmatched_truths_are_fn(self):
        flags, fn = match_detections([], [(0, 0, 1, 1), (2, 2, 3, 3)], 0.5)
        assert flags == [] and fn == 2

    @pytest.mark.parametrize("seed", range(15))
    def test_matches_greedy_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        preds, truths = random_dets_and_truths(rng, 30, 10, classes=1)
        got = match_detections(preds, truths, 0.5)
        assert got == tuple(greedy_match(preds, truths, 0.5))


class TestPrecisionRecall:
    def test_perfect(self):
        assert precision_recall(1, 0, 0) == (1.0, 1.0)

    def test_zero_denominators(self):
        assert precision_recall(0, 0, 5) == (0.0, 0.0)
        assert precision_recall(0, 0, 0) == (0.0, 0.0)

    def test_published_operating_point_arithmetic(self):
        p, r = precision_recall(813, 96, 187)
        assert abs(p - 813 / 909) < 1e-12
        assert abs(r - 0.813) < 1e-12
        assert f"{p:.3f}" == "0.894"


class TestAveragePrecision:
    def test_all_tp_covering_all_truths(self):
        assert average_precision([True] * 5, 5, "exact") == 1.0
        assert average_precision([True] * 5, 5, "interp101") == 1.0

    def test_no_predictions(self):
        assert average_precision([], 3, "exact") == 0.0
        assert average_precision([], 3, "interp101") == 0.0

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            average_precision([True], 1, "voc11")

    @pytest.mark.parametrize("seed", range(25))
    def test_exact_equals_rectangle_oracle(self, seed):
        rng = np.random.default_rng(1100 + seed)
        n = int(rng.integers(1, 50))
        flags = rng.random(n) < 0.5
        n_truth = int(rng.integers(max(1, flags.sum()), flags.sum() + 20))
        got = average_precision(flags.tolist(), n_truth, "exact")
        assert abs(got - ap_rectangles(flags.tolist(), n_truth)) <= 1e-9

    @pytest.mark.parametrize("seed", range(25))
    def test_interp101_close_to_exact(self, seed):
        rng = np.random.default_rng(1200 + seed)
        n = int(rng.integers(1, 50))
        flags = rng.random(n) < 0.5
        n_truth = int(rng.integers(max(1, flags.sum()), flags.sum() + 20))
        exact = average_precision(flags.tolist(), n_truth, "exact")
        i101 = average_precision(flags.tolist(), n_truth, "interp101")
        assert abs(i101 - exact) <= 0.02
        assert abs(i101 - ap_interp101_ref(flags.tolist(), n_truth)) <= 1e-9

    def test_lowest_confidence_fp_never_increases_ap(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            flags = (rng.random(int(rng.integers(1, 30))) < 0.6).tolist()
            n_truth = sum(flags) + int(rng.integers(0, 5))
            if n_truth == 0:
                continue
            base = average_precision(flags, n_truth, "exact")
            worse = average_precision(flags + [False], n_truth, "exact")
            assert worse <= base + 1e-12

    def test_highest_confidence_tp_never_decreases_ap(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            flags = (rng.random(int(rng.integers(1, 30))) < 0.6).tolist()
            n_truth = sum(flags) + 1 + int(rng.integers(0, 5))
            base = average_precision(flags, n_truth, "exact")
            better = average_precision([True] + flags, n_truth, "exact")
            assert better >= base - 1e-12

    def test_ap_in_unit_interval(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            flags = (rng.random(int(rng.integers(1, 40))) < 0.5).tolist()
            n_truth = max(1, sum(flags) + int(rng.integers(-2, 8)))
            v = average_precision(flags, max(n_truth, sum(flags)), "exact")
            assert 0.0 <= v <= 1.0


def toy_dataset(rng, n_images=8, classes=2, max_truth=4, max_pred=5, span=60.0):
    gts = []
    preds_by_image = {}
    for i in range(n_images):
        img = f"img{i:03d}"
        truths = []
        for _ in range(int(rng.integers(0, max_truth + 1))):
            x1, y1 = rng.uniform(0, span * 0.6, 2)
            b = (float(x1), float(y1), float(x1 + rng.uniform(4, span * 0.4)), float(y1 + rng.uniform(4, span * 0.4)))
            c = int(rng.integers(0, classes))
            truths.append(GroundTruth(c, b, img))
        gts.extend(truths)
        dets = []
        for _ in range(int(rng.integers(0, max_pred + 1))):
            if truths and rng.random() < 0.6:
                g = truths[int(rng.integers(0, len(truths)))]
                j = rng.uniform(-4, 4, 4)
                xa, xb = sorted((g.box[0] + j[0], g.box[2] + j[1]))
                ya, yb = sorted((g.box[1] + j[2], g.box[3] + j[3]))
                b = (xa, ya, xb + 0.5, yb + 0.5)
                cls = g.class_id if rng.random() < 0.85 else int(rng.integers(0, classes))
            else:
                x1, y1 = rng.uniform(0, span * 0.6, 2)
                b = (float(x1), float(y1), float(x1 + rng.uniform(4, span * 0.4)), float(y1 + rng.uniform(4, span * 0.4)))
                cls = int(rng.integers(0, classes))
            dets.append(det(cls, float(rng.uniform(0.05, 1.0)), tuple(float(v) for v in b)))
        preds_by_image[img] = dets
    return preds_by_image, gts


class TestEvaluate:
    def test_perfect_detector(self):
        gts = [GroundTruth(c, (10.0 * c, 0.0, 10.0 * c + 5, 5.0), f"i{k}") for k in range(3) for c in (0, 1)]
        preds = {}
        for g in gts:
            preds.setdefault(g.image_id, []).append(det(g.class_id, 0.9, g.box))
        r = evaluate(preds, gts)
        assert r.precision == r.recall == r.map50 == r.map50_95 == 1.0
        assert r.fp == r.fn == 0 and r.tp == len(gts)

    def test_empty_predictions(self):
        gts = [GroundTruth(0, (0.0, 0.0, 5.0, 5.0), "a")]
        r = evaluate({}, gts)
        assert r.precision == r.recall == r.map50 == r.map50_95 == 0.0
        assert r.fn == 1

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_independent_evaluator(self, seed):
        rng = np.random.default_rng(1300 + seed)
        preds, gts = toy_dataset(rng)
        got = evaluate(preds, gts, method="exact")
        want = independent_evaluate(preds, gts, IOU_GRID)
        assert abs(got.map50 - want["map50"]) <= 1e-9
        assert abs(got.map50_95 - want["map50_95"]) <= 1e-9
        assert abs(got.precision - want["precision"]) <= 1e-9
        assert abs(got.recall - want["recall"]) <= 1e-9
        assert abs(got.conf - want["conf"]) <= 1e-12
        for c, ap in want["ap50"].items():
            assert abs(got.per_class[c].ap50 - ap) <= 1e-9

    def test_score_transform_invariance(self):
        rng = np.random.default_rng(11)
        preds, gts = toy_dataset(rng)
        squared = {
            img: [det(d.class_id, d.score**2, d.box) for d in ds] for img, ds in preds.items()
        }
        a = evaluate(preds, gts, method="exact")
        b = evaluate(squared, gts, method="exact")
        assert a.map50 == b.map50 and a.map50_95 == b.map50_95
        assert a.precision == b.precision and a.recall == b.recall

    def test_image_partition_invariance(self):
        rng = np.random.default_rng(12)
        preds, gts = toy_dataset(rng, n_images=6)
        renamed_preds = {f"x_{k}": v for k, v in preds.items()}
        renamed_gts = [GroundTruth(g.class_id, g.box, f"x_{g.image_id}") for g in gts]
        a = evaluate(preds, gts, method="exact")
        b = evaluate(renamed_preds, renamed_gts, method="exact")
        assert a.map50 == b.map50 and a.map50_95 == b.map50_95

    def test_conf_eval_override(self):
        rng = np.random.default_rng(13)
        preds, gts = toy_dataset(rng)
        r = evaluate(preds, gts, conf_eval=0.5)
        assert r.conf == 0.5


class TestPrCurve:
    def test_perfect_detector_single_segment(self):
        gts = [GroundTruth(0, (0.0, 0.0, 5.0, 5.0), f"i{k}") for k in range(4)]
        preds = {g.image_id: [det(0, 0.9, g.box)] for g in gts}
        r = evaluate(preds, gts)
        pts = export_pr_curve(r)[0]
        assert pts[0] == (0.0, 1.0) and pts[-1] == (1.0, 1.0)
        assert all(p == 1.0 for _, p in pts)

    def test_no_detections_empty_points(self):
        gts = [GroundTruth(0, (0.0, 0.0, 5.0, 5.0), "a"), GroundTruth(1, (8.0, 8.0, 12.0, 12.0), "a")]
        preds = {"a": [det(0, 0.9, gts[0].box)]}
        r = evaluate(preds, gts)
        curves = export_pr_curve(r)
        assert curves[1] == []
        assert curves[0][0] == (0.0, 1.0)

    def test_envelope_oracle(self):
        # TP(0.9), FP(0.8), TP(0.7) against 2 truths
        gts = [GroundTruth(0, (0.0, 0.0, 10.0, 10.0), "a"), GroundTruth(0, (50.0, 50.0, 60.0, 60.0), "b")]
        preds = {
            "a": [det(0, 0.9, (0.0, 0.0, 10.0, 10.0)), det(0, 0.8, (30.0, 30.0, 35.0, 35.0))],
            "b": [det(0, 0.7, (50.0, 50.0, 60.0, 60.0))],
        }
        r = evaluate(preds, gts)
        pts = export_pr_curve(r)[0]
        # step envelope with the vertical drop at recall 0.5 made explicit
        assert pts == [(0.0, 1.0), (0.5, 1.0), (0.5, 2 / 3), (1.0, 2 / 3)]

    def test_csv_format(self):
        gts = [GroundTruth(0, (0.0, 0.0, 5.0, 5.0), "a")]
        preds = {"a": [det(0, 0.875, (0.0, 0.0, 5.0, 5.0))]}
        text = pr_csv_text(evaluate(preds, gts))
        lines = text.split("\n")
        assert lines[0] == "class,recall,precision"
        assert lines[1] == "0,0.000000,1.000000"
        assert lines[2] == "0,1.000000,1.000000"
        assert "mean,0.000000,1.000000" in lines
        assert text.endswith("\n") and "\r" not in text

    def test_mean_curve_has_101_points(self):
        rng = np.random.default_rng(14)
        preds, gts = toy_dataset(rng)
        curves = export_pr_curve(evaluate(preds, gts))
        assert len(curves["mean"]) == 101

    def test_golden_file(self):
        from pathlib import Path

        gts = [
            GroundTruth(0, (0.0, 0.0, 10.0, 10.0), "a"),
            GroundTruth(0, (50.0, 50.0, 60.0, 60.0), "b"),
            GroundTruth(1, (0.0, 20.0, 8.0, 28.0), "a"),
            GroundTruth(1, (70.0, 70.0, 80.0, 80.0), "b"),
        ]
        preds = {
            "a": [
                det(0, 0.9, (0.0, 0.0, 10.0, 10.0)),
                det(0, 0.8, (30.0, 30.0, 35.0, 35.0)),
                det(1, 0.6, (0.0, 20.0, 8.0, 28.0)),
            ],
            "b": [det(0, 0.7, (50.0, 50.0, 60.0, 60.0))],
        }
        text = pr_csv_text(evaluate(preds, gts))
        golden = (Path(__file__).parent / "golden" / "pr_curve.csv").read_bytes()
        assert text.encode() == golden


class TestRenderReport:
    def test_table_shape(self):
        gts = [GroundTruth(0, (0.0, 0.0, 5.0, 5.0), "a")]
        preds = {"a": [det(0, 0.9, (0.0, 0.0, 5.0, 5.0))]}
        text = render_report("cib-se-yolov8", evaluate(preds, gts))
        lines = text.splitlines()
        assert [f.strip() for f in lines[0].split(" | ")] == ["Model", "Precision", "Recall", "mAP50", "mAP50-95"]
        assert lines[1].startswith("cib-se-yolov8")
        assert "1.000" in lines[1]


class TestEarlyStop:
    def test_strictly_increasing_never_stops(self):
        stop, best = early_stop(list(range(30)), 10)
        assert (stop, best) == (30, 30)

    def test_peak_then_flat_stops_after_patience(self):
        history = [0.1, 0.2, 0.3, 0.4, 0.9] + [0.5] * 20
        stop, best = early_stop(history, 10)
        assert (stop, best) == (15, 5)

    def test_ties_keep_first_best(self):
        stop, best = early_stop([0.5, 0.5, 0.5], 10)
        assert best == 1 and stop == 3

    def test_improvement_resets_patience(self):
        history = [0.1] + [0.05] * 9 + [0.2] + [0.1] * 10
        stop, best = early_stop(history, 10)
        assert (stop, best) == (21, 11)

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            early_stop([], 10)

    def test_bad_patience(self):
        with pytest.raises(ValueError):
            early_stop([1.0], 0)

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_simulation_oracle(self, seed):
        rng = np.random.default_rng(1400 + seed)
        history = rng.random(int(rng.integers(1, 60))).tolist()
        patience = int(rng.integers(1, 12))
        assert early_stop(history, patience) == early_stop_sim(history, patience)

    def test_best_value_dominates_history(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            history = rng.random(int(rng.integers(1, 40))).tolist()
            stop, best = early_stop(history, 10)
            assert history[best - 1] >= max(history[:stop])
