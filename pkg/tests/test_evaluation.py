import numpy as np
import pytest

from poe_supcon.dataset import CognitiveLabel, Dataset, Gender, Language, Sample
from poe_supcon.evaluation import (ConfusionMatrix, FoldReport, MetricSet,
                                   SubgroupResult, aggregate_metrics,
                                   build_run_report, compute_metrics,
                                   confusion_from_predictions, disparity,
                                   picture_separability, report_from_json,
                                   report_to_json, subgroup_metrics,
                                   all_subgroup_results, write_fold_uar_tsv,
                                   write_report_csv)
from poe_supcon.numerics import Rng

from oracles import metrics_exact, silhouette_bruteforce


class TestComputeMetrics:
    def test_worked_fixture(self):
        ms = compute_metrics(ConfusionMatrix(tp=3, fn=1, tn=2, fp=2))
        assert ms.sensitivity == pytest.approx(0.75)
        assert ms.specificity == pytest.approx(0.5)
        assert ms.precision == pytest.approx(0.6)
        assert ms.uar == pytest.approx(0.625)
        assert ms.f1 == pytest.approx(0.666667, abs=1e-6)

    def test_perfect_classifier(self):
        ms = compute_metrics(ConfusionMatrix(tp=5, tn=7, fp=0, fn=0))
        assert ms.uar == 1.0 and ms.f1 == 1.0

    def test_all_negative_ground_truth(self):
        ms = compute_metrics(ConfusionMatrix(tp=0, fp=0, fn=0, tn=4))
        assert ms.sensitivity is None
        assert ms.precision is None
        assert ms.f1 is None
        assert ms.specificity == 1.0
        assert ms.uar is None

    def test_agrees_with_exact_arithmetic_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            tp, tn, fp, fn = (int(v) for v in rng.integers(0, 6, size=4))
            ms = compute_metrics(ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn))
            expected = metrics_exact(tp, tn, fp, fn)
            for name, exact in expected.items():
                got = getattr(ms, name)
                if exact is None:
                    assert got is None
                else:
                    assert got == pytest.approx(float(exact), abs=1e-15)

    def test_uar_invariant_to_duplicating_negatives(self):
        base = ConfusionMatrix(tp=3, fn=2, tn=4, fp=1)
        doubled = ConfusionMatrix(tp=3, fn=2, tn=8, fp=2)
        assert compute_metrics(base).uar == pytest.approx(compute_metrics(doubled).uar)

    def test_confusion_from_predictions(self):
        cm = confusion_from_predictions([1, 1, 0, 0], [1, 0, 0, 1])
        assert (cm.tp, cm.fn, cm.tn, cm.fp) == (1, 1, 1, 1)
        assert cm.total == 4


def _eight_sample_dataset():
    rows = [
        # (language, gender, label, pred)
        (Language.EN, Gender.M, 1, 1),
        (Language.EN, Gender.M, 1, 0),
        (Language.EN, Gender.M, 0, 0),
        (Language.EN, Gender.M, 0, 1),
        (Language.ZH, Gender.F, 1, 1),
        (Language.ZH, Gender.F, 1, 1),
        (Language.ZH, Gender.F, 0, 0),
        (Language.ZH, Gender.F, 1, 0),
    ]
    samples, preds = [], []
    for i, (lang, gender, label, pred) in enumerate(rows):
        sid = f"s{i}"
        pic = 1 if lang == Language.EN else 4
        samples.append(Sample(sample_id=sid, participant_id=f"p{i}", picture_id=pic,
                              language=lang, gender=gender,
                              label=CognitiveLabel(label), row_index=i))
        preds.append({"sample_id": sid, "label": label, "pred": pred})
    return Dataset(samples=samples, blocks={}), preds


class TestSubgroups:
    def test_hand_fixture_per_language(self):
        ds, preds = _eight_sample_dataset()
        by_lang = subgroup_metrics(preds, ds, "language")
        en, zh = by_lang["En"], by_lang["Zh"]
        assert (en.confusion.tp, en.confusion.fn, en.confusion.tn, en.confusion.fp) == (1, 1, 1, 1)
        assert en.metrics.uar == pytest.approx(0.5)
        assert zh.metrics.sensitivity == pytest.approx(2 / 3)
        assert zh.metrics.specificity == pytest.approx(1.0)
        assert zh.metrics.uar == pytest.approx(5 / 6)

    def test_language_counts_sum_to_both(self):
        ds, preds = _eight_sample_dataset()
        results = all_subgroup_results(preds, ds)
        both, en, zh = results["Both"], results["En"], results["Zh"]
        for attr in ("tp", "tn", "fp", "fn"):
            assert getattr(both.confusion, attr) == \
                getattr(en.confusion, attr) + getattr(zh.confusion, attr)
        assert both.size == en.size + zh.size == 8

    def test_empty_subgroup_is_undefined_with_size_zero(self):
        ds, preds = _eight_sample_dataset()
        only_en = [p for p in preds if p["sample_id"] in {"s0", "s1", "s2", "s3"}]
        zh = subgroup_metrics(only_en, ds, "language")["Zh"]
        assert zh.size == 0
        assert zh.metrics.uar is None and zh.metrics.f1 is None

    def test_unknown_axis_and_unknown_sample(self):
        ds, preds = _eight_sample_dataset()
        with pytest.raises(KeyError, match="axis"):
            subgroup_metrics(preds, ds, "age")
        with pytest.raises(KeyError, match="unknown sample_id"):
            subgroup_metrics([{"sample_id": "ghost", "label": 0, "pred": 0}], ds, "both")


class TestPictureSeparability:
    def test_two_tight_clusters_score_high(self):
        rng = Rng(4)
        a = rng.split("a").normal(size=(10, 3)) * 0.01
        b = rng.split("b").normal(size=(10, 3)) * 0.01 + 10.0
        x = np.vstack([a, b])
        ids = [1] * 10 + [2] * 10
        assert picture_separability(x, ids) > 0.9

    def test_all_identical_embeddings_score_zero(self):
        x = np.ones((6, 4))
        assert picture_separability(x, [1, 1, 1, 2, 2, 2]) == 0.0

    def test_six_point_fixture_matches_bruteforce(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.2],
                      [5.0, 5.0], [6.0, 5.0], [5.5, 4.0]])
        ids = [1, 1, 1, 2, 2, 2]
        assert picture_separability(x, ids) == pytest.approx(
            silhouette_bruteforce(x, ids), abs=1e-12)

    def test_singleton_picture_excluded_with_note(self):
        x = np.array([[0.0, 0.0], [0.1, 0.0], [9.0, 9.0], [9.1, 9.0], [50.0, 50.0]])
        ids = [1, 1, 2, 2, 3]
        with pytest.warns(UserWarning, match="singleton"):
            value = picture_separability(x, ids)
        assert value == pytest.approx(
            silhouette_bruteforce(x[:4], ids[:4]), abs=1e-12)

    def test_degenerate_clustering_rejected(self):
        with pytest.warns(UserWarning, match="singleton"):
            with pytest.raises(ValueError, match=">= 2 pictures"):
                picture_separability(np.zeros((3, 2)), [1, 1, 2])


def _toy_report(uars):
    """RunReport with given per-subgroup aggregate UARs (rest None)."""
    aggregate = {name: MetricSet(uar=value) for name, value in uars.items()}
    return build_run_report({}, [], []) if not aggregate else type(
        "R", (), {"aggregate": aggregate})()


class TestDisparity:
    def test_language_fixture(self):
        report = _toy_report({"En": 0.58, "Zh": 0.834})
        assert disparity(report, "language") == pytest.approx(0.254)

    def test_gender_fixture(self):
        report = _toy_report({"M": 0.785, "F": 0.732})
        assert disparity(report, "gender") == pytest.approx(0.053)

    def test_equal_subgroups_give_zero(self):
        report = _toy_report({"En": 0.7, "Zh": 0.7})
        assert disparity(report, "language") == 0.0

    def test_undefined_subgroup_raises(self):
        report = _toy_report({"En": 0.7, "Zh": None})
        with pytest.raises(ValueError, match="undefined"):
            disparity(report, "language")
        with pytest.raises(ValueError, match="axis"):
            disparity(report, "height")


def _fold_report(i, uar_by_subgroup):
    subgroups = {}
    for name, uar in uar_by_subgroup.items():
        cm = ConfusionMatrix(tp=2, tn=2, fp=1, fn=1)
        ms = compute_metrics(cm)
        ms.uar = uar
        subgroups[name] = SubgroupResult(size=cm.total, confusion=cm, metrics=ms)
    return FoldReport(fold_index=i, validation_ids=[f"v{i}"], subgroups=subgroups,
                      train_loss_per_epoch=[1.0, 0.5])


class TestReports:
    NAMES = ("Both", "En", "Zh", "M", "F")

    def test_aggregate_is_mean_over_folds(self):
        folds = [_fold_report(0, {n: 0.6 for n in self.NAMES}),
                 _fold_report(1, {n: 0.8 for n in self.NAMES})]
        report = build_run_report({"seed": 1}, folds, [])
        assert report.aggregate["Both"].uar == pytest.approx(0.7)

    def test_aggregate_skips_undefined_folds(self):
        folds = [_fold_report(0, {n: 0.6 for n in self.NAMES}),
                 _fold_report(1, {n: None for n in self.NAMES})]
        report = build_run_report({}, folds, [])
        assert report.aggregate["En"].uar == pytest.approx(0.6)

    def test_pooled_aggregate_sums_confusions(self):
        folds = [_fold_report(0, {n: 0.1 for n in self.NAMES}),
                 _fold_report(1, {n: 0.9 for n in self.NAMES})]
        report = build_run_report({}, folds, [])
        # each fold cm is tp2 tn2 fp1 fn1 -> pooled tp4 tn4 fp2 fn2
        assert report.aggregate_pooled["Both"].uar == pytest.approx(2 / 3)

    def test_json_round_trip_is_lossless(self):
        folds = [_fold_report(0, {n: 1 / 3 for n in self.NAMES})]
        preds = [{"sample_id": "v0", "fold": 0, "label": 1, "pred": 0, "p_mci": 0.25}]
        report = build_run_report({"seed": 7, "fusion": "poe"}, folds, preds)
        text = report_to_json(report)
        assert report_to_json(report_from_json(text)) == text

    def test_csv_and_tsv_outputs(self, tmp_path):
        folds = [_fold_report(0, {n: 0.5 for n in self.NAMES}),
                 _fold_report(1, {n: None for n in self.NAMES})]
        report = build_run_report({}, folds, [])
        write_report_csv([("cfg", report)], tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 5  # header + one row per subgroup
        write_fold_uar_tsv(report, tmp_path / "r.tsv")
        tsv = (tmp_path / "r.tsv").read_text().strip().splitlines()
        assert tsv[0].startswith("# fold")
        assert "n/a" in tsv[2]  # second fold's UAR was undefined

    def test_aggregate_metrics_all_undefined(self):
        ms = aggregate_metrics([MetricSet(), MetricSet()])
        assert ms.uar is None and ms.f1 is None
