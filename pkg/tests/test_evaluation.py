import numpy as np
import pytest

from mlcfl import dataio
from mlcfl.dataio import SplitPlan, make_splits
from mlcfl.errors import MlcflError
from mlcfl.evaluation import (
    REPORT_FORMAT,
    TABLE_FORMAT,
    accuracy,
    compare_levels,
    confusion_counts,
    metrics_table,
    report_text,
    run_cv,
    weighted_f1,
)
from mlcfl.pipeline import frames_from_streams

from conftest import small_config


def weighted_f1_oracle(truth, pred):
    """Brute-force confusion counting straight from the definitions."""
    classes = sorted(set(truth) | set(pred))
    n = len(truth)
    total = 0.0
    for c in classes:
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        weight = sum(1 for t in truth if t == c) / n
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall:
            total += 2.0 * weight * precision * recall / (precision + recall)
    return total


class TestWeightedF1:
    def test_perfect(self):
        truth = [0, 1, 2, 1, 0]
        assert weighted_f1(truth, truth) == pytest.approx(1.0)

    def test_fully_wrong(self):
        truth = [0, 0, 1, 1]
        pred = [1, 1, 0, 0]
        assert weighted_f1(truth, pred) == pytest.approx(0.0)

    def test_small_example_oracle(self):
        truth = [0, 0, 0, 1]
        pred = [0, 0, 1, 1]
        assert weighted_f1(truth, pred) == pytest.approx(
            weighted_f1_oracle(truth, pred), abs=1e-12)

    def test_random_pairs_match_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            m = int(rng.integers(1, 6))
            truth = rng.integers(0, m, n).tolist()
            pred = rng.integers(0, m, n).tolist()
            assert weighted_f1(truth, pred) == pytest.approx(
                weighted_f1_oracle(truth, pred), abs=1e-12)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(1)
        truth = rng.integers(0, 4, 100)
        pred = rng.integers(0, 4, 100)
        base = weighted_f1(truth, pred)
        mapping = {0: 7, 1: 3, 2: 11, 3: 5}
        t2 = np.asarray([mapping[v] for v in truth])
        p2 = np.asarray([mapping[v] for v in pred])
        assert weighted_f1(t2, p2) == pytest.approx(base, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(MlcflError):
            weighted_f1([0, 1], [0])

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            truth = rng.integers(0, 3, 20)
            pred = rng.integers(0, 3, 20)
            v = weighted_f1(truth, pred)
            assert 0.0 <= v <= 1.0


class TestAccuracy:
    def test_identical(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_all_wrong(self):
        assert accuracy([1, 1], [2, 2]) == 0.0

    def test_half_right(self):
        truth = [0] * 10
        pred = [0] * 5 + [1] * 5
        assert accuracy(truth, pred) == 0.5

    def test_mismatch(self):
        with pytest.raises(MlcflError):
            accuracy([0], [0, 1])

    def test_accuracy_equals_weighted_recall(self):
        truth = [0] * 5 + [1] * 5
        pred = [0, 0, 0, 1, 1, 1, 1, 1, 0, 0]
        cc = confusion_counts(truth, pred)
        recalls = cc.tp / cc.matrix.sum(axis=1)
        weights = cc.matrix.sum(axis=1) / cc.matrix.sum()
        assert accuracy(truth, pred) == pytest.approx(float((recalls * weights).sum()))


class TestConfusion:
    def test_counts_consistent(self):
        truth = [0, 0, 1, 2, 2, 2]
        pred = [0, 1, 1, 2, 0, 2]
        cc = confusion_counts(truth, pred)
        assert cc.matrix.sum() == 6
        assert cc.tp.sum() + cc.fp.sum() == len(truth)
        assert np.array_equal(cc.fp, cc.matrix.sum(axis=0) - np.diag(cc.matrix))
        assert np.array_equal(cc.fn, cc.matrix.sum(axis=1) - np.diag(cc.matrix))


class TestRunCv:
    def test_separable_pipeline_f1(self):
        classes = dataio.random_motifs(3, 1, seed=4, sample_rate=32.0)
        spec = dataio.SynthSpec(classes=classes, segment_len=256,
                                segments_per_pattern=8, sample_rate=32.0,
                                noise=0.02)
        result = dataio.synth_streams(spec, seed=4)
        config = small_config(seed=4, level="low")
        frames = frames_from_streams(result.streams, config)
        plan = make_splits(frames, "random-kfold", 4, seed=4)
        report = run_cv(frames, plan, config, level="low", classifier="knn")
        assert report.weighted_f1_pooled >= 0.95

    def test_deterministic(self, small_synth):
        frames, _, config = small_synth
        plan = make_splits(frames, "random-kfold", 3, seed=1)
        r1 = run_cv(frames, plan, config, level="mid", classifier="knn")
        r2 = run_cv(frames, plan, config, level="mid", classifier="knn")
        assert r1.weighted_f1_pooled == r2.weighted_f1_pooled
        assert r1.fold_f1 == r2.fold_f1
        assert r1.param_digests == r2.param_digests
        assert np.array_equal(r1.confusion, r2.confusion)

    def test_jobs_equivalence(self, small_synth):
        frames, _, config = small_synth
        plan = make_splits(frames, "random-kfold", 2, seed=2)
        r1 = run_cv(frames, plan, config, level="low", classifier="ncc", jobs=1)
        r2 = run_cv(frames, plan, config, level="low", classifier="ncc", jobs=2)
        assert r1.fold_f1 == r2.fold_f1
        assert r1.param_digests == r2.param_digests

    def test_subject_split_no_leak(self):
        classes = dataio.random_motifs(2, 1, seed=5, sample_rate=32.0)
        spec = dataio.SynthSpec(classes=classes, segment_len=128,
                                segments_per_pattern=4, n_subjects=2,
                                sample_rate=32.0, noise=0.05)
        result = dataio.synth_streams(spec, seed=5)
        config = small_config(seed=5, level="low")
        frames = frames_from_streams(result.streams, config)
        plan = make_splits(frames, "subject-groups", 2, seed=5)
        for train_idx, test_idx in plan.folds:
            train_subjects = {frames[i].source[0] for i in train_idx}
            test_subjects = {frames[i].source[0] for i in test_idx}
            assert not train_subjects & test_subjects
        report = run_cv(frames, plan, config, level="low", classifier="knn")
        assert len(report.fold_f1) == 2

    def test_absent_class_warned_and_scored(self, small_synth):
        frames, _, config = small_synth
        labels = np.asarray([f.label for f in frames])
        class2 = np.flatnonzero(labels == 2)
        rest = np.flatnonzero(labels != 2)
        # class 2 appears only in fold 0's test set
        plan = SplitPlan(folds=(
            (rest[len(rest) // 2:], np.concatenate([rest[:len(rest) // 2], class2])),
            (np.concatenate([rest[:len(rest) // 2], class2]), rest[len(rest) // 2:]),
        ), mode="random-kfold")
        report = run_cv(frames, plan, config, level="mlcf", classifier="knn")
        assert any("class 2 absent" in w for w in report.warnings)
        assert report.confusion.sum() == len(frames)

    def test_report_rendering(self, small_synth):
        frames, _, config = small_synth
        plan = make_splits(frames, "random-kfold", 2, seed=3)
        report = run_cv(frames, plan, config, level="low", classifier="ncc")
        text = report_text(report)
        assert text.startswith(REPORT_FORMAT)
        assert "weighted_f1_pooled:" in text
        assert "confusion (rows=truth, cols=pred):" in text
        table = metrics_table(report)
        assert table.startswith(f"# {TABLE_FORMAT}")
        assert len(table.strip().splitlines()) == 2 + 1 + len(report.fold_f1)


class TestCompareLevels:
    def test_twelve_cells(self, small_synth):
        frames, _, config = small_synth
        plan = make_splits(frames, "random-kfold", 2, seed=6)
        cells = compare_levels(frames, plan, config)
        assert len(cells) == 12
        keys = {(lv, c) for lv in ("low", "mid", "compl", "mlcf")
                for c in ("knn", "svm", "ncc")}
        assert set(cells) == keys

    def test_cell_matches_run_cv(self, small_synth):
        frames, _, config = small_synth
        plan = make_splits(frames, "random-kfold", 2, seed=6)
        cells = compare_levels(frames, plan, config, levels=("low", "mid"),
                               classifiers=("knn",))
        single = run_cv(frames, plan, config, level="low", classifier="knn")
        assert cells[("low", "knn")].fold_f1 == single.fold_f1
        assert cells[("low", "knn")].weighted_f1_pooled == single.weighted_f1_pooled

    def test_table_over_cells(self, small_synth):
        frames, _, config = small_synth
        plan = make_splits(frames, "random-kfold", 2, seed=6)
        cells = compare_levels(frames, plan, config, levels=("low",),
                               classifiers=("knn", "ncc"))
        table = metrics_table(cells)
        lines = table.strip().splitlines()
        assert lines[0] == f"# {TABLE_FORMAT}"
        assert sum(1 for ln in lines if "\tpooled\t" in ln) == 2
