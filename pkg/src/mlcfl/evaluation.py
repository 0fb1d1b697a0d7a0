"""Scoring (weighted F1, accuracy) and the cross-validation harness.

Every fold fits normalizers, PCA, codebooks, latent models and the
classifier on its training frames only; test frames are only transformed
and predicted. Each fold result carries a SHA-256 fingerprint of all fitted
parameters so train/test isolation is checkable bit-for-bit.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataio import SplitPlan
from .errors import MlcflError
from .pipeline import (
    FEATURE_LEVELS,
    CLASSIFIER_KINDS,
    FeatureStack,
    PipelineConfig,
    classifier_arrays,
    fit_classifier,
    frame_labels,
    params_digest,
    predict_batch,
)
from .util import stable_seed

REPORT_FORMAT = "mlcfl-report v1"
TABLE_FORMAT = "mlcfl-metrics v1"

# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    """Full confusion matrix over the union of truth and predicted labels."""

    class_ids: tuple[int, ...]
    matrix: np.ndarray  # rows = truth, cols = predicted

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.matrix)

    @property
    def fp(self) -> np.ndarray:
        return self.matrix.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.matrix.sum(axis=1) - self.tp


def _check_labels(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.ndim != 1 or truth.shape != pred.shape:
        raise MlcflError(
            f"truth and prediction lengths differ: {truth.shape} vs {pred.shape}"
        )
    if truth.size < 1:
        raise MlcflError("need at least one label pair")
    return truth, pred


def confusion_counts(truth, pred) -> ConfusionCounts:
    truth, pred = _check_labels(truth, pred)
    class_ids = np.union1d(truth, pred)
    index = {int(c): i for i, c in enumerate(class_ids)}
    m = class_ids.size
    matrix = np.zeros((m, m), dtype=np.int64)
    for t, p in zip(truth, pred):
        matrix[index[int(t)], index[int(p)]] += 1
    return ConfusionCounts(class_ids=tuple(int(c) for c in class_ids), matrix=matrix)


def per_class_metrics(cc: ConfusionCounts) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, bool]:
    """Precision, recall, F1 and truth-share weight per class.

    Ratios with zero denominators are defined as 0; the returned flag
    reports whether that rule fired anywhere.
    """
    tp = cc.tp.astype(np.float64)
    fp = cc.fp.astype(np.float64)
    fn = cc.fn.astype(np.float64)
    zero_division = False
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0,
                      2.0 * precision * recall / (precision + recall), 0.0)
    if np.any(tp + fp == 0) or np.any(tp + fn == 0) or np.any(precision + recall == 0):
        zero_division = True
    support = cc.matrix.sum(axis=1).astype(np.float64)
    weights = support / support.sum()
    return precision, recall, f1, weights, zero_division


def weighted_f1(truth, pred) -> float:
    """Class-share weighted F1: sum_i 2 w_i p_i r_i / (p_i + r_i)."""
    cc = confusion_counts(truth, pred)
    precision, recall, _, weights, _ = per_class_metrics(cc)
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(precision + recall > 0,
                         2.0 * weights * precision * recall / (precision + recall),
                         0.0)
    return float(terms.sum())


def accuracy(truth, pred) -> float:
    truth, pred = _check_labels(truth, pred)
    return float((truth == pred).mean())


# ---------------------------------------------------------------------------
# Cross-validation engine
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Metrics for one (feature level, classifier) cell of a CV run."""

    level: str
    classifier: str
    class_ids: tuple[int, ...]
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    weights: np.ndarray
    weighted_f1_pooled: float
    accuracy_pooled: float
    fold_f1: tuple[float, ...]
    fold_accuracy: tuple[float, ...]
    fold_sizes: tuple[int, ...]
    warnings: tuple[str, ...]
    zero_division: bool
    param_digests: tuple[str, ...]
    config_echo: dict

    @property
    def weighted_f1_mean(self) -> float:
        return float(np.mean(self.fold_f1))

    @property
    def weighted_f1_std(self) -> float:
        return float(np.std(self.fold_f1))


def _eval_fold(frames, train_idx, test_idx, config: PipelineConfig,
               levels, classifiers, fold_idx: int):
    train = [frames[i] for i in train_idx]
    test = [frames[i] for i in test_idx]
    y_train = frame_labels(train)
    y_test = frame_labels(test)
    warnings = []
    missing = sorted(set(y_test.tolist()) - set(y_train.tolist()))
    for c in missing:
        warnings.append(f"fold {fold_idx}: class {c} absent from training")

    stack = FeatureStack(config).fit(train, levels)
    arrays = stack.param_arrays()
    cells = {}
    for level in levels:
        X_train = stack.train_features[level]
        X_test = stack.transform(test, level)
        for kind in classifiers:
            clf = fit_classifier(kind, X_train, y_train, config.classifier,
                                 seed=stable_seed(config.seed, "clf", fold_idx,
                                                  level, kind))
            pred = predict_batch(clf, X_test)
            cells[(level, kind)] = (y_test.copy(), pred)
            arrays = arrays + [(f"{level}.{kind}.{name}", arr)
                               for name, arr in classifier_arrays(clf)]
    return cells, params_digest(arrays), tuple(warnings)


def _run_folds(frames, plan: SplitPlan, config: PipelineConfig,
               levels, classifiers, jobs: int = 1):
    tasks = [(frames, train_idx, test_idx, config, tuple(levels),
              tuple(classifiers), fold)
             for fold, (train_idx, test_idx) in enumerate(plan.folds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_eval_fold_star, tasks))
    else:
        results = [_eval_fold_star(t) for t in tasks]
    return results


def _eval_fold_star(args):
    return _eval_fold(*args)


def _assemble_report(level, kind, fold_results, config) -> EvalReport:
    truths = []
    preds = []
    fold_f1 = []
    fold_acc = []
    fold_sizes = []
    warnings: list[str] = []
    digests = []
    for cells, digest, fold_warnings in fold_results:
        truth, pred = cells[(level, kind)]
        truths.append(truth)
        preds.append(pred)
        fold_f1.append(weighted_f1(truth, pred))
        fold_acc.append(accuracy(truth, pred))
        fold_sizes.append(truth.size)
        warnings.extend(fold_warnings)
        digests.append(digest)
    truth = np.concatenate(truths)
    pred = np.concatenate(preds)
    cc = confusion_counts(truth, pred)
    precision, recall, f1, weights, zero_division = per_class_metrics(cc)
    return EvalReport(
        level=level,
        classifier=kind,
        class_ids=cc.class_ids,
        confusion=cc.matrix,
        precision=precision,
        recall=recall,
        f1=f1,
        weights=weights,
        weighted_f1_pooled=weighted_f1(truth, pred),
        accuracy_pooled=accuracy(truth, pred),
        fold_f1=tuple(fold_f1),
        fold_accuracy=tuple(fold_acc),
        fold_sizes=tuple(fold_sizes),
        warnings=tuple(dict.fromkeys(warnings)),
        zero_division=zero_division,
        param_digests=tuple(digests),
        config_echo=config.to_dict(),
    )


def run_cv(frames, plan: SplitPlan, config: PipelineConfig,
           level: str | None = None, classifier: str | None = None,
           jobs: int = 1) -> EvalReport:
    """Cross-validate one (level, classifier) cell over the split plan."""
    level = level or config.level
    kind = classifier or config.classifier.kind
    results = _run_folds(frames, plan, config, [level], [kind], jobs=jobs)
    return _assemble_report(level, kind, results, config)


def compare_levels(frames, plan: SplitPlan, config: PipelineConfig,
                   levels=FEATURE_LEVELS, classifiers=CLASSIFIER_KINDS,
                   jobs: int = 1) -> dict[tuple[str, str], EvalReport]:
    """One EvalReport per (level, classifier) cell over a shared split."""
    levels = tuple(levels)
    classifiers = tuple(classifiers)
    results = _run_folds(frames, plan, config, levels, classifiers, jobs=jobs)
    return {(lv, kind): _assemble_report(lv, kind, results, config)
            for lv in levels for kind in classifiers}


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def report_text(report: EvalReport) -> str:
    """Structured key-value rendering with confusion matrix and config echo."""
    import json

    lines = [REPORT_FORMAT]
    lines.append(f"level: {report.level}")
    lines.append(f"classifier: {report.classifier}")
    lines.append(f"weighted_f1_pooled: {_fmt(report.weighted_f1_pooled)}")
    lines.append(f"weighted_f1_mean: {_fmt(report.weighted_f1_mean)}")
    lines.append(f"weighted_f1_std: {_fmt(report.weighted_f1_std)}")
    lines.append(f"accuracy_pooled: {_fmt(report.accuracy_pooled)}")
    lines.append(f"folds: {len(report.fold_f1)}")
    for i, (f1, acc, size) in enumerate(zip(report.fold_f1, report.fold_accuracy,
                                            report.fold_sizes)):
        lines.append(
            f"fold {i}: weighted_f1={_fmt(f1)} accuracy={_fmt(acc)} n_test={size}"
        )
    lines.append("confusion (rows=truth, cols=pred):")
    lines.append("labels\t" + "\t".join(str(c) for c in report.class_ids))
    for cid, row in zip(report.class_ids, report.confusion):
        lines.append(f"{cid}\t" + "\t".join(str(int(v)) for v in row))
    lines.append("per-class:")
    for i, cid in enumerate(report.class_ids):
        lines.append(
            f"class {cid}: precision={_fmt(report.precision[i])} "
            f"recall={_fmt(report.recall[i])} f1={_fmt(report.f1[i])} "
            f"weight={_fmt(report.weights[i])}"
        )
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    if report.zero_division:
        lines.append("note: zero-division precision/recall encountered; "
                     "affected ratios defined as 0")
    lines.append("config: " + json.dumps(report.config_echo, sort_keys=True))
    return "\n".join(lines) + "\n"


def metrics_table(reports) -> str:
    """Delimiter-separated metrics for one or more reports (pooled + folds)."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    elif isinstance(reports, dict):
        reports = [reports[key] for key in sorted(reports)]
    lines = [f"# {TABLE_FORMAT}",
             "level\tclassifier\tfold\tweighted_f1\taccuracy\tn_test"]
    for report in reports:
        lines.append(
            f"{report.level}\t{report.classifier}\tpooled\t"
            f"{_fmt(report.weighted_f1_pooled)}\t{_fmt(report.accuracy_pooled)}\t"
            f"{sum(report.fold_sizes)}"
        )
        for i, (f1, acc, size) in enumerate(zip(report.fold_f1,
                                                report.fold_accuracy,
                                                report.fold_sizes)):
            lines.append(
                f"{report.level}\t{report.classifier}\t{i}\t"
                f"{_fmt(f1)}\t{_fmt(acc)}\t{size}"
            )
    return "\n".join(lines) + "\n"
