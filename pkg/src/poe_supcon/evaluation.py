"""Metrics, subgroup breakdowns, separability diagnostics, and run reports.

MCI is the positive class throughout: sensitivity is the fraction of MCI
samples detected. Metrics with a zero denominator are reported as an
explicit undefined marker (``None`` in memory, ``null``/``n/a`` on disk),
never silently coerced to 0 - small validation folds make this reachable.
"""

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfusionMatrix", "MetricSet", "SubgroupResult", "FoldReport", "RunReport",
    "SUBGROUP_NAMES", "compute_metrics", "confusion_from_predictions",
    "subgroup_metrics", "all_subgroup_results", "picture_separability",
    "disparity", "aggregate_metrics", "report_to_json", "report_from_json",
    "write_report_csv", "write_fold_uar_tsv",
]

SUBGROUP_NAMES = ("Both", "En", "Zh", "M", "F")
METRIC_FIELDS = ("sensitivity", "specificity", "precision", "uar", "f1")


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    def to_dict(self):
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass
class MetricSet:
    sensitivity: float = None
    specificity: float = None
    precision: float = None
    uar: float = None
    f1: float = None

    def to_dict(self):
        return {k: getattr(self, k) for k in METRIC_FIELDS}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d.get(k) for k in METRIC_FIELDS})


def confusion_from_predictions(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label/prediction shape mismatch: {y_true.shape} vs {y_pred.shape}")
    return ConfusionMatrix(
        tp=int(((y_true == 1) & (y_pred == 1)).sum()),
        tn=int(((y_true == 0) & (y_pred == 0)).sum()),
        fp=int(((y_true == 0) & (y_pred == 1)).sum()),
        fn=int(((y_true == 1) & (y_pred == 0)).sum()),
    )


def _ratio(num, den):
    return num / den if den > 0 else None


def compute_metrics(cm):
    """Sensitivity, specificity, precision, UAR, F1 from a confusion matrix.

    Total on any input: zero-denominator cases come back as None.
    """
    rho = _ratio(cm.tp, cm.tp + cm.fn)
    sigma = _ratio(cm.tn, cm.tn + cm.fp)
    pi = _ratio(cm.tp, cm.tp + cm.fp)
    uar = (sigma + rho) / 2.0 if sigma is not None and rho is not None else None
    if pi is not None and rho is not None and (pi + rho) > 0:
        f1 = 2.0 * pi * rho / (pi + rho)
    else:
        f1 = None
    return MetricSet(sensitivity=rho, specificity=sigma, precision=pi, uar=uar, f1=f1)


_AXIS_GROUPS = {
    "both": {"Both": lambda s: True},
    "language": {"En": lambda s: s.language.value == "En",
                 "Zh": lambda s: s.language.value == "Zh"},
    "gender": {"M": lambda s: s.gender.value == "M",
               "F": lambda s: s.gender.value == "F"},
}


@dataclass
class SubgroupResult:
    size: int
    confusion: ConfusionMatrix
    metrics: MetricSet

    def to_dict(self):
        return {"size": self.size, "confusion": self.confusion.to_dict(),
                "metrics": self.metrics.to_dict()}


def subgroup_metrics(predictions, ds, axis):
    """Metrics restricted to each subgroup along one axis.

    ``predictions`` rows are dicts with sample_id / label / pred;
    every row must match a sample in ``ds``.
    """
    if axis not in _AXIS_GROUPS:
        raise KeyError(f"unknown subgroup axis {axis!r}, expected one of {sorted(_AXIS_GROUPS)}")
    by_id = ds.sample_index()
    out = {}
    for name, selector in _AXIS_GROUPS[axis].items():
        y_true, y_pred = [], []
        for row in predictions:
            sample = by_id.get(row["sample_id"])
            if sample is None:
                raise KeyError(f"prediction for unknown sample_id {row['sample_id']!r}")
            if selector(sample):
                y_true.append(row["label"])
                y_pred.append(row["pred"])
        cm = confusion_from_predictions(y_true, y_pred)
        out[name] = SubgroupResult(size=len(y_true), confusion=cm, metrics=compute_metrics(cm))
    return out


def all_subgroup_results(predictions, ds):
    """The five standard report columns: Both, En, Zh, M, F."""
    results = {}
    for axis in ("both", "language", "gender"):
        results.update(subgroup_metrics(predictions, ds, axis))
    return {name: results[name] for name in SUBGROUP_NAMES}


def picture_separability(embeddings, picture_ids):
    """Mean silhouette coefficient of the embedding rows under picture labels.

    Euclidean distances; pictures with a single sample are excluded (noted
    via a warning). A sample coinciding with everything it is compared to
    (zero distances) scores 0 by convention.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    ids = np.asarray(picture_ids)
    if x.ndim != 2 or ids.shape != (x.shape[0],):
        raise ValueError("embeddings must be (n, d) with one picture id per row")
    uniq, counts = np.unique(ids, return_counts=True)
    singletons = uniq[counts < 2]
    if singletons.size:
        warnings.warn(f"picture_separability: excluding singleton pictures {singletons.tolist()}")
    keep = ~np.isin(ids, singletons)
    x, ids = x[keep], ids[keep]
    clusters = np.unique(ids)
    if clusters.size < 2:
        raise ValueError(f"picture_separability needs >= 2 pictures with >= 2 samples, "
                         f"got {clusters.size}")

    n = x.shape[0]
    # row-by-row direct differences: O(n d) memory, precise enough to agree
    # with a per-pair reference to float round-off
    dist = np.empty((n, n))
    for i in range(n):
        dist[i] = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
    scores = np.zeros(n)
    for i in range(n):
        own = ids == ids[i]
        a = dist[i, own].sum() / (own.sum() - 1)
        b = min(dist[i, ids == c].mean() for c in clusters if c != ids[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def aggregate_metrics(fold_metric_sets):
    """Unweighted mean over folds, per metric, skipping undefined entries."""
    out = {}
    for name in METRIC_FIELDS:
        values = [getattr(ms, name) for ms in fold_metric_sets if getattr(ms, name) is not None]
        out[name] = float(np.mean(values)) if values else None
    return MetricSet(**out)


@dataclass
class FoldReport:
    fold_index: int
    validation_ids: list
    subgroups: dict  # name -> SubgroupResult
    train_loss_per_epoch: list = field(default_factory=list)

    def to_dict(self):
        return {
            "fold_index": self.fold_index,
            "validation_ids": list(self.validation_ids),
            "train_loss_per_epoch": [float(v) for v in self.train_loss_per_epoch],
            "subgroups": {k: v.to_dict() for k, v in self.subgroups.items()},
        }


@dataclass
class RunReport:
    config: dict
    folds: list
    aggregate: dict         # subgroup -> MetricSet, mean over folds
    aggregate_pooled: dict  # subgroup -> MetricSet, from summed confusion counts
    predictions: list       # dicts: sample_id, fold, label, pred, p_mci

    def to_dict(self):
        return {
            "config": self.config,
            "folds": [f.to_dict() for f in self.folds],
            "aggregate": {k: v.to_dict() for k, v in self.aggregate.items()},
            "aggregate_pooled": {k: v.to_dict() for k, v in self.aggregate_pooled.items()},
            "predictions": self.predictions,
        }


def disparity(report, axis):
    """Absolute aggregate-UAR gap between the two subgroups on an axis."""
    pairs = {"language": ("En", "Zh"), "gender": ("M", "F")}
    if axis not in pairs:
        raise ValueError(f"unknown disparity axis {axis!r}, expected 'language' or 'gender'")
    a, b = pairs[axis]
    ua = report.aggregate[a].uar
    ub = report.aggregate[b].uar
    if ua is None or ub is None:
        raise ValueError(f"UAR undefined for subgroup {a if ua is None else b!r}")
    return abs(ua - ub)


def build_run_report(config_dict, fold_reports, predictions):
    """Assemble aggregates (mean-over-folds and pooled) from per-fold results."""
    aggregate = {}
    pooled = {}
    for name in SUBGROUP_NAMES:
        per_fold = [f.subgroups[name].metrics for f in fold_reports]
        aggregate[name] = aggregate_metrics(per_fold)
        total_cm = ConfusionMatrix()
        for f in fold_reports:
            total_cm = total_cm + f.subgroups[name].confusion
        pooled[name] = compute_metrics(total_cm)
    return RunReport(config=config_dict, folds=list(fold_reports),
                     aggregate=aggregate, aggregate_pooled=pooled,
                     predictions=list(predictions))


def report_to_json(report):
    """Deterministic JSON text (sorted keys, lossless float round-trip)."""
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def report_from_json(text):
    d = json.loads(text)
    folds = [
        FoldReport(
            fold_index=f["fold_index"],
            validation_ids=f["validation_ids"],
            train_loss_per_epoch=f["train_loss_per_epoch"],
            subgroups={k: SubgroupResult(size=v["size"],
                                         confusion=ConfusionMatrix(**v["confusion"]),
                                         metrics=MetricSet.from_dict(v["metrics"]))
                       for k, v in f["subgroups"].items()},
        )
        for f in d["folds"]
    ]
    return RunReport(
        config=d["config"],
        folds=folds,
        aggregate={k: MetricSet.from_dict(v) for k, v in d["aggregate"].items()},
        aggregate_pooled={k: MetricSet.from_dict(v) for k, v in d["aggregate_pooled"].items()},
        predictions=d["predictions"],
    )


def _fmt(value):
    return "n/a" if value is None else f"{value:.6f}"


def write_report_csv(reports_with_labels, path, pooled=False):
    """Flat CSV, one row per run config x subgroup, for spreadsheet comparison."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "subgroup", "n", "uar", "f1",
                         "sensitivity", "specificity", "precision"])
        for label, report in reports_with_labels:
            agg = report.aggregate_pooled if pooled else report.aggregate
            for name in SUBGROUP_NAMES:
                size = sum(f.subgroups[name].size for f in report.folds)
                ms = agg[name]
                writer.writerow([label, name, size, _fmt(ms.uar), _fmt(ms.f1),
                                 _fmt(ms.sensitivity), _fmt(ms.specificity),
                                 _fmt(ms.precision)])


def write_fold_uar_tsv(report, path):
    """Per-fold UARs as a gnuplot-friendly TSV (one row per fold)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# fold\t" + "\t".join(SUBGROUP_NAMES) + "\n")
        for f in report.folds:
            row = [str(f.fold_index)]
            for name in SUBGROUP_NAMES:
                row.append(_fmt(f.subgroups[name].metrics.uar))
            fh.write("\t".join(row) + "\n")
