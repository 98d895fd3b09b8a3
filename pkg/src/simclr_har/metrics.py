"""Confusion matrices and support-weighted F1."""

import csv
import io

import numpy as np

N_CLASSES = 6


class MetricError(ValueError):
    pass


def confusion(true_labels, predicted_labels, n_classes=N_CLASSES):
    """Counts grid with rows = true class, columns = predicted class."""
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise MetricError(f"length mismatch: {t.size} true vs {p.size} predicted labels")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes):
        raise MetricError(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def per_class_f1(cm):
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    pred = cm.sum(axis=0)
    support = cm.sum(axis=1)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def weighted_f1(cm):
    """Per-class F1 averaged with weights proportional to true-class support.

    Undefined precision or recall counts as 0.
    """
    cm = np.asarray(cm)
    support = cm.sum(axis=1).astype(np.float64)
    total = support.sum()
    if total <= 0:
        raise MetricError("weighted F1 of an empty confusion matrix")
    return float(np.dot(support, per_class_f1(cm)) / total)


def confusion_to_csv(cm, class_names):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["true\\pred", *class_names])
    for name, row in zip(class_names, np.asarray(cm)):
        writer.writerow([name, *(int(v) for v in row)])
    return buf.getvalue()
