"""
Binary classification scores: confusion tallies, precision, recall, F1, accuracy.

Class 1 is the positive class.
"""
import warnings
from collections import namedtuple

import numpy as np
import pandas as pd

_ConfusionMatrix = namedtuple('ConfusionMatrix', ['tp', 'fp', 'fn', 'tn'])


class ConfusionMatrix(_ConfusionMatrix):
    """2x2 tally of a binary classification."""
    __slots__ = ()

    def __new__(cls, tp, fp, fn, tn):
        counts = [int(c) for c in (tp, fp, fn, tn)]
        if any(c < 0 for c in counts):
            raise ValueError('Confusion counts must be non-negative, got {}'.format(counts))
        return super(ConfusionMatrix, cls).__new__(cls, *counts)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def __str__(self):
        return ('            pred 1   pred 0\n'
                'true 1  {:8d} {:8d}\n'
                'true 0  {:8d} {:8d}').format(self.tp, self.fn, self.fp, self.tn)


_Metrics = namedtuple('Metrics', ['precision', 'recall', 'f1', 'accuracy', 'degenerate'])


class Metrics(_Metrics):
    """
    Scores of a classifier.

    ``degenerate`` is set when a score had a zero denominator and was reported as 0.
    """
    __slots__ = ()
    fields = ('precision', 'recall', 'f1', 'accuracy')

    def __new__(cls, precision, recall, f1, accuracy, degenerate=False):
        return super(Metrics, cls).__new__(cls, float(precision), float(recall), float(f1),
                                           float(accuracy), bool(degenerate))

    def __str__(self):
        return 'precision {:.4f}  recall {:.4f}  F1 {:.4f}  accuracy {:.4f}{}'.format(
            self.precision, self.recall, self.f1, self.accuracy, '  (degenerate)' if self.degenerate else '')


def _binary(values, name):
    values = np.asarray(values).reshape(-1)
    if not np.all((values == 0) | (values == 1)):
        raise ValueError('{} must be 0 or 1.'.format(name))
    return values.astype(int)


def confusion(labels, predictions):
    """
    Tally predictions against labels.

    Parameters
    ----------
    labels, predictions : sequences of {0, 1} of equal length

    Returns
    -------
    ConfusionMatrix
    """
    labels = _binary(labels, 'labels')
    predictions = _binary(predictions, 'predictions')
    if len(labels) != len(predictions):
        raise ValueError('{} labels but {} predictions.'.format(len(labels), len(predictions)))
    return ConfusionMatrix(tp=np.sum((predictions == 1) & (labels == 1)),
                           fp=np.sum((predictions == 1) & (labels == 0)),
                           fn=np.sum((predictions == 0) & (labels == 1)),
                           tn=np.sum((predictions == 0) & (labels == 0)))


def _ratio(num, den):
    if den == 0:
        return 0.0, True
    return num / float(den), False


def metrics(cm):
    """
    Precision, recall, F1 and accuracy of a confusion matrix.

    A score with a zero denominator is 0 and flags the result as degenerate.
    """
    if cm.total == 0:
        raise ValueError('Cannot score an empty confusion matrix.')
    precision, d1 = _ratio(cm.tp, cm.tp + cm.fp)
    recall, d2 = _ratio(cm.tp, cm.tp + cm.fn)
    f1, d3 = _ratio(2 * precision * recall, precision + recall)
    accuracy = (cm.tp + cm.tn) / float(cm.total)
    degenerate = d1 or d2 or d3
    if degenerate:
        warnings.warn('Degenerate confusion matrix {}; undefined scores reported as 0.'.format(tuple(cm)))
    return Metrics(precision, recall, f1, accuracy, degenerate)


def macro_average(reports):
    """
    Unweighted mean of every score over a list of Metrics.

    Examples
    --------
    >>> m = macro_average([Metrics(0.98, 0, 0, 0), Metrics(0.99, 0, 0, 0), Metrics(0.96, 0, 0, 0)])
    >>> round(m.precision, 4)
    0.9767
    """
    reports = list(reports)
    if not reports:
        raise ValueError('Cannot average an empty list of metrics.')
    means = [float(np.mean([getattr(r, f) for r in reports])) for f in Metrics.fields]
    return Metrics(*means, degenerate=any(r.degenerate for r in reports))


def metrics_table(rows):
    """
    A DataFrame of named Metrics, one row each.

    Parameters
    ----------
    rows : list of (name, Metrics)
    """
    return pd.DataFrame([dict(name=name, **m._asdict()) for name, m in rows],
                        columns=['name'] + list(Metrics.fields) + ['degenerate'])
