"""Input checks shared by the estimator front end."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ParameterError, ShapeError


def check_sequences(X):
    """Validate a collection of sequences; returns ``(list of arrays, kind)``.

    ``kind`` is ``"ids"`` when every sequence is a 1-d integer array of token
    ids and ``"dense"`` when every sequence is a ``T x d`` float array with a
    common ``d``. Mixed collections are rejected.
    """
    if isinstance(X, np.ndarray) and X.ndim in (2, 3) and X.dtype != object:
        X = list(X)
    try:
        seqs = [np.asarray(x) for x in X]
    except TypeError:
        raise ParameterError("X must be an iterable of sequences") from None
    if not seqs:
        raise ParameterError("X contains no sequences")
    if all(s.ndim == 1 and np.issubdtype(s.dtype, np.integer) for s in seqs):
        if any(s.size == 0 for s in seqs):
            raise ShapeError("empty sequence in X")
        if any(s.min() < 0 for s in seqs):
            raise ParameterError("token ids must be non-negative")
        return [s.astype(np.int64) for s in seqs], "ids"
    out = []
    for s in seqs:
        if s.ndim == 1:
            raise ShapeError("dense sequences must be T x d; token ids must be integers")
        out.append(check_array(s, dtype=np.float64, ensure_min_samples=1))
    if len({s.shape[1] for s in out}) != 1:
        raise ShapeError("all dense sequences must share the feature dimension")
    return out, "dense"


def check_tag_targets(seqs, y):
    """Per-step label arrays matching ``seqs`` in count and length."""
    ys = [np.asarray(t) for t in y]
    if len(ys) != len(seqs):
        raise ShapeError(f"got {len(seqs)} sequences but {len(ys)} label sequences")
    for i, (s, t) in enumerate(zip(seqs, ys)):
        if t.ndim != 1 or t.shape[0] != s.shape[0]:
            raise ShapeError(f"sequence {i}: expected {s.shape[0]} labels, got shape {t.shape}")
    return ys


def check_class_targets(seqs, y):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != len(seqs):
        raise ShapeError("y must hold one label per sequence")
    return y
