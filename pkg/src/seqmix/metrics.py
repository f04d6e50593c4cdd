"""Token- and span-level precision/recall/F-1 for tag sequences."""

import numpy as np

from .exceptions import ParameterError

OUTSIDE = "O"


def _split_tag(tag):
    if tag == OUTSIDE:
        return OUTSIDE, None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BIES":
        return tag[0], tag[2:]
    # bare tags behave like I- tags: runs of the same type form one span
    return "I", tag


def bio_spans(tags):
    """Set of ``(start, end, type)`` spans, inclusive, conlleval-style.

    A span starts at a ``B-`` tag or at an ``I-`` tag whose predecessor is
    outside or of a different type.
    """
    spans = []
    start = None
    cur = None
    for i, tag in enumerate(list(tags) + [OUTSIDE]):
        prefix, typ = _split_tag(tag)
        boundary = prefix in (OUTSIDE, "B", "S") or typ != cur
        if cur is not None and boundary:
            spans.append((start, i - 1, cur))
            cur = None
        if prefix != OUTSIDE and (cur is None or boundary):
            start, cur = i, typ
        if prefix in ("E", "S") and cur is not None:
            spans.append((start, i, cur))
            cur = None
    return set(spans)


def _prf(tp, n_pred, n_gold):
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _as_sentences(seq):
    if seq and isinstance(seq[0], str):
        return [list(seq)]
    return [list(s) for s in seq]


def f1_metrics(pred, gold, scheme="span"):
    """``(precision, recall, f1)`` of predicted against gold tags.

    ``pred`` and ``gold`` are one tag sequence or a list of them. ``token``
    is micro-averaged over positions whose tag is not ``O``; ``span``
    counts exact-match BIO spans.
    """
    pred, gold = _as_sentences(pred), _as_sentences(gold)
    if len(pred) != len(gold) or any(len(p) != len(g) for p, g in zip(pred, gold)):
        raise ParameterError("predicted and gold sequences must have equal lengths")
    if scheme == "token":
        tp = n_pred = n_gold = 0
        for p, g in zip(pred, gold):
            p, g = np.array(p, dtype=object), np.array(g, dtype=object)
            tp += int(np.sum((p == g) & (g != OUTSIDE)))
            n_pred += int(np.sum(p != OUTSIDE))
            n_gold += int(np.sum(g != OUTSIDE))
        return _prf(tp, n_pred, n_gold)
    if scheme == "span":
        tp = n_pred = n_gold = 0
        for p, g in zip(pred, gold):
            ps, gs = bio_spans(p), bio_spans(g)
            tp += len(ps & gs)
            n_pred += len(ps)
            n_gold += len(gs)
        return _prf(tp, n_pred, n_gold)
    raise ParameterError(f"scheme must be 'token' or 'span', got {scheme!r}")


def token_accuracy(pred, gold):
    pred, gold = _as_sentences(pred), _as_sentences(gold)
    hits = sum(sum(a == b for a, b in zip(p, g)) for p, g in zip(pred, gold))
    total = sum(len(g) for g in gold)
    return hits / total if total else 0.0
