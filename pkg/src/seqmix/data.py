"""Datasets: half-moons, synthetic tagging tasks, CoNLL files and text embeddings."""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, ParseError
from .numkernel import as_rng
from .recurrent import Sample

log = logging.getLogger(__name__)

UNK = "<unk>"


@dataclass
class Dataset:
    samples: list
    labels: list
    vocab: list = None
    split: str = "train"
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def n_classes(self):
        return len(self.labels)

    @property
    def is_tagging(self):
        return bool(self.samples) and self.samples[0].is_tagging

    @property
    def input_dim(self):
        """Feature width for dense inputs, ``None`` for token ids."""
        if not self.samples or self.samples[0].features.ndim == 1:
            return None
        return self.samples[0].features.shape[1]

    @property
    def token_index(self):
        return None if self.vocab is None else {w: i for i, w in enumerate(self.vocab)}

    def subset(self, indices, split=None):
        return Dataset([self.samples[i] for i in indices], self.labels, self.vocab,
                       split or self.split, dict(self.info))

    def tag_names(self, indices):
        return [self.labels[i] for i in indices]


# ---------------------------------------------------------------------------
# half-moons


def moon_curves(num=200):
    """Noise-free moon arcs as two ``num x 2`` arrays."""
    theta = np.linspace(0.0, math.pi, num)
    upper = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    lower = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
    return upper, lower


def generate_halfmoons(n, noise=0.2, random_state=None, split="train"):
    """Two interleaved half circles, each point encoded as a two-step sequence.

    Step 1 carries the x coordinate, step 2 the y coordinate (one feature
    each). The label is sequence-level: 0 for the upper moon, 1 for the lower.
    """
    if n % 2:
        raise ParameterError("n must be even so both moons get n/2 points")
    rng = as_rng(random_state)
    upper, lower = moon_curves(n // 2)
    points = np.concatenate([upper, lower])
    labels = np.repeat([0, 1], n // 2)
    if noise:
        points = points + rng.normal(scale=noise, size=points.shape)
    order = rng.permutation(n)
    samples = [Sample(points[i].reshape(2, 1), int(labels[i])) for i in order]
    return Dataset(samples, ["upper", "lower"], split=split, info={"task": "halfmoons", "noise": noise})


def halfmoon_points(dataset):
    """``(points n x 2, labels n)`` back out of a half-moons dataset."""
    pts = np.array([s.features[:, 0] for s in dataset.samples])
    return pts, np.array([s.labels for s in dataset.samples])


# ---------------------------------------------------------------------------
# synthetic tagging


def tag_names(n_classes):
    return ["O"] + [f"X{k}" for k in range(1, n_classes)]


@dataclass(frozen=True)
class TaggingTask:
    """Generative law of the synthetic tagging data.

    ``token_tag[v]`` is the tag assigned to token ``v``. The tag at step t is
    ``token_tag[x_t]`` (``lag = 0``) or ``token_tag[x_{t-lag}]`` (memory
    variant; steps before ``lag`` use the current token). With probability
    ``flip`` the tag is replaced by a uniformly drawn *different* tag.
    """

    vocab_size: int
    n_classes: int
    token_tag: tuple
    lag: int = 0
    flip: float = 0.0

    def source_index(self, t):
        return t - self.lag if t >= self.lag else t

    def memoryless_optimal_accuracy(self, length):
        """Best expected token accuracy of any predictor that sees only ``x_t``.

        Computed by enumerating the joint law of ``(x_t, y_t)`` pooled over
        positions ``0..length-1``.
        """
        V, C = self.vocab_size, self.n_classes
        joint = np.zeros((V, C))
        for t in range(length):
            src = self.source_index(t)
            for x, xs in itertools.product(range(V), repeat=2):
                if src == t and xs != x:
                    continue
                p = (1.0 / V) if src == t else 1.0 / (V * V)
                tag = self.token_tag[xs]
                for c in range(C):
                    q = 1.0 - self.flip if c == tag else self.flip / (C - 1)
                    joint[x, c] += p * q / length
        return float(joint.max(axis=1).sum())


def make_tagging_task(vocab_size, n_classes, random_state=None, memory=False, flip=0.0, lag=2):
    if n_classes < 2:
        raise ParameterError("need at least two classes")
    if vocab_size < n_classes:
        raise ParameterError("vocab_size must be at least n_classes so every tag occurs")
    rng = as_rng(random_state)
    token_tag = tuple(int(c) for c in rng.permutation(np.arange(vocab_size) % n_classes))
    return TaggingTask(vocab_size, n_classes, token_tag, lag if memory else 0, flip)


def sample_tagging(task, n, length, random_state=None, split="train"):
    rng = as_rng(random_state)
    table = np.array(task.token_tag)
    C = task.n_classes
    tokens = rng.integers(0, task.vocab_size, size=(n, length))
    src = np.array([task.source_index(t) for t in range(length)])
    tags = table[tokens[:, src]]
    if task.flip:
        flips = rng.random((n, length)) < task.flip
        shift = rng.integers(1, C, size=(n, length))
        tags = np.where(flips, (tags + shift) % C, tags)
    samples = [Sample(tokens[i], tags[i]) for i in range(n)]
    vocab = [f"w{v}" for v in range(task.vocab_size)]
    return Dataset(samples, tag_names(C), vocab, split, {"task": task})


def generate_tagging(n, length, vocab_size, n_classes, random_state=None, memory=False, flip=0.0):
    """Synthetic token-id tagging data (see :class:`TaggingTask`)."""
    rng = as_rng(random_state)
    task = make_tagging_task(vocab_size, n_classes, rng, memory=memory, flip=flip)
    return sample_tagging(task, n, length, rng)


def frequency_table_accuracy(train, test):
    """Token accuracy of predicting the most frequent training tag for each token."""
    V = len(train.vocab)
    counts = np.zeros((V, train.n_classes))
    for s in train.samples:
        np.add.at(counts, (s.features, s.labels), 1)
    best = counts.argmax(axis=1)
    hits = sum(int(np.sum(best[s.features] == s.labels)) for s in test.samples)
    return hits / sum(len(s) for s in test.samples)


# ---------------------------------------------------------------------------
# CoNLL column files


def _read_conll_sentences(path):
    sentences, tokens, tags = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("-DOCSTART-"):
                if tokens:
                    sentences.append((tokens, tags))
                    tokens, tags = [], []
                continue
            cols = line.split()
            if len(cols) < 2:
                raise ParseError("expected a token and a tag column", lineno, path)
            tokens.append(cols[0])
            tags.append(cols[-1])
    if tokens:
        sentences.append((tokens, tags))
    return sentences


def load_conll(path, vocab=None, labels=None, split="train", grow=True):
    """Parse a CoNLL column file (token first, tag last, blank line between sentences).

    Token ids and tag indices are assigned in first-seen order, extending
    ``vocab``/``labels`` when given. With ``grow=False`` unseen tokens map to
    ``<unk>`` and unseen tags raise :class:`ParseError`.
    """
    sentences = _read_conll_sentences(path)
    if not sentences:
        log.warning("%s contains no sentences", path)
    vocab = [UNK] if vocab is None else list(vocab)
    labels = [] if labels is None else list(labels)
    vidx = {w: i for i, w in enumerate(vocab)}
    lidx = {t: i for i, t in enumerate(labels)}
    samples = []
    for tokens, tags in sentences:
        ids = []
        for w in tokens:
            if w not in vidx:
                if grow:
                    vidx[w] = len(vocab)
                    vocab.append(w)
                else:
                    w = UNK
            ids.append(vidx.get(w, 0))
        tag_ids = []
        for t in tags:
            if t not in lidx:
                if not grow:
                    raise ParseError(f"unknown tag {t!r}", path=path)
                lidx[t] = len(labels)
                labels.append(t)
            tag_ids.append(lidx[t])
        samples.append(Sample(np.array(ids, dtype=np.int64), np.array(tag_ids)))
    return Dataset(samples, labels, vocab, split, {"path": str(path)})


def write_conll(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.samples:
            for tok, tag in zip(s.features, s.labels):
                fh.write(f"{dataset.vocab[tok]} {dataset.labels[tag]}\n")
            fh.write("\n")


def load_embeddings(path, vocab, random_state=None, dim=None):
    """Embedding matrix for ``vocab`` from a ``word v_1 ... v_d`` text file.

    Words missing from the file get rows drawn from U(-1/sqrt(d), 1/sqrt(d)).
    """
    vectors = {}
    wanted = set(vocab)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip().split(" ")
            if len(parts) < 2:
                if raw.strip():
                    raise ParseError("expected a word followed by its vector", lineno, path)
                continue
            if dim is None:
                dim = len(parts) - 1
            elif len(parts) - 1 != dim:
                raise ParseError(f"vector has {len(parts) - 1} entries, expected {dim}", lineno, path)
            if parts[0] in wanted:
                try:
                    vectors[parts[0]] = np.array(parts[1:], dtype=np.float64)
                except ValueError:
                    raise ParseError("non-numeric vector entry", lineno, path) from None
    if dim is None:
        raise ParseError("embedding file is empty", path=path)
    rng = as_rng(random_state)
    bound = 1.0 / math.sqrt(dim)
    out = rng.uniform(-bound, bound, (len(vocab), dim))
    for i, w in enumerate(vocab):
        if w in vectors:
            out[i] = vectors[w]
    return out
