"""scikit-learn style estimators wrapping the training driver."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import crf as crf_ops
from .data import Dataset
from .exceptions import ParameterError, ShapeError
from .mixup import canonical_method
from .numkernel import softmax
from .recurrent import Sample
from .training import ModelSpec, TrainConfig, emissions, hidden_features, train
from .validation import check_class_targets, check_sequences, check_tag_targets


class _SequenceEstimator(BaseEstimator):
    def __init__(self, method="standard", cell="lstm", hidden=32, embedding_dim=32,
                 bidirectional=False, alpha=1.0, rho=0.0, epochs=30, lr=0.1, halve_every=10,
                 batch_size=1, clip=None, vocab_size=None, random_state=0):
        self.method = method
        self.cell = cell
        self.hidden = hidden
        self.embedding_dim = embedding_dim
        self.bidirectional = bidirectional
        self.alpha = alpha
        self.rho = rho
        self.epochs = epochs
        self.lr = lr
        self.halve_every = halve_every
        self.batch_size = batch_size
        self.clip = clip
        self.vocab_size = vocab_size
        self.random_state = random_state

    def _train_config(self):
        seed = 0 if self.random_state is None else int(self.random_state)
        return TrainConfig(
            method=canonical_method(self.method), lr=self.lr, halve_every=self.halve_every,
            epochs=self.epochs, batch_size=self.batch_size, alpha=self.alpha, rho=self.rho,
            clip=self.clip, seed=seed, crf_mix=getattr(self, "crf_mix", "score"),
        )

    def _inputs(self, X, fitting=False):
        seqs, kind = check_sequences(X)
        if fitting:
            self.input_kind_ = kind
            if kind == "ids":
                seen = max(int(s.max()) for s in seqs) + 1
                self.vocab_size_ = max(seen, self.vocab_size or 0)
            else:
                self.n_features_in_ = seqs[0].shape[1]
            return seqs
        if kind != self.input_kind_:
            raise ShapeError(f"estimator was fitted on {self.input_kind_} inputs, got {kind}")
        if kind == "ids":
            if max(int(s.max()) for s in seqs) >= self.vocab_size_:
                raise ParameterError("token id outside the fitted vocabulary")
        elif seqs[0].shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} features, got {seqs[0].shape[1]}")
        return seqs

    def _vocab(self):
        return [f"w{i}" for i in range(self.vocab_size_)] if self.input_kind_ == "ids" else None

    def _fit(self, samples, label_names, crf=False):
        spec = ModelSpec(cell=self.cell, hidden=self.hidden, embedding_dim=self.embedding_dim,
                         bidirectional=self.bidirectional, crf=crf)
        data = Dataset(samples, label_names, self._vocab())
        self.model_, self.record_ = train(spec, data, self._train_config())
        return self

    def transform(self, X):
        """Hidden feature vectors (``T x Hf`` per sequence)."""
        check_is_fitted(self, "model_")
        seqs = self._inputs(X)
        return hidden_features(self.model_, [Sample(s, 0) for s in seqs])


class SequenceTagger(_SequenceEstimator):
    """Recurrent tagger predicting one label per time step.

    ``X`` is a list of integer token-id arrays or of ``T x d`` float arrays;
    ``y`` a list of equally long label arrays. ``method`` picks standard
    training or one of the mixup variants ("input", "pom", "ttm").
    """

    def __init__(self, method="standard", cell="lstm", hidden=32, embedding_dim=32,
                 bidirectional=False, crf=False, crf_mix="score", alpha=1.0, rho=0.0,
                 epochs=30, lr=0.1, halve_every=10, batch_size=1, clip=None,
                 vocab_size=None, random_state=0):
        super().__init__(method, cell, hidden, embedding_dim, bidirectional, alpha, rho,
                         epochs, lr, halve_every, batch_size, clip, vocab_size, random_state)
        self.crf = crf
        self.crf_mix = crf_mix

    def fit(self, X, y):
        seqs = self._inputs(X, fitting=True)
        ys = check_tag_targets(seqs, y)
        self.classes_ = np.unique(np.concatenate(ys))
        if self.classes_.size < 2:
            raise ParameterError("need at least two distinct labels")
        samples = [Sample(s, np.searchsorted(self.classes_, t)) for s, t in zip(seqs, ys)]
        return self._fit(samples, [str(c) for c in self.classes_], crf=self.crf)

    def predict_proba(self, X):
        """Per-step class probabilities; CRF models return posterior marginals."""
        check_is_fitted(self, "model_")
        seqs = self._inputs(X)
        out = []
        for e in emissions(self.model_, [Sample(s, np.zeros(len(s), dtype=int)) for s in seqs]):
            if self.model_.crf:
                out.append(crf_ops.marginals(e, self.model_.params["transitions"])[1])
            else:
                out.append(softmax(e))
        return out

    def predict(self, X):
        check_is_fitted(self, "model_")
        seqs = self._inputs(X)
        out = []
        for e in emissions(self.model_, [Sample(s, np.zeros(len(s), dtype=int)) for s in seqs]):
            if self.model_.crf:
                idx = crf_ops.viterbi(e, self.model_.params["transitions"])[0]
            else:
                idx = np.argmax(e, axis=1)
            out.append(self.classes_[idx])
        return out

    def score(self, X, y, sample_weight=None):
        """Token accuracy."""
        pred = self.predict(X)
        ys = check_tag_targets(pred, y)
        hits = sum(int(np.sum(p == t)) for p, t in zip(pred, ys))
        return hits / sum(len(t) for t in ys)


class SequenceClassifier(ClassifierMixin, _SequenceEstimator):
    """Recurrent classifier reading its prediction at the last step of each sequence."""

    def fit(self, X, y):
        seqs = self._inputs(X, fitting=True)
        y = check_class_targets(seqs, y)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ParameterError("need at least two distinct labels")
        idx = np.searchsorted(self.classes_, y)
        samples = [Sample(s, int(c)) for s, c in zip(seqs, idx)]
        return self._fit(samples, [str(c) for c in self.classes_])

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        seqs = self._inputs(X)
        return np.array([softmax(e[-1]) for e in emissions(self.model_, [Sample(s, 0) for s in seqs])])

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
