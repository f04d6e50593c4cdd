import numpy as np
import pytest

from seqmix.mixup import collate, objective
from seqmix.numkernel import finite_diff_grad, max_relative_error
from seqmix.recurrent import Sample, flatten_params, init_model, unflatten_params


def random_model(rng, cell, d, H, C, *, vocab=None, bidirectional=False, crf=False, scale=0.7):
    """Model with every parameter redrawn from N(0, scale^2) so no gradient is trivially zero."""
    m = init_model(cell, d, H, C, vocab_size=vocab, bidirectional=bidirectional, crf=crf, random_state=rng)
    for k in m.params:
        m.params[k] = rng.normal(0.0, scale, m.params[k].shape)
    return m


def random_sample(rng, d, C, length, *, vocab=None, tagging=True):
    feats = rng.integers(0, vocab, length) if vocab else rng.normal(size=(length, d))
    labels = rng.integers(0, C, length) if tagging else int(rng.integers(0, C))
    return Sample(feats, labels)


def gradient_error(model, batch, method="standard", secondary=None, lam=None, crf_mix="score"):
    """Max relative error of the analytic gradient against central differences."""
    keys = sorted(model.params)
    _, grads = objective(model, batch, method, secondary, lam, crf_mix)

    def loss(theta):
        m = model.copy()
        m.params = unflatten_params(theta, model.params, keys)
        return objective(m, batch, method, secondary, lam, crf_mix, need_grad=False)[0]

    numeric = finite_diff_grad(loss, flatten_params(model.params, keys), eps=1e-5)
    return max_relative_error(flatten_params(grads, keys), numeric)


def random_pair_batches(rng, d, C, B, *, vocab=None, tagging=True, max_len=6):
    a = [random_sample(rng, d, C, int(rng.integers(1, max_len + 1)), vocab=vocab, tagging=tagging)
         for _ in range(B)]
    b = [random_sample(rng, d, C, int(rng.integers(1, max_len + 1)), vocab=vocab, tagging=tagging)
         for _ in range(B)]
    width = max(len(s) for s in a + b)
    return collate(a, width), collate(b, width)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
