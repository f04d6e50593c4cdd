"""Sequence Input Mixup, Pre-Output Mixup (POM) and Through-Time Mixup (TTM).

All methods share one objective, :func:`objective`, evaluated on a padded
primary batch and an optional secondary batch of the same width:

* ``standard``: ordinary training on the primary batch.
* ``input``: encode ``lam * x + (1 - lam) * x'`` (after embedding lookup).
* ``pom``: encode both batches independently and feed the mixed hidden
  features to the output layer; gradients flow through both streams.
* ``ttm``: one shared state, ``s_t = lam f(x_t, s) + (1 - lam) f(x'_t, s)``.

Targets are mixed with the same coefficients. Where the secondary sequence
is shorter than the primary, the coefficient is forced to 1 so the primary
trains unmixed there.
"""

from dataclasses import dataclass

import numpy as np

from . import crf as crf_ops
from .exceptions import ParameterError, ShapeError
from .lambda_process import LambdaConfig, LambdaTrajectory, sample_trajectories
from .numkernel import as_rng
from .recurrent import (
    Sample,
    backprop_output,
    embed,
    embed_backward,
    encode,
    encode_backward,
    one_hot,
    output_forward,
    soft_cross_entropy,
)

METHODS = ("standard", "input", "pom", "ttm")
_ALIASES = {"input_mixup": "input", "none": "standard"}


def canonical_method(method):
    method = _ALIASES.get(method, method)
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    return method


@dataclass
class SeqBatch:
    """Right-padded batch. ``inputs`` is ``B x T x d`` floats or ``B x T`` ids;
    ``labels`` is ``B x T`` (tagging) or ``B`` (classification)."""

    inputs: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray

    @property
    def size(self):
        return self.lengths.size

    @property
    def width(self):
        return self.inputs.shape[1]

    @property
    def is_tagging(self):
        return self.labels.ndim == 2

    @property
    def mask(self):
        return np.arange(self.width)[None, :] < self.lengths[:, None]


def collate(samples, width=None):
    """Pad a list of :class:`Sample` to a common width (default: longest)."""
    if not samples:
        raise ParameterError("cannot collate an empty batch")
    lengths = np.array([len(s) for s in samples])
    width = int(lengths.max()) if width is None else width
    if width < lengths.max():
        raise ShapeError("width shorter than the longest sequence")
    first = samples[0].features
    inputs = np.zeros((len(samples), width) + first.shape[1:], dtype=first.dtype)
    tagging = samples[0].is_tagging
    labels = np.zeros((len(samples), width) if tagging else len(samples), dtype=np.int64)
    for b, s in enumerate(samples):
        if s.is_tagging != tagging:
            raise ParameterError("cannot mix tagging and classification samples in one batch")
        inputs[b, : len(s)] = s.features
        if tagging:
            labels[b, : len(s)] = s.labels
        else:
            labels[b] = s.labels
    return SeqBatch(inputs, lengths, labels)


@dataclass
class MixedPair:
    """Two samples and the trajectory mixing them (length = primary length)."""

    primary: Sample
    secondary: Sample
    traj: LambdaTrajectory

    def __post_init__(self):
        if len(self.traj) != len(self.primary):
            raise ShapeError("trajectory length must equal the primary sequence length")


def _stable_mean(row):
    return float(row[0]) if np.all(row == row[0]) else float(row.mean())


def objective(model, batch, method="standard", secondary=None, lam=None, crf_mix="score",
              need_grad=True):
    """Mean training loss over ``batch`` and its gradient.

    ``secondary`` must be collated to the same width as ``batch`` and
    ``lam`` is ``B x width``. Returns ``(loss, grads)``; ``grads`` is None
    when ``need_grad`` is false and the backward pass is skipped.
    """
    method = canonical_method(method)
    B, T = batch.size, batch.width
    grads = model.zeros_like()
    La = batch.lengths
    Xa = embed(model, batch.inputs)
    if method == "standard":
        lam = np.ones((B, T))
        Lb, Xb, yb = La, None, batch.labels
    else:
        if secondary is None or lam is None:
            raise ParameterError(f"method {method!r} needs a secondary batch and coefficients")
        if secondary.width != T or secondary.size != B:
            raise ShapeError("primary and secondary batches must share size and width")
        lam = np.array(lam, dtype=np.float64)
        if lam.shape != (B, T):
            raise ShapeError(f"coefficients must be {B} x {T}")
        Lb, yb = secondary.lengths, secondary.labels
        lam[np.arange(T)[None, :] >= Lb[:, None]] = 1.0
        Xb = embed(model, secondary.inputs)

    lam3 = lam[..., None]
    if method == "standard":
        F, cache = encode(model, Xa, La)
    elif method == "input":
        F, cache = encode(model, lam3 * Xa + (1.0 - lam3) * Xb, La)
    elif method == "pom":
        Fa, cache_a = encode(model, Xa, La)
        Fb, cache_b = encode(model, Xb, Lb)
        F = lam3 * Fa + (1.0 - lam3) * Fb
    else:
        F, cache = encode(model, Xa, La, lam, Xb)

    E, _ = output_forward(model, F)
    dE = np.zeros_like(E)
    if batch.is_tagging and model.crf:
        loss = 0.0
        A = model.params["transitions"]
        for b in range(B):
            L = La[b]
            nll, de, dA = crf_ops.crf_nll_and_grad(
                E[b, :L], A, batch.labels[b, :L], yb[b, :L], lam[b, :L], mode=crf_mix,
                need_grad=need_grad,
            )
            loss += nll / B
            if need_grad:
                dE[b, :L] = de / B
                grads["transitions"] += dA / B
    elif batch.is_tagging:
        C = model.n_classes
        Q = lam3 * one_hot(batch.labels, C) + (1.0 - lam3) * one_hot(yb, C)
        weights = batch.mask / (La[:, None] * B)
        loss, dE = soft_cross_entropy(E, Q, weights)
    else:
        rows = np.arange(B)
        last = La - 1
        lam_bar = np.array([_stable_mean(lam[b, : La[b]]) for b in range(B)])[:, None]
        C = model.n_classes
        Q = lam_bar * one_hot(batch.labels, C) + (1.0 - lam_bar) * one_hot(yb, C)
        loss, dlast = soft_cross_entropy(E[rows, last], Q, np.full(B, 1.0 / B))
        dE[rows, last] = dlast

    if not need_grad:
        return loss, None
    dF = backprop_output(model, F, dE, grads)
    if method == "standard":
        dX, _ = encode_backward(model, dF, cache, grads)
        embed_backward(model, batch.inputs, dX, grads)
    elif method == "input":
        dX, _ = encode_backward(model, dF, cache, grads)
        embed_backward(model, batch.inputs, dX, grads, lam)
        embed_backward(model, secondary.inputs, dX, grads, 1.0 - lam)
    elif method == "pom":
        dXa, _ = encode_backward(model, lam3 * dF, cache_a, grads)
        dXb, _ = encode_backward(model, (1.0 - lam3) * dF, cache_b, grads)
        embed_backward(model, batch.inputs, dXa, grads)
        embed_backward(model, secondary.inputs, dXb, grads)
    else:
        dXa, dXb = encode_backward(model, dF, cache, grads)
        embed_backward(model, batch.inputs, dXa, grads)
        embed_backward(model, secondary.inputs, dXb, grads)
    return loss, grads


def pairs_objective(model, pairs, method, crf_mix="score"):
    """:func:`objective` over a list of :class:`MixedPair`."""
    width = max(max(len(p.primary), len(p.secondary)) for p in pairs)
    primary = collate([p.primary for p in pairs], width)
    secondary = collate([p.secondary for p in pairs], width)
    lam = np.ones((len(pairs), width))
    for b, p in enumerate(pairs):
        lam[b, : len(p.traj)] = p.traj.values
    return objective(model, primary, method, secondary, lam, crf_mix)


def standard_step(model, sample, crf_mix="score"):
    return objective(model, collate([sample]), "standard", crf_mix=crf_mix)


def step_input_mixup(model, pair, crf_mix="score"):
    return pairs_objective(model, [pair], "input", crf_mix)


def step_pom(model, pair, crf_mix="score"):
    return pairs_objective(model, [pair], "pom", crf_mix)


def step_ttm(model, pair, crf_mix="score"):
    return pairs_objective(model, [pair], "ttm", crf_mix)


def step_classification(model, pair, method):
    """Sequence-level mixup: prediction at the last step, target mixed by the mean coefficient."""
    if pair.primary.is_tagging or pair.secondary.is_tagging:
        raise ParameterError("classification mixup needs sequence-level labels")
    return pairs_objective(model, [pair], method)


def make_pairs(samples, lambda_cfg, rng=None):
    """Pair sample ``i`` with sample ``perm[i]`` and draw one trajectory per pair."""
    if not samples:
        raise ParameterError("cannot pair an empty batch")
    rng = as_rng(rng)
    perm = rng.permutation(len(samples))
    width = max(len(s) for s in samples)
    cfg = LambdaConfig(lambda_cfg.alpha, lambda_cfg.rho, width)
    lam = sample_trajectories(cfg, len(samples), rng)
    pairs = []
    for i, j in enumerate(perm):
        L = len(samples[i])
        sub = LambdaConfig(lambda_cfg.alpha, lambda_cfg.rho, L)
        pairs.append(MixedPair(samples[i], samples[j], LambdaTrajectory(lam[i, :L], sub)))
    return pairs
