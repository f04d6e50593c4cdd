"""Recurrent cells, the linear-softmax output layer and backpropagation through time.

Everything is batched over a leading axis and written against plain numpy
arrays. A cell maps ``(x_t, s_{t-1}) -> s_t`` where the state ``s`` is the
hidden vector ``h`` for ``rnn``/``gru`` and the concatenation ``[h, c]`` for
``lstm``. The recurrence engine optionally runs the *mixed* update

    s_t = lam_t * f(x_t, s_{t-1}) + (1 - lam_t) * f(x'_t, s_{t-1})

which is what through-time mixup needs; with no secondary input it is the
ordinary recurrence.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import NumericError, ParameterError, ShapeError
from .numkernel import DTYPE, as_rng, softmax

GATES = {"rnn": 1, "gru": 3, "lstm": 4}
CHECKPOINT_FORMAT = "seqmix-model"


def state_size(kind, hidden):
    return 2 * hidden if kind == "lstm" else hidden


@dataclass
class CellParams:
    """One recurrent cell. ``W`` is ``d x G*H``, ``U`` is ``H x G*H``.

    Gate blocks are ordered ``[r, z, n]`` for gru and ``[i, f, g, o]`` for
    lstm.
    """

    kind: str
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self):
        return self.U.shape[0]


# ---------------------------------------------------------------------------
# single-step cell kernels (batched over axis 0)


def _step(kind, xp, s, U, H):
    """One cell update from precomputed input projection ``xp = x W + b``."""
    if kind == "rnn":
        h = np.tanh(xp + s @ U)
        return h, (s, h)
    if kind == "gru":
        a_rz = xp[:, : 2 * H] + s @ U[:, : 2 * H]
        r = expit(a_rz[:, :H])
        z = expit(a_rz[:, H:])
        rs = r * s
        n = np.tanh(xp[:, 2 * H :] + rs @ U[:, 2 * H :])
        h = (1.0 - z) * n + z * s
        return h, (s, r, z, rs, n)
    if kind == "lstm":
        h_prev, c_prev = s[:, :H], s[:, H:]
        a = xp + h_prev @ U
        i = expit(a[:, :H])
        f = expit(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = expit(a[:, 3 * H :])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        return np.concatenate([h, c], axis=1), (h_prev, c_prev, i, f, g, o, tc)
    raise ParameterError(f"unknown cell kind {kind!r}")


def _step_backward(kind, ds, cache, U, H, dU):
    """Reverse of :func:`_step`. Accumulates into ``dU``; returns ``(dxp, ds_prev)``."""
    if kind == "rnn":
        s, h = cache
        da = ds * (1.0 - h * h)
        dU += s.T @ da
        return da, da @ U.T
    if kind == "gru":
        s, r, z, rs, n = cache
        dn = ds * (1.0 - z)
        dz = ds * (s - n)
        ds_prev = ds * z
        da_n = dn * (1.0 - n * n)
        U_n = U[:, 2 * H :]
        dU[:, 2 * H :] += rs.T @ da_n
        drs = da_n @ U_n.T
        ds_prev += drs * r
        da_rz = np.concatenate([drs * s * r * (1.0 - r), dz * z * (1.0 - z)], axis=1)
        dU[:, : 2 * H] += s.T @ da_rz
        ds_prev += da_rz @ U[:, : 2 * H].T
        return np.concatenate([da_rz, da_n], axis=1), ds_prev
    if kind == "lstm":
        h_prev, c_prev, i, f, g, o, tc = cache
        dh, dc = ds[:, :H], ds[:, H:]
        dc = dc + dh * o * (1.0 - tc * tc)
        da = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        dU += h_prev.T @ da
        return da, np.concatenate([da @ U.T, dc * f], axis=1)
    raise ParameterError(f"unknown cell kind {kind!r}")


def cell_forward(cell, x_t, state):
    """Apply one cell update to a single example.

    ``state`` is ``h`` (length H) for rnn/gru and either ``[h, c]`` (length
    2H) or just ``h`` (then ``c = 0``) for lstm. Returns ``(new_state, cache)``;
    the first H entries of ``new_state`` are ``h_t``.
    """
    H = cell.hidden
    x_t = np.asarray(x_t, dtype=DTYPE)
    state = np.asarray(state, dtype=DTYPE)
    if x_t.shape != (cell.W.shape[0],):
        raise ShapeError(f"input of length {x_t.shape} does not match cell input size {cell.W.shape[0]}")
    if cell.kind == "lstm" and state.shape == (H,):
        state = np.concatenate([state, np.zeros(H)])
    if state.shape != (state_size(cell.kind, H),):
        raise ShapeError(f"state of shape {state.shape} does not match hidden size {H}")
    s, cache = _step(cell.kind, (x_t @ cell.W + cell.b)[None], state[None], cell.U, H)
    return s[0], cache


# ---------------------------------------------------------------------------
# model container


@dataclass
class Model:
    """Parameters plus the dimensions needed to interpret them.

    Parameter names: ``fw.W``, ``fw.U``, ``fw.b`` (and ``bw.*`` for the
    backward direction), ``out.W`` (``Hf x C``), ``out.b``, optional
    ``embedding`` (``vocab x d``) and ``transitions`` (``C x C``).
    """

    cell: str
    input_dim: int
    hidden: int
    n_classes: int
    params: dict
    bidirectional: bool = False
    vocab_size: int = None
    crf: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def feature_dim(self):
        return self.hidden * (2 if self.bidirectional else 1)

    @property
    def directions(self):
        return ("fw", "bw") if self.bidirectional else ("fw",)

    def cell_params(self, direction="fw"):
        p = self.params
        return CellParams(self.cell, p[f"{direction}.W"], p[f"{direction}.U"], p[f"{direction}.b"])

    def copy(self):
        return Model(
            self.cell, self.input_dim, self.hidden, self.n_classes,
            {k: v.copy() for k, v in self.params.items()},
            self.bidirectional, self.vocab_size, self.crf, dict(self.meta),
        )

    def zeros_like(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def init_model(cell, input_dim, hidden, n_classes, *, vocab_size=None,
               bidirectional=False, crf=False, random_state=None):
    """Fresh model: weights ~ U(-1/sqrt(H), 1/sqrt(H)), biases and transitions 0."""
    if cell not in GATES:
        raise ParameterError(f"cell must be one of {sorted(GATES)}, got {cell!r}")
    if min(input_dim, hidden, n_classes) < 1:
        raise ParameterError("input_dim, hidden and n_classes must be positive")
    rng = as_rng(random_state)
    G = GATES[cell]
    bound = 1.0 / math.sqrt(hidden)
    params = {}
    if vocab_size is not None:
        eb = 1.0 / math.sqrt(input_dim)
        params["embedding"] = rng.uniform(-eb, eb, (vocab_size, input_dim))
    directions = ("fw", "bw") if bidirectional else ("fw",)
    for direction in directions:
        params[f"{direction}.W"] = rng.uniform(-bound, bound, (input_dim, G * hidden))
        params[f"{direction}.U"] = rng.uniform(-bound, bound, (hidden, G * hidden))
        params[f"{direction}.b"] = np.zeros(G * hidden)
    feat = hidden * len(directions)
    params["out.W"] = rng.uniform(-bound, bound, (feat, n_classes))
    params["out.b"] = np.zeros(n_classes)
    if crf:
        params["transitions"] = np.zeros((n_classes, n_classes))
    return Model(cell, input_dim, hidden, n_classes, params, bidirectional, vocab_size, crf)


def flatten_params(params, keys=None):
    keys = sorted(params) if keys is None else keys
    return np.concatenate([params[k].ravel() for k in keys])


def unflatten_params(vector, template, keys=None):
    keys = sorted(template) if keys is None else keys
    out, pos = {}, 0
    for k in keys:
        n = template[k].size
        out[k] = vector[pos : pos + n].reshape(template[k].shape).copy()
        pos += n
    return out


# ---------------------------------------------------------------------------
# recurrence engine


def _reverse_index(lengths, T):
    """Per-row index reversing the first ``lengths[b]`` steps, padding left in place."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def _take_time(a, idx):
    return np.take_along_axis(a, idx.reshape(idx.shape + (1,) * (a.ndim - 2)), axis=1)


def run_recurrence(cell, X, lam=None, X2=None):
    """Unroll ``cell`` over ``X`` (B x T x d) from a zero state.

    With ``X2`` given, runs the shared mixed update weighted by ``lam``
    (B x T). Returns ``(states, cache)`` with ``states`` of shape
    ``B x (T+1) x S`` and ``states[:, 0] = 0``.
    """
    B, T, _ = X.shape
    H = cell.hidden
    S = state_size(cell.kind, H)
    XP = X @ cell.W + cell.b
    XP2 = None if X2 is None else X2 @ cell.W + cell.b
    states = np.zeros((B, T + 1, S))
    caches = []
    for t in range(T):
        s_prev = states[:, t]
        s_a, c_a = _step(cell.kind, XP[:, t], s_prev, cell.U, H)
        if XP2 is None:
            states[:, t + 1] = s_a
            caches.append((c_a, None))
        else:
            s_b, c_b = _step(cell.kind, XP2[:, t], s_prev, cell.U, H)
            lt = lam[:, t, None]
            states[:, t + 1] = lt * s_a + (1.0 - lt) * s_b
            caches.append((c_a, c_b))
    return states, (X, X2, lam, caches)


def run_recurrence_backward(cell, dH, cache, grads, prefix):
    """Backprop ``dH`` (B x T x H, gradient w.r.t. hidden outputs h_1..h_T).

    Adds parameter gradients into ``grads[prefix + '.W' | '.U' | '.b']`` and
    returns ``(dX, dX2)``.
    """
    X, X2, lam, caches = cache
    B, T, _ = X.shape
    H = cell.hidden
    S = state_size(cell.kind, H)
    dU = np.zeros_like(cell.U)
    dXP = np.zeros((B, T, cell.U.shape[1]))
    dXP2 = None if X2 is None else np.zeros_like(dXP)
    ds = np.zeros((B, S))
    for t in range(T - 1, -1, -1):
        ds[:, :H] += dH[:, t]
        c_a, c_b = caches[t]
        if c_b is None:
            dXP[:, t], ds = _step_backward(cell.kind, ds, c_a, cell.U, H, dU)
        else:
            lt = lam[:, t, None]
            dXP[:, t], ds_a = _step_backward(cell.kind, lt * ds, c_a, cell.U, H, dU)
            dXP2[:, t], ds_b = _step_backward(cell.kind, (1.0 - lt) * ds, c_b, cell.U, H, dU)
            ds = ds_a + ds_b
    grads[f"{prefix}.U"] += dU
    grads[f"{prefix}.W"] += np.einsum("btd,btg->dg", X, dXP)
    grads[f"{prefix}.b"] += dXP.sum(axis=(0, 1))
    dX = dXP @ cell.W.T
    dX2 = None
    if dXP2 is not None:
        grads[f"{prefix}.W"] += np.einsum("btd,btg->dg", X2, dXP2)
        grads[f"{prefix}.b"] += dXP2.sum(axis=(0, 1))
        dX2 = dXP2 @ cell.W.T
    return dX, dX2


def encode(model, X, lengths, lam=None, X2=None):
    """Hidden features ``B x T x Hf`` for every step (both directions concatenated).

    The backward direction reverses each row within its own length, so
    padding never leaks into valid positions.
    """
    H = model.hidden
    feats, caches = [], []
    for direction in model.directions:
        cell = model.cell_params(direction)
        if direction == "bw":
            idx = _reverse_index(lengths, X.shape[1])
            Xd = _take_time(X, idx)
            X2d = None if X2 is None else _take_time(X2, idx)
            lamd = None if lam is None else _take_time(lam, idx)
        else:
            idx, Xd, X2d, lamd = None, X, X2, lam
        states, cache = run_recurrence(cell, Xd, lamd, X2d)
        h = states[:, 1:, :H]
        if idx is not None:
            h = _take_time(h, idx)
        feats.append(h)
        caches.append((direction, idx, states, cache))
    F = feats[0] if len(feats) == 1 else np.concatenate(feats, axis=2)
    return F, caches


def encode_backward(model, dF, caches, grads):
    """Reverse of :func:`encode`; returns ``(dX, dX2)``."""
    H = model.hidden
    dX = dX2 = None
    for k, (direction, idx, _, cache) in enumerate(caches):
        dH = dF[:, :, k * H : (k + 1) * H]
        if idx is not None:
            dH = _take_time(dH, idx)
        gx, gx2 = run_recurrence_backward(model.cell_params(direction), dH, cache, grads, direction)
        if idx is not None:
            gx = _take_time(gx, idx)
            gx2 = None if gx2 is None else _take_time(gx2, idx)
        dX = gx if dX is None else dX + gx
        if gx2 is not None:
            dX2 = gx2 if dX2 is None else dX2 + gx2
    return dX, dX2


def embed(model, inputs):
    """Dense inputs pass through; integer token ids are looked up."""
    inputs = np.asarray(inputs)
    if np.issubdtype(inputs.dtype, np.integer):
        if model.vocab_size is None:
            raise ShapeError("token-id inputs need a model with an embedding table")
        return model.params["embedding"][inputs]
    return inputs.astype(DTYPE, copy=False)


# ---------------------------------------------------------------------------
# output layer and losses


def output_forward(model, h):
    """``logits = h W + b`` and their softmax, for any leading shape."""
    logits = np.asarray(h, dtype=DTYPE) @ model.params["out.W"] + model.params["out.b"]
    return logits, softmax(logits)


def soft_cross_entropy(logits, targets, weights):
    """Weighted sum of ``-sum_c q_c log p_c``; returns ``(loss, dlogits)``.

    ``targets`` rows are distributions; ``weights`` has the leading shape of
    ``logits`` minus the class axis.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    per = -(targets * logp).sum(axis=-1)
    loss = float((weights * per).sum())
    dlogits = (np.exp(logp) - targets) * weights[..., None]
    return loss, dlogits


def one_hot(labels, n_classes):
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (n_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


# ---------------------------------------------------------------------------
# single-sequence convenience API


@dataclass
class Sample:
    """One sequence. ``features`` is ``T x d`` floats or ``T`` token ids;
    ``labels`` is a length-T tag-index array (tagging) or one int (classification)."""

    features: np.ndarray
    labels: object

    def __post_init__(self):
        feats = np.asarray(self.features)
        if feats.ndim == 1 and not np.issubdtype(feats.dtype, np.integer):
            raise ShapeError("dense features must be T x d; token ids must be integers")
        if feats.shape[0] < 1:
            raise ParameterError("empty sequence")
        self.features = feats
        if np.ndim(self.labels) == 0:
            self.labels = int(self.labels)
        else:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (feats.shape[0],):
                raise ShapeError("need exactly one label per timestep")

    def __len__(self):
        return self.features.shape[0]

    @property
    def is_tagging(self):
        return not isinstance(self.labels, int)


@dataclass
class HiddenTrace:
    """Hidden states of one forward pass: ``states[d]`` is ``(T+1) x S`` for
    direction ``d`` (row 0 is the zero initial state) and ``features`` the
    ``T x Hf`` vectors fed to the output layer."""

    states: list
    features: np.ndarray
    caches: list


def forward_sequence(model, sample):
    """Run the encoder and output layer over one sample; returns ``(trace, emissions)``."""
    if not isinstance(sample, Sample):
        sample = Sample(*sample)
    X = embed(model, sample.features[None])
    F, caches = encode(model, X, np.array([len(sample)]))
    emissions, _ = output_forward(model, F[0])
    states = []
    for _, idx, st, _ in caches:
        states.append(st[0])
    return HiddenTrace(states, F[0], caches), emissions


def bptt(model, sample, target):
    """Mean per-step soft-label cross-entropy of one sample and its exact gradient.

    ``target`` is ``T x C`` with rows summing to one (mixup produces soft
    rows). Returns ``(loss, grads)`` with ``grads`` keyed like ``model.params``.
    """
    if not isinstance(sample, Sample):
        sample = Sample(*sample)
    target = np.asarray(target, dtype=DTYPE)
    T = len(sample)
    if target.shape != (T, model.n_classes):
        raise ShapeError(f"target must be {T} x {model.n_classes}")
    if np.any(target < 0) or not np.allclose(target.sum(axis=1), 1.0, atol=1e-9):
        raise ParameterError("target rows must be probability distributions")
    grads = model.zeros_like()
    inputs = sample.features[None]
    X = embed(model, inputs)
    lengths = np.array([T])
    F, caches = encode(model, X, lengths)
    logits, _ = output_forward(model, F)
    loss, dE = soft_cross_entropy(logits, target[None], np.full((1, T), 1.0 / T))
    dF = backprop_output(model, F, dE, grads)
    dX, _ = encode_backward(model, dF, caches, grads)
    embed_backward(model, inputs, dX, grads)
    return loss, grads


def backprop_output(model, F, dE, grads):
    W = model.params["out.W"]
    grads["out.W"] += F.reshape(-1, F.shape[-1]).T @ dE.reshape(-1, dE.shape[-1])
    grads["out.b"] += dE.reshape(-1, dE.shape[-1]).sum(axis=0)
    return dE @ W.T


def embed_backward(model, inputs, dX, grads, weight=None):
    inputs = np.asarray(inputs)
    if dX is None or not np.issubdtype(inputs.dtype, np.integer):
        return
    g = dX if weight is None else dX * weight[..., None]
    np.add.at(grads["embedding"], inputs.reshape(-1), g.reshape(-1, g.shape[-1]))


# ---------------------------------------------------------------------------
# optimisation


def learning_rate(lr, epoch, halve_every=10, floor=0.0):
    """``lr * 2**-(epoch // halve_every)``, never below ``floor``."""
    if not halve_every:
        return lr
    return max(lr * 0.5 ** (epoch // halve_every), floor)


def global_norm(grads):
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_gradients(grads, threshold):
    """Rescale ``grads`` so their global L2 norm is at most ``threshold``."""
    norm = global_norm(grads)
    if threshold is None or norm <= threshold:
        return grads
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}


def sgd_step(model, grads, lr, clip=None):
    """Return a new model after ``theta <- theta - lr * grad`` (with optional clipping).

    Raises :class:`NumericError` before touching anything if a gradient is
    non-finite.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k}")
    grads = clip_gradients(grads, clip)
    new = model.copy()
    for k, g in grads.items():
        new.params[k] -= lr * g
    return new


# ---------------------------------------------------------------------------
# checkpoints


def model_to_dict(model):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "cell": model.cell,
        "input_dim": model.input_dim,
        "hidden": model.hidden,
        "n_classes": model.n_classes,
        "bidirectional": model.bidirectional,
        "vocab_size": model.vocab_size,
        "crf": model.crf,
        "meta": model.meta,
        "params": {
            k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
            for k, v in sorted(model.params.items())
        },
    }


def model_from_dict(doc):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ParameterError("not a seqmix model checkpoint")
    params = {
        k: np.array(v["data"], dtype=DTYPE).reshape(v["shape"]) for k, v in doc["params"].items()
    }
    return Model(
        doc["cell"], doc["input_dim"], doc["hidden"], doc["n_classes"], params,
        doc["bidirectional"], doc["vocab_size"], doc["crf"], doc.get("meta", {}),
    )


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
