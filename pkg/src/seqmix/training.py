"""Training driver, evaluation and the rho sweep."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import crf as crf_ops
from .exceptions import NumericError, ParameterError
from .lambda_process import LambdaConfig, sample_trajectories
from .metrics import f1_metrics, token_accuracy
from .mixup import canonical_method, collate, objective
from .numkernel import softmax
from .recurrent import Model, embed, encode, init_model, learning_rate, sgd_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimisation and mixup settings.

    ``halve_every`` epochs the step size halves (``schedule='step'``); with
    ``schedule='plateau'`` it halves once the epoch training loss has not
    improved for ``patience`` epochs. ``lambda_override`` pins every mixing
    coefficient to a constant and exists for identity checks.
    """

    method: str = "standard"
    lr: float = 0.1
    halve_every: int = 10
    lr_floor: float = 0.0
    schedule: str = "step"
    patience: int = 6
    epochs: int = 30
    batch_size: int = 1
    alpha: float = 1.0
    rho: float = 0.0
    clip: float = None
    seed: int = 0
    crf_mix: str = "score"
    select_by_dev: bool = False
    lambda_override: float = None

    def __post_init__(self):
        self.method = canonical_method(self.method)
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")
        if self.epochs < 0:
            raise ParameterError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be at least 1")
        if self.schedule not in ("step", "plateau"):
            raise ParameterError("schedule must be 'step' or 'plateau'")
        LambdaConfig(self.alpha, self.rho, 1)


@dataclass
class ModelSpec:
    """What to build when :func:`train` is given no model."""

    cell: str = "lstm"
    hidden: int = 32
    embedding_dim: int = 32
    bidirectional: bool = False
    crf: bool = False


@dataclass
class RunRecord:
    config: dict
    seed: int
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)
    dev_metrics: dict = field(default_factory=dict)
    test_metrics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    status: str = "ok"
    error: str = None

    def to_dict(self):
        return asdict(self)


def _streams(seed):
    init, shuffle, mix = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(mix)


def build_model(spec, dataset, rng):
    dense_dim = dataset.input_dim
    return init_model(
        spec.cell,
        dense_dim if dense_dim is not None else spec.embedding_dim,
        spec.hidden,
        dataset.n_classes,
        vocab_size=None if dense_dim is not None else len(dataset.vocab),
        bidirectional=spec.bidirectional,
        crf=spec.crf and dataset.is_tagging,
        random_state=rng,
    )


def iter_batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_epoch(model, samples, cfg, lr, rng_shuffle, rng_mix):
    """One pass over ``samples``; returns ``(model, mean batch loss)``."""
    total, count = 0.0, 0
    # partners come from a permutation of the whole epoch so size-1 batches still mix
    partner_of = None if cfg.method == "standard" else rng_mix.permutation(len(samples))
    for idx in iter_batches(len(samples), cfg.batch_size, rng_shuffle):
        batch_samples = [samples[i] for i in idx]
        if cfg.method == "standard":
            batch = collate(batch_samples)
            loss, grads = objective(model, batch, crf_mix=cfg.crf_mix)
        else:
            partners = [samples[partner_of[i]] for i in idx]
            width = max(len(s) for s in batch_samples + partners)
            batch = collate(batch_samples, width)
            secondary = collate(partners, width)
            if cfg.lambda_override is not None:
                lam = np.full((len(idx), width), float(cfg.lambda_override))
            else:
                lam = sample_trajectories(LambdaConfig(cfg.alpha, cfg.rho, width), len(idx), rng_mix)
                if cfg.rho == 0.0 and np.any(lam != lam[:, :1]):
                    raise AssertionError("rho = 0 must yield constant trajectories")
            loss, grads = objective(model, batch, cfg.method, secondary, lam, cfg.crf_mix)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss {loss}")
        model = sgd_step(model, grads, lr, cfg.clip)
        total += loss
        count += 1
    return model, total / max(count, 1)


def train(init, dataset, cfg, dev=None, test=None):
    """Fit a model with SGD; returns ``(model, RunRecord)``.

    ``init`` is a :class:`Model` (copied, not mutated) or a
    :class:`ModelSpec`. On a numeric failure the partial record is attached
    to the raised :class:`NumericError` as ``.record``.
    """
    rng_init, rng_shuffle, rng_mix = _streams(cfg.seed)
    model = init.copy() if isinstance(init, Model) else build_model(init, dataset, rng_init)
    record = RunRecord(config=asdict(cfg), seed=cfg.seed)
    start = time.perf_counter()
    samples = list(dataset.samples)
    lr = cfg.lr
    best_loss, stale = math.inf, 0
    best_dev, best_model = -math.inf, None
    try:
        for epoch in range(cfg.epochs):
            if cfg.schedule == "step":
                lr = learning_rate(cfg.lr, epoch, cfg.halve_every, cfg.lr_floor)
            record.learning_rates.append(lr)
            model, loss = train_epoch(model, samples, cfg, lr, rng_shuffle, rng_mix)
            record.train_loss.append(loss)
            if cfg.schedule == "plateau":
                if loss < best_loss:
                    best_loss, stale = loss, 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        lr, stale = max(lr / 2.0, cfg.lr_floor), 0
            if dev is not None:
                metrics = evaluate(model, dev, crf_mix=cfg.crf_mix)
                record.dev_loss.append(metrics["nll"])
                score = metrics.get("token_f1", metrics.get("accuracy"))
                if cfg.select_by_dev and score > best_dev:
                    best_dev, best_model = score, model.copy()
                if not math.isfinite(metrics["nll"]):
                    raise NumericError("non-finite dev loss")
    except NumericError as exc:
        record.status, record.error = "numeric-failure", str(exc)
        record.wall_time = time.perf_counter() - start
        exc.record = record
        raise
    if best_model is not None:
        model = best_model
    if dev is not None:
        record.dev_metrics = evaluate(model, dev, crf_mix=cfg.crf_mix)
    if test is not None:
        record.test_metrics = evaluate(model, test, crf_mix=cfg.crf_mix)
    record.wall_time = time.perf_counter() - start
    return model, record


# ---------------------------------------------------------------------------
# inference


def hidden_features(model, samples, batch_size=256):
    """List of ``T_i x Hf`` hidden-feature arrays, one per sample."""
    out = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        batch = collate(chunk)
        F, _ = encode(model, embed(model, batch.inputs), batch.lengths)
        out.extend(F[b, : batch.lengths[b]] for b in range(batch.size))
    return out


def emissions(model, samples, batch_size=256):
    W, b = model.params["out.W"], model.params["out.b"]
    return [F @ W + b for F in hidden_features(model, samples, batch_size)]


def predict_tags(model, samples):
    """Viterbi paths for CRF models, per-step argmax otherwise."""
    out = []
    for e in emissions(model, samples):
        if model.crf:
            out.append(crf_ops.viterbi(e, model.params["transitions"])[0])
        else:
            out.append(np.argmax(e, axis=1))
    return out


def predict_proba_sequences(model, samples):
    """Class probabilities read at each sequence's final step (``n x C``)."""
    return np.array([softmax(e[-1]) for e in emissions(model, samples)])


def evaluate(model, dataset, crf_mix="score"):
    """Loss and accuracy metrics on a dataset.

    Tagging reports ``nll`` (mean per-sentence CRF NLL, or mean per-token
    cross-entropy), token accuracy and token/span precision, recall and F-1.
    Classification reports ``nll`` and ``accuracy``.
    """
    samples = dataset.samples
    if not samples:
        return {}
    if not dataset.is_tagging:
        probs = predict_proba_sequences(model, samples)
        y = np.array([s.labels for s in samples])
        nll = float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))))
        return {"nll": nll, "accuracy": float(np.mean(probs.argmax(axis=1) == y))}
    ems = emissions(model, samples)
    if model.crf:
        A = model.params["transitions"]
        nll = float(np.mean([crf_ops.crf_nll(e, A, s.labels) for e, s in zip(ems, samples)]))
        preds = [crf_ops.viterbi(e, A)[0] for e in ems]
    else:
        losses = []
        for e, s in zip(ems, samples):
            z = e - e.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            losses.append(-np.mean(logp[np.arange(len(s)), s.labels]))
        nll = float(np.mean(losses))
        preds = [np.argmax(e, axis=1) for e in ems]
    pred_tags = [dataset.tag_names(p) for p in preds]
    gold_tags = [dataset.tag_names(s.labels) for s in samples]
    tp, tr, tf = f1_metrics(pred_tags, gold_tags, "token")
    sp, sr, sf = f1_metrics(pred_tags, gold_tags, "span")
    return {
        "nll": nll,
        "accuracy": token_accuracy(pred_tags, gold_tags),
        "token_precision": tp, "token_recall": tr, "token_f1": tf,
        "span_precision": sp, "span_recall": sr, "span_f1": sf,
    }


# ---------------------------------------------------------------------------
# rho sweep


def sweep_rho(spec, train_set, test_set, base_cfg, rhos, methods, repeats, dev=None, metric="token_f1"):
    """Train every (rho, method) cell ``repeats`` times.

    Returns ``(rows, runs)``: one summary row per cell with mean and standard
    deviation of test loss and ``metric``, and the raw per-run results.
    """
    runs = []
    for rho in rhos:
        for method in methods:
            for rep in range(repeats):
                cfg = replace(base_cfg, method=method, rho=float(rho), seed=base_cfg.seed + rep)
                _, record = train(spec, train_set, cfg, dev=dev, test=test_set)
                runs.append({
                    "rho": float(rho), "method": cfg.method, "repeat": rep,
                    "test_nll": record.test_metrics["nll"],
                    "test_f1": record.test_metrics[metric],
                })
    rows = []
    for rho in rhos:
        for method in methods:
            cell = [r for r in runs if r["rho"] == float(rho) and r["method"] == canonical_method(method)]
            f1 = np.array([r["test_f1"] for r in cell])
            nll = np.array([r["test_nll"] for r in cell])
            rows.append({
                "rho": float(rho), "method": canonical_method(method), "runs": len(cell),
                "f1_mean": float(f1.mean()), "f1_std": float(f1.std(ddof=1)) if len(cell) > 1 else 0.0,
                "nll_mean": float(nll.mean()), "nll_std": float(nll.std(ddof=1)) if len(cell) > 1 else 0.0,
            })
    return rows, runs
