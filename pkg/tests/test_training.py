import numpy as np
import pytest

from seqmix.data import Dataset, generate_tagging, make_tagging_task, sample_tagging
from seqmix.exceptions import NumericError, ParameterError
from seqmix.recurrent import Sample, init_model
from seqmix.training import (
    ModelSpec,
    TrainConfig,
    evaluate,
    iter_batches,
    sweep_rho,
    train,
)

SPEC = ModelSpec(cell="rnn", hidden=6, embedding_dim=4)


@pytest.fixture
def tiny():
    return generate_tagging(12, 5, 10, 3, random_state=0, flip=0.1)


def _same_params(a, b):
    return all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_zero_epochs_leaves_model_unchanged(tiny):
    m = init_model("rnn", 4, 6, 3, vocab_size=10, random_state=0)
    out, rec = train(m, tiny, TrainConfig(epochs=0, method="pom"))
    assert _same_params(out, m) and rec.train_loss == []
    assert out is not m


def test_fixed_seed_is_bitwise_reproducible(tiny):
    cfg = TrainConfig(method="ttm", epochs=3, batch_size=4, rho=0.5, seed=7)
    a, ra = train(SPEC, tiny, cfg)
    b, rb = train(SPEC, tiny, cfg)
    assert ra.train_loss == rb.train_loss and _same_params(a, b)
    c, rc = train(SPEC, tiny, TrainConfig(method="ttm", epochs=3, batch_size=4, rho=0.5, seed=8))
    assert rc.train_loss != ra.train_loss


@pytest.mark.parametrize("method", ["input", "pom", "ttm"])
def test_lambda_one_matches_standard_training(tiny, method):
    base = dict(epochs=3, batch_size=3, seed=2, lr=0.5)
    _, std = train(SPEC, tiny, TrainConfig(**base))
    _, mix = train(SPEC, tiny, TrainConfig(method=method, lambda_override=1.0, **base))
    assert np.allclose(mix.train_loss, std.train_loss, rtol=0, atol=1e-12)


def test_mixup_with_single_sample_batches_actually_mixes(tiny):
    base = dict(epochs=1, batch_size=1, seed=1)
    _, std = train(SPEC, tiny, TrainConfig(**base))
    _, mix = train(SPEC, tiny, TrainConfig(method="pom", **base))
    assert mix.train_loss != std.train_loss


def test_step_schedule_recorded(tiny):
    _, rec = train(SPEC, tiny, TrainConfig(epochs=5, halve_every=2, lr=0.4))
    assert rec.learning_rates == [0.4, 0.4, 0.2, 0.2, 0.1]


def test_plateau_schedule_halves_after_patience():
    # zero weights with balanced labels are a stationary point, so the loss never improves
    data = Dataset([Sample(np.ones((2, 2)), np.array([0, 1])), Sample(np.ones((2, 2)), np.array([1, 0]))],
                   ["a", "b"])
    m = init_model("rnn", 2, 2, 2, random_state=0)
    for k in m.params:
        m.params[k][...] = 0.0
    cfg = TrainConfig(epochs=9, schedule="plateau", patience=3, lr=0.1, batch_size=2)
    _, rec = train(m, data, cfg)
    assert rec.learning_rates == [0.1] * 4 + [0.05] * 3 + [0.025] * 2


def test_numeric_failure_carries_record(tiny):
    m = init_model("rnn", 4, 6, 3, vocab_size=10, random_state=0)
    m.params["out.W"][0, 0] = np.inf
    with pytest.raises(NumericError) as err, np.errstate(invalid="ignore"):
        train(m, tiny, TrainConfig(epochs=2))
    assert err.value.record.status == "numeric-failure"


def test_select_by_dev_and_reports(tiny):
    dev = sample_tagging(tiny.info["task"], 6, 5, 3, split="dev")
    _, rec = train(SPEC, tiny, TrainConfig(epochs=3, select_by_dev=True), dev=dev, test=dev)
    assert len(rec.dev_loss) == 3
    assert rec.dev_metrics == rec.test_metrics
    assert rec.dev_metrics["token_f1"] >= 0


def test_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(lr=0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(rho=1.5)
    with pytest.raises(ParameterError):
        TrainConfig(method="cutmix")
    with pytest.raises(ParameterError):
        TrainConfig(schedule="cosine")


def test_iter_batches_cover_everything():
    idx = np.concatenate(list(iter_batches(10, 3, np.random.default_rng(0))))
    assert sorted(idx) == list(range(10))


def test_sweep_bookkeeping(tiny):
    rows, runs = sweep_rho(SPEC, tiny, tiny, TrainConfig(epochs=1, batch_size=6),
                           [0.0, 0.5, 1.0], ["input", "pom", "ttm"], 2)
    assert len(runs) == 18 and len(rows) == 9
    assert all(r["runs"] == 2 for r in rows)
    assert {(r["rho"], r["method"]) for r in rows} == {
        (p, m) for p in (0.0, 0.5, 1.0) for m in ("input", "pom", "ttm")}


def test_separable_sequence_is_learned():
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(40, 1, 2))
    y = (feats[:, 0, 0] > 0).astype(int)
    feats[:, 0, 0] += np.where(y == 1, 1.0, -1.0)
    data = Dataset([Sample(f, int(c)) for f, c in zip(feats, y)], ["a", "b"])
    _, rec = train(ModelSpec(cell="rnn", hidden=4), data, TrainConfig(epochs=200, lr=0.5, halve_every=1000, batch_size=8))
    assert rec.train_loss[-1] < 0.1
    assert evaluate(_, data)["accuracy"] == 1.0


def test_memory_task_trainable_by_lstm():
    task = make_tagging_task(4, 2, 0, memory=True)
    tr = sample_tagging(task, 100, 8, 1)
    m, _ = train(ModelSpec(cell="lstm", hidden=8, embedding_dim=4), tr,
                 TrainConfig(epochs=15, lr=1.0, batch_size=4, halve_every=5))
    te = sample_tagging(task, 100, 8, 2)
    assert evaluate(m, te)["accuracy"] > task.memoryless_optimal_accuracy(8) + 0.1
