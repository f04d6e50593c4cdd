"""Command-line entry point: ``seqmix <command> ...``.

Exit status is 0 on success, 2 on bad input or configuration and 3 when
training hits a non-finite value.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import analysis
from .data import generate_halfmoons, load_conll, load_embeddings, make_tagging_task, sample_tagging
from .exceptions import NumericError, SeqmixError
from .lambda_process import LambdaConfig, sample_trajectories
from .mixup import METHODS
from .recurrent import load_model, save_model
from .training import ModelSpec, TrainConfig, _streams, build_model, sweep_rho, train

log = logging.getLogger("seqmix")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# full-scale recipes; the desk-scale defaults below finish in minutes
FULL_SCALE = {
    "tagger": dict(hidden=256, epochs=50, lr=0.1, halve_every=10, schedule="step", batch_size=1),
    "crf": dict(hidden=256, epochs=250, lr=0.1, schedule="plateau", patience=6, batch_size=32,
                clip=5.0, bidirectional=True),
}


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _names(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_data_args(p, tasks=("halfmoons", "tagging", "tagging-mem")):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="CoNLL training file")
    src.add_argument("--task", choices=tasks, help="synthetic task (default: tagging)")
    p.add_argument("--dev", help="CoNLL dev file (with --data)")
    p.add_argument("--test", help="CoNLL test file (with --data)")
    p.add_argument("--n", type=int, default=300, help="training sequences for synthetic tasks")
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--length", type=int, default=10)
    p.add_argument("--vocab-size", type=int, default=200)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--flip", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--data-seed", type=int, default=0)


def _add_model_args(p):
    p.add_argument("--method", default="standard", choices=list(METHODS) + ["input_mixup"])
    p.add_argument("--cell", default="lstm", choices=["rnn", "gru", "lstm"])
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--crf", action="store_true")
    p.add_argument("--crf-mix", default="score", choices=["score", "nll"])
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--halve-every", type=int, default=10)
    p.add_argument("--schedule", default="step", choices=["step", "plateau"])
    p.add_argument("--patience", type=int, default=6)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--clip", type=float)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="seqmix", description="Sequence mixup training for recurrent taggers.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--embeddings", help="word vectors, one 'word v1 ... vd' per line")
    p.add_argument("--select-by-dev", action="store_true", help="keep the epoch with the best dev F-1")
    p.add_argument("--paper-baseline", action="store_true",
                   help="full-scale settings (H=256, long schedules) instead of desk-scale defaults")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-rho", help="test loss and F-1 over a grid of rho values")
    _add_data_args(p, ("tagging", "tagging-mem"))
    _add_model_args(p)
    p.add_argument("--rhos", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--methods", type=_names, default=["input", "pom", "ttm"])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--metric", default="token_f1", choices=["token_f1", "span_f1", "accuracy"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("spectrum", help="per-class singular values of hidden states")
    p.add_argument("--model", required=True, help="model.json checkpoint")
    _add_data_args(p, ("tagging", "tagging-mem"))
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--rank", type=int, default=1, help="subspace rank for principal angles")
    p.add_argument("--center", choices=["on", "off"], default="off",
                   help="'on' writes a mean-centred spectrum next to the raw one")
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="hidden-size probes")
    p.add_argument("kind", choices=["overreg", "memory"])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--method", default="pom", choices=["input", "pom", "ttm"])
    p.add_argument("--cell", default="rnn", choices=["rnn", "gru", "lstm"])
    p.add_argument("--hidden", type=int, nargs="+", help="hidden sizes (overreg: small large)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--out", required=True)

    p = sub.add_parser("halfmoons", help="standard vs POM decision boundaries on half-moons")
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--grid-res", type=int, default=100)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--strip-width", type=float, default=0.15)
    p.add_argument("--out", required=True)

    p = sub.add_parser("lambda", help="sample mixing-coefficient trajectories as CSV")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    return parser


# ---------------------------------------------------------------------------
# data


def _rng(seed, stream):
    return np.random.default_rng([seed, stream])


def load_datasets(args):
    """``(train, dev, test)`` from ``--data`` files or a synthetic ``--task``."""
    if getattr(args, "data", None):
        train_set = load_conll(args.data, split="train")
        kw = dict(vocab=train_set.vocab, labels=train_set.labels, grow=False)
        dev = load_conll(args.dev, split="dev", **kw) if args.dev else None
        test = load_conll(args.test, split="test", **kw) if args.test else None
        return train_set, dev, test
    task = args.task or "tagging"
    if task == "halfmoons":
        return (generate_halfmoons(args.n, args.noise, _rng(args.data_seed, 1)), None,
                generate_halfmoons(args.n_test, args.noise, _rng(args.data_seed, 3), split="test"))
    spec = make_tagging_task(args.vocab_size, args.classes, _rng(args.data_seed, 0),
                             memory=task == "tagging-mem", flip=args.flip)
    return (sample_tagging(spec, args.n, args.length, _rng(args.data_seed, 1)),
            sample_tagging(spec, args.n_test, args.length, _rng(args.data_seed, 2), split="dev"),
            sample_tagging(spec, args.n_test, args.length, _rng(args.data_seed, 3), split="test"))


def _configs(args):
    values = dict(hidden=args.hidden, bidirectional=args.bidirectional, epochs=args.epochs, lr=args.lr,
                  halve_every=args.halve_every, schedule=args.schedule, patience=args.patience,
                  batch_size=args.batch_size, clip=args.clip)
    if getattr(args, "paper_baseline", False):
        values.update(FULL_SCALE["crf" if args.crf else "tagger"])
    spec = ModelSpec(cell=args.cell, hidden=values["hidden"], embedding_dim=args.embedding_dim,
                     bidirectional=values["bidirectional"], crf=args.crf)
    cfg = TrainConfig(method=args.method, lr=values["lr"], halve_every=values["halve_every"],
                      schedule=values["schedule"], patience=values["patience"], epochs=values["epochs"],
                      batch_size=values["batch_size"], alpha=args.alpha, rho=args.rho, clip=values["clip"],
                      seed=args.seed, crf_mix=args.crf_mix, select_by_dev=getattr(args, "select_by_dev", False))
    return spec, cfg


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


# ---------------------------------------------------------------------------
# commands


def cmd_train(args):
    train_set, dev, test = load_datasets(args)
    spec, cfg = _configs(args)
    os.makedirs(args.out, exist_ok=True)
    init = spec
    if args.embeddings:
        if train_set.vocab is None:
            raise SeqmixError("--embeddings needs token inputs")
        init_rng = _streams(cfg.seed)[0]
        table = load_embeddings(args.embeddings, train_set.vocab, init_rng)
        spec = replace(spec, embedding_dim=table.shape[1])
        init = build_model(spec, train_set, init_rng)
        init.params["embedding"] = table
    try:
        model, record = train(init, train_set, cfg, dev=dev, test=test)
    except NumericError as exc:
        record = getattr(exc, "record", None)
        if record is not None:
            _write_json(os.path.join(args.out, "run.json"), record.to_dict())
        raise
    model.meta.update({"labels": list(train_set.labels), "vocab": train_set.vocab,
                       "spec": vars(spec)})
    save_model(model, os.path.join(args.out, "model.json"))
    _write_json(os.path.join(args.out, "run.json"), record.to_dict())
    rows = [{"split": split, "metric": k, "value": v}
            for split, metrics in (("dev", record.dev_metrics), ("test", record.test_metrics))
            for k, v in metrics.items()]
    analysis.write_csv(os.path.join(args.out, "metrics.csv"), rows, ["split", "metric", "value"])
    for row in rows:
        print(f"{row['split']:5s} {row['metric']:16s} {row['value']:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    train_set, dev, test = load_datasets(args)
    spec, cfg = _configs(args)
    os.makedirs(args.out, exist_ok=True)
    rows, runs = sweep_rho(spec, train_set, test, cfg, args.rhos, args.methods, args.repeats, metric=args.metric)
    fields = ["rho", "method", "runs", "f1_mean", "f1_std", "nll_mean", "nll_std"]
    analysis.write_csv(os.path.join(args.out, "sweep.csv"), rows, fields)
    _write_json(os.path.join(args.out, "runs.json"), runs)
    for r in rows:
        print(f"rho={r['rho']:.2f} {r['method']:8s} {args.metric}={r['f1_mean']:.4f}±{r['f1_std']:.4f} "
              f"nll={r['nll_mean']:.4f}±{r['nll_std']:.4f}")
    return EXIT_OK


def cmd_spectrum(args):
    model = load_model(args.model)
    if args.data:
        labels = model.meta.get("labels")
        vocab = model.meta.get("vocab")
        data = load_conll(args.data, vocab=vocab, labels=labels, grow=vocab is None)
    else:
        data = load_datasets(args)[0]
    mats = analysis.collect_hidden_by_class(model, data.samples)
    os.makedirs(args.out, exist_ok=True)
    names = list(data.labels)
    variants = [("spectrum.csv", False)] + ([("spectrum_centered.csv", True)] if args.center == "on" else [])
    for fname, center in variants:
        report = analysis.spectral_report(mats, args.top_k, args.rank, center)
        rows = [dict(r, **{"class": names[r["class"]]}) for r in report.spectrum_rows()]
        analysis.write_csv(os.path.join(args.out, fname), rows, ["class", "rank", "sigma", "energy_frac"])
        rows = [dict(r, class_a=names[r["class_a"]], class_b=names[r["class_b"]]) for r in report.angle_rows()]
        analysis.write_csv(os.path.join(args.out, fname.replace("spectrum", "angles")), rows,
                           ["class_a", "class_b", "index", "cosine"])
    report = analysis.spectral_report(mats, args.top_k, args.rank, False)
    for c, sp in sorted(report.spectra.items()):
        note = " (truncated)" if sp.truncated else ""
        print(f"{names[c]:10s} top-5 energy {sp.energy_at(5):.4f}{note}")
    return EXIT_OK


def cmd_probe(args):
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "overreg":
        small, large = (args.hidden or [2, 16])[:2]
        result = analysis.overreg_probe(args.method, small, large, args.seeds, cell=args.cell, epochs=args.epochs)
        for r in result["runs"]:
            print(f"seed={r['seed']} {r['method']:8s} H={r['hidden']:3d} train_error={r['train_error']:.4f}")
    else:
        result = analysis.memory_probe(tuple(args.hidden or [2, 8]), args.method, args.seeds,
                                       cell=args.cell, epochs=args.epochs)
        for r in result["runs"]:
            print(f"seed={r['seed']} H={r['hidden']:3d} accuracy={r['accuracy']:.4f} "
                  f"baseline={r['baseline']:.4f} excess={r['excess']:+.4f}")
    _write_json(os.path.join(args.out, f"probe_{args.kind}.json"), result)
    return EXIT_OK


def cmd_halfmoons(args):
    result = analysis.halfmoons_experiment(seeds=args.seeds, noise=args.noise, hidden=args.hidden,
                                           epochs=args.epochs, strip_width=args.strip_width,
                                           grid_resolution=args.grid_res)
    os.makedirs(args.out, exist_ok=True)
    for (seed, method), grid in result.pop("grids").items():
        sub = os.path.join(args.out, f"seed{seed}", method)
        os.makedirs(sub, exist_ok=True)
        analysis.write_grid_csv(os.path.join(sub, "grid.csv"), grid)
    _write_json(os.path.join(args.out, "halfmoons.json"), result)
    for r in result["runs"]:
        print(f"seed={r['seed']} {r['method']:8s} accuracy={r['accuracy']:.4f} "
              f"strip_confidence={r['strip_confidence']:.4f}")
    return EXIT_OK


def cmd_lambda(args):
    lam = sample_trajectories(LambdaConfig(args.alpha, args.rho, args.horizon), args.count, args.seed)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        many = args.count > 1
        writer.writerow((["trajectory"] if many else []) + ["t", "lambda"])
        for i, row in enumerate(lam):
            for t, v in enumerate(row, start=1):
                writer.writerow(([i] if many else []) + [t, repr(float(v))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep-rho": cmd_sweep, "spectrum": cmd_spectrum,
            "probe": cmd_probe, "halfmoons": cmd_halfmoons, "lambda": cmd_lambda}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"seqmix: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SeqmixError, ValueError, OSError) as exc:
        print(f"seqmix: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
