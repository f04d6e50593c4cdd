"""Probes of trained models: class spectra, subspace angles, decision grids and
small directional experiments (over-regularization, memory, margin)."""

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import generate_halfmoons, make_tagging_task, moon_curves, sample_tagging
from .exceptions import ParameterError, ShapeError
from .numkernel import svd_top_k, top_left_singular_vectors
from .recurrent import encode, output_forward
from .training import ModelSpec, TrainConfig, evaluate, hidden_features, train

log = logging.getLogger(__name__)


def _data_rng(seed, stream):
    return np.random.default_rng([seed, stream])


# ---------------------------------------------------------------------------
# hidden states and spectra


def collect_hidden_by_class(model, samples):
    """Map each class to an ``Hf x count`` matrix of the hidden vectors labelled with it.

    Every class of the model gets an entry; classes absent from ``samples``
    map to an ``Hf x 0`` matrix and are logged.
    """
    samples = list(samples)
    if samples and not samples[0].is_tagging:
        raise ParameterError("collect_hidden_by_class needs tagging samples")
    Hf = model.feature_dim
    if not samples:
        return {c: np.zeros((Hf, 0)) for c in range(model.n_classes)}
    feats = np.concatenate(hidden_features(model, samples))
    labels = np.concatenate([s.labels for s in samples])
    out = {}
    for c in range(model.n_classes):
        out[c] = feats[labels == c].T.copy()
        if out[c].shape[1] == 0:
            log.info("class %d has no tokens", c)
    return out


@dataclass
class ClassSpectrum:
    """Leading singular values and cumulative energy fractions of one matrix.

    ``energy[m-1]`` is the share of the squared Frobenius norm carried by the
    top ``m`` singular values. ``truncated`` is set when fewer than the
    requested ``k`` values exist.
    """

    sigma: np.ndarray
    energy: np.ndarray
    requested: int
    centered: bool = False

    @property
    def truncated(self):
        return self.sigma.size < self.requested

    def energy_at(self, m):
        return float(self.energy[min(m, self.energy.size) - 1])


def spectral_profile(m, k=20, center=False):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ShapeError("spectral_profile needs a nonempty 2-d matrix")
    if center:
        m = m - m.mean(axis=1, keepdims=True)
    kk = min(k, *m.shape)
    if kk < k:
        log.info("requested %d singular values, matrix %s allows %d", k, m.shape, kk)
    sigma = svd_top_k(m, kk)
    total = float(np.sum(m * m))
    energy = np.cumsum(sigma**2) / total if total > 0 else np.zeros(kk)
    return ClassSpectrum(sigma, np.minimum(energy, 1.0), k, center)


def _numerical_rank(m):
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > s[0] * max(m.shape) * np.finfo(float).eps))


def subspace_orthogonality(matrices, r=1, center=False):
    """Principal-angle cosines between the rank-``r`` leading left subspaces of each class pair.

    ``matrices`` maps class to ``H x n`` matrices; empty ones are skipped.
    Returns ``{(a, b): cosines}`` with cosines sorted descending. ``r`` is
    reduced to the numerical rank of the pair when necessary. With
    ``center`` each class mean is removed first, so the angles compare the
    directions of affine subspaces rather than their offsets.
    """
    usable = {c: np.asarray(m, dtype=np.float64) for c, m in matrices.items() if np.size(m)}
    if center:
        usable = {c: m - m.mean(axis=1, keepdims=True) for c, m in usable.items()}
    if len(usable) < 2:
        raise ParameterError("need at least two nonempty classes")
    bases = {}
    for c, m in usable.items():
        rank = _numerical_rank(m)
        if rank < r:
            log.info("class %s has rank %d < %d; truncating", c, rank, r)
        bases[c] = top_left_singular_vectors(m, max(min(r, rank), 1))
    out = {}
    keys = sorted(bases)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            rr = min(bases[a].shape[1], bases[b].shape[1])
            cos = np.linalg.svd(bases[a][:, :rr].T @ bases[b][:, :rr], compute_uv=False)
            out[(a, b)] = np.clip(cos, 0.0, 1.0)
    return out


@dataclass
class SpectralReport:
    spectra: dict
    cosines: dict
    rank: int

    def mean_leading_cosine(self):
        return float(np.mean([c[0] for c in self.cosines.values()]))

    def spectrum_rows(self):
        for c, sp in sorted(self.spectra.items()):
            for i, (s, e) in enumerate(zip(sp.sigma, sp.energy), start=1):
                yield {"class": c, "rank": i, "sigma": float(s), "energy_frac": float(e)}

    def angle_rows(self):
        for (a, b), cos in sorted(self.cosines.items()):
            for i, v in enumerate(cos, start=1):
                yield {"class_a": a, "class_b": b, "index": i, "cosine": float(v)}


def spectral_report(matrices, k=20, r=1, center=False):
    spectra = {c: spectral_profile(m, k, center) for c, m in matrices.items() if np.size(m)}
    cosines = subspace_orthogonality(matrices, r, center) if len(spectra) >= 2 else {}
    return SpectralReport(spectra, cosines, r)


# ---------------------------------------------------------------------------
# decision boundaries on 2-d inputs


@dataclass
class BoundaryGrid:
    """Class probabilities on a ``resolution x resolution`` grid.

    ``probs[i, j]`` belongs to the point ``(xs[j], ys[i])``.
    """

    bounds: tuple
    resolution: int
    xs: np.ndarray
    ys: np.ndarray
    probs: np.ndarray

    def rows(self):
        for i, y in enumerate(self.ys):
            for j, x in enumerate(self.xs):
                yield {"x": float(x), "y": float(y), "p_class0": float(self.probs[i, j, 0])}


def point_probabilities(model, points):
    """Class probabilities of 2-d points, each fed as a two-step sequence."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeError("points must be n x 2")
    if model.input_dim != 1 or model.vocab_size is not None:
        raise ShapeError("model must take one dense feature per step")
    X = points[:, :, None]
    F, _ = encode(model, X, np.full(len(points), 2))
    _, probs = output_forward(model, F[:, -1])
    return probs


def boundary_grid(model, bounds=(-1.5, 2.5, -1.0, 1.5), resolution=100):
    if resolution < 2:
        raise ParameterError("resolution must be at least 2")
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    probs = point_probabilities(model, np.stack([gx.ravel(), gy.ravel()], axis=1))
    return BoundaryGrid(tuple(bounds), resolution, xs, ys, probs.reshape(resolution, resolution, -1))


def _nearest_distance(points, curve):
    return cKDTree(curve).query(points)[0]


def moon_boundary(bounds=(-1.5, 2.5, -1.0, 1.5), resolution=400, arc_points=800):
    """Points on the curve equidistant from the two noise-free moons.

    Found as sign changes of the distance difference along grid edges,
    located by linear interpolation.
    """
    upper, lower = moon_curves(arc_points)
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    diff = (_nearest_distance(pts, upper) - _nearest_distance(pts, lower)).reshape(gx.shape)
    out = []
    for axis in (0, 1):
        a = diff[:-1] if axis == 0 else diff[:, :-1]
        b = diff[1:] if axis == 0 else diff[:, 1:]
        i, j = np.nonzero(np.sign(a) != np.sign(b))
        t = a[i, j] / (a[i, j] - b[i, j])
        if axis == 0:
            out.append(np.stack([xs[j], ys[i] + t * (ys[1] - ys[0])], axis=1))
        else:
            out.append(np.stack([xs[j] + t * (xs[1] - xs[0]), ys[i]], axis=1))
    return np.concatenate(out)


def inter_moon_strip(points, width=0.15, boundary=None):
    """Boolean mask of ``points`` within ``width`` of the noise-free boundary curve."""
    boundary = moon_boundary() if boundary is None else boundary
    return _nearest_distance(np.asarray(points, dtype=np.float64), boundary) <= width


def strip_points(width=0.15, bounds=(-1.5, 2.5, -1.0, 1.5), resolution=100):
    """Uniform grid points that fall inside the inter-moon strip."""
    x0, x1, y0, y1 = bounds
    gx, gy = np.meshgrid(np.linspace(x0, x1, resolution), np.linspace(y0, y1, resolution))
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return pts[inter_moon_strip(pts, width)]


def strip_confidence(model, points):
    """Mean max-class probability over ``points``."""
    return float(point_probabilities(model, points).max(axis=1).mean())


# ---------------------------------------------------------------------------
# experiments


def halfmoons_experiment(seeds=5, noise=0.2, n=400, test_n=1000, hidden=16, cell="rnn",
                         epochs=200, batch_size=8, lr=0.1, alpha=1.0, strip_width=0.15,
                         grid_resolution=None):
    """Standard vs POM on half-moons: test accuracy and strip confidence per seed."""
    pts = strip_points(strip_width)
    runs, grids = [], {}
    for seed in range(seeds):
        tr = generate_halfmoons(n, noise, _data_rng(seed, 0))
        te = generate_halfmoons(test_n, noise, _data_rng(seed, 1), split="test")
        for method in ("standard", "pom"):
            cfg = TrainConfig(method=method, lr=lr, epochs=epochs, batch_size=batch_size,
                              alpha=alpha, halve_every=max(epochs // 3, 1), seed=seed)
            model, rec = train(ModelSpec(cell=cell, hidden=hidden), tr, cfg, test=te)
            runs.append({"seed": seed, "method": method,
                         "accuracy": rec.test_metrics["accuracy"],
                         "strip_confidence": strip_confidence(model, pts)})
            if grid_resolution:
                grids[(seed, method)] = boundary_grid(model, resolution=grid_resolution)
    by = {(r["seed"], r["method"]): r for r in runs}
    lower = [by[s, "pom"]["strip_confidence"] < by[s, "standard"]["strip_confidence"] for s in range(seeds)]
    close = [abs(by[s, "pom"]["accuracy"] - by[s, "standard"]["accuracy"]) <= 0.02 for s in range(seeds)]
    summary = {"strip_points": int(len(pts)), "seeds_lower_confidence": int(sum(lower)),
               "seeds_accuracy_within_2pt": int(sum(close))}
    return {"runs": runs, "summary": summary, "grids": grids}


def spectral_probe(methods=("standard", "pom", "ttm"), seeds=5, *, top=5, k=20, center=False,
                   vocab_size=200, n_classes=4, n=300, length=10, flip=0.1, cell="lstm",
                   hidden=32, embedding_dim=16, epochs=30, batch_size=8, lr=1.0, alpha=1.0):
    """Per-class top-``top`` energy fraction and mean leading cosine on training hidden states."""
    runs = []
    for seed in range(seeds):
        task = make_tagging_task(vocab_size, n_classes, _data_rng(seed, 0), flip=flip)
        tr = sample_tagging(task, n, length, _data_rng(seed, 1))
        for method in methods:
            cfg = TrainConfig(method=method, lr=lr, epochs=epochs, batch_size=batch_size,
                              alpha=alpha, halve_every=10, seed=seed)
            spec = ModelSpec(cell=cell, hidden=hidden, embedding_dim=embedding_dim)
            model, _ = train(spec, tr, cfg)
            report = spectral_report(collect_hidden_by_class(model, tr.samples), k, 1, center)
            runs.append({"seed": seed, "method": method,
                         "energy_top": {c: sp.energy_at(top) for c, sp in report.spectra.items()},
                         "mean_leading_cosine": report.mean_leading_cosine(),
                         "train_accuracy": evaluate(model, tr)["accuracy"]})
    return {"runs": runs, "top": top}


def overreg_probe(method="pom", H_small=2, H_large=16, seeds=5, *, include_standard=True,
                  vocab_size=20, n_classes=5, n=200, length=10, cell="rnn", embedding_dim=16,
                  epochs=30, batch_size=8, lr=1.0, alpha=1.0):
    """Final training token error per hidden size on a noise-free C-class tagging task."""
    methods = [method] + (["standard"] if include_standard and method != "standard" else [])
    runs = []
    for seed in range(seeds):
        task = make_tagging_task(vocab_size, n_classes, _data_rng(seed, 0))
        tr = sample_tagging(task, n, length, _data_rng(seed, 1))
        for m in methods:
            for H in (H_small, H_large):
                cfg = TrainConfig(method=m, lr=lr, epochs=epochs, batch_size=batch_size,
                                  alpha=alpha, halve_every=10, seed=seed)
                model, rec = train(ModelSpec(cell=cell, hidden=H, embedding_dim=embedding_dim), tr, cfg)
                runs.append({"seed": seed, "method": m, "hidden": H,
                             "train_error": 1.0 - evaluate(model, tr)["accuracy"],
                             "final_train_loss": rec.train_loss[-1] if rec.train_loss else None})
    return {"runs": runs, "n_classes": n_classes, "H_small": H_small, "H_large": H_large}


def memory_probe(H_values=(2, 8), method="pom", seeds=5, *, vocab_size=4, n=300, test_n=500,
                 length=10, lag=2, cell="rnn", embedding_dim=8, epochs=30, batch_size=8,
                 lr=1.0, alpha=1.0):
    """Test accuracy per hidden size on a two-class task whose tag is the token ``lag`` steps back."""
    runs = []
    for seed in range(seeds):
        task = make_tagging_task(vocab_size, 2, _data_rng(seed, 0), memory=True, lag=lag)
        tr = sample_tagging(task, n, length, _data_rng(seed, 1))
        te = sample_tagging(task, test_n, length, _data_rng(seed, 2), split="test")
        baseline = task.memoryless_optimal_accuracy(length)
        for H in H_values:
            cfg = TrainConfig(method=method, lr=lr, epochs=epochs, batch_size=batch_size,
                              alpha=alpha, halve_every=max(epochs // 3, 1), seed=seed)
            _, rec = train(ModelSpec(cell=cell, hidden=H, embedding_dim=embedding_dim), tr, cfg, test=te)
            acc = rec.test_metrics["accuracy"]
            runs.append({"seed": seed, "hidden": H, "accuracy": acc, "baseline": baseline,
                         "excess": acc - baseline})
    return {"runs": runs, "method": method}


# ---------------------------------------------------------------------------
# csv export


def write_csv(path, rows, fieldnames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_spectrum_csv(path, report):
    write_csv(path, report.spectrum_rows(), ["class", "rank", "sigma", "energy_frac"])


def write_angles_csv(path, report):
    write_csv(path, report.angle_rows(), ["class_a", "class_b", "index", "cosine"])


def write_grid_csv(path, grid):
    write_csv(path, grid.rows(), ["x", "y", "p_class0"])
