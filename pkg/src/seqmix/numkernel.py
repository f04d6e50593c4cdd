"""Float64 numerical kernels: Beta sampling, top-k SVD, logsumexp, finite differences."""

import numbers

import numpy as np

from .exceptions import ParameterError

DTYPE = np.float64


def as_rng(seed=None):
    """Return a ``numpy.random.Generator``.

    Accepts ``None``, an int seed, or an existing generator (returned as-is,
    so the caller keeps ownership of its stream).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise ParameterError(f"cannot build a random generator from {seed!r}")


def _log_gamma_ge1(shape, rng):
    # Marsaglia & Tsang (2000) for shape >= 1; vectorised rejection loop.
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(shape)
    pending = np.arange(shape.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        x = rng.standard_normal(pending.size)
        v = 1.0 + cp * x
        ok = v > 0
        v = np.where(ok, v, 1.0) ** 3
        u = 1.0 - rng.random(pending.size)  # (0, 1]
        logu = np.log(u)
        x2 = x * x
        accept = ok & (
            (u < 1.0 - 0.0331 * x2 * x2)
            | (logu < 0.5 * x2 + dp * (1.0 - v + np.log(v)))
        )
        out[pending[accept]] = np.log(dp[accept] * v[accept])
        pending = pending[~accept]
    return out


def sample_log_gamma(shape, rng):
    """Log of Gamma(shape, 1) draws, elementwise over ``shape``.

    Shapes below one use the boost ``G(a) = G(a + 1) * U**(1/a)``, carried
    out in log space so tiny shapes do not underflow to zero.
    """
    shape = np.asarray(shape, dtype=DTYPE)
    if np.any(~(shape > 0)):
        raise ParameterError("gamma shape must be positive")
    flat = shape.ravel()
    small = flat < 1.0
    logg = _log_gamma_ge1(np.where(small, flat + 1.0, flat), rng)
    if np.any(small):
        u = 1.0 - rng.random(int(small.sum()))
        logg[small] += np.log(u) / flat[small]
    return logg.reshape(shape.shape)


def sample_beta(alpha, beta, rng, size=None):
    """Draw Beta(alpha, beta) variates as X / (X + Y) with X, Y Gamma.

    ``alpha`` and ``beta`` broadcast against each other and ``size``. A
    scalar float is returned when everything is scalar.
    """
    alpha = np.asarray(alpha, dtype=DTYPE)
    beta = np.asarray(beta, dtype=DTYPE)
    if np.any(~(alpha > 0)) or np.any(~(beta > 0)):
        raise ParameterError(f"Beta shapes must be positive, got ({alpha}, {beta})")
    size = () if size is None else ((size,) if np.ndim(size) == 0 else tuple(size))
    shape = np.broadcast_shapes(alpha.shape, beta.shape, size)
    a = np.broadcast_to(alpha, shape)
    b = np.broadcast_to(beta, shape)
    log_x = sample_log_gamma(a, rng)
    log_y = sample_log_gamma(b, rng)
    # x / (x + y) = sigmoid(log x - log y), stable for either draw underflowing
    z = log_x - log_y
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def svd_top_k(m, k):
    """The ``k`` largest singular values of ``m``, descending.

    Uses the eigenvalues of the smaller Gram matrix; tiny negative
    eigenvalues from rounding are clamped to zero before the square root.
    """
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim != 2:
        raise ParameterError("svd_top_k expects a 2-d matrix")
    rows, cols = m.shape
    if not 0 <= k <= min(rows, cols):
        raise ParameterError(f"k={k} out of range for a {rows}x{cols} matrix")
    gram = m @ m.T if rows <= cols else m.T @ m
    eig = np.linalg.eigvalsh(gram)[::-1]
    return np.sqrt(np.clip(eig[:k], 0.0, None))


def top_left_singular_vectors(m, r):
    """Leading ``r`` left singular vectors of ``m`` (columns, orthonormal)."""
    m = np.asarray(m, dtype=DTYPE)
    if m.shape[1] < m.shape[0]:
        u, _, _ = np.linalg.svd(m, full_matrices=False)
        return u[:, :r]
    w, v = np.linalg.eigh(m @ m.T)
    order = np.argsort(w)[::-1]
    return v[:, order[:r]]


def logsumexp(v, axis=None):
    """``log(sum(exp(v)))`` with the max shifted out.

    Exact for constant vectors and free of overflow for large entries.
    """
    v = np.asarray(v, dtype=DTYPE)
    if v.size == 0:
        raise ParameterError("logsumexp of an empty vector")
    vmax = np.max(v, axis=axis, keepdims=True)
    vmax = np.where(np.isfinite(vmax), vmax, 0.0)
    out = np.log(np.sum(np.exp(v - vmax), axis=axis, keepdims=True)) + vmax
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def finite_diff_grad(loss_fn, theta, eps=1e-5):
    """Central-difference gradient of ``loss_fn`` at ``theta``.

    ``loss_fn`` maps a flat float vector to a scalar. ``theta`` is not
    modified.
    """
    if not eps > 0:
        raise ParameterError("eps must be positive")
    theta = np.array(theta, dtype=DTYPE).ravel()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + eps
        up = loss_fn(theta)
        theta[i] = orig - eps
        down = loss_fn(theta)
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * eps)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    """max |a - n| / max(|a| + |n|, floor), the usual gradient-check metric."""
    analytic = np.asarray(analytic, dtype=DTYPE).ravel()
    numeric = np.asarray(numeric, dtype=DTYPE).ravel()
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
