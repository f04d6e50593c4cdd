"""Linear-chain CRF over per-step emission scores.

A path ``y`` scores ``sum_t e[t, y_t] + sum_t A[y_t, y_{t+1}]`` (no start or
stop transitions). For a mixed pair the score becomes

    sum_t lam_t e[t, y_t] + (1 - lam_t) e[t, y'_t]
      + sum_t m_t A[y_t, y_{t+1}] + (1 - m_t) A[y'_t, y'_{t+1}],
    m_t = (lam_t + lam_{t+1}) / 2.
"""

import numpy as np

from .exceptions import ParameterError, ShapeError
from .numkernel import DTYPE, logsumexp

MIX_MODES = ("score", "nll")


def _check(e, A):
    e = np.asarray(e, dtype=DTYPE)
    A = np.asarray(A, dtype=DTYPE)
    if e.ndim != 2 or e.shape[0] < 1:
        raise ShapeError("emissions must be a non-empty T x C matrix")
    if A.shape != (e.shape[1], e.shape[1]):
        raise ShapeError(f"transitions must be {e.shape[1]} x {e.shape[1]}")
    return e, A


def _check_path(y, T, C):
    y = np.asarray(y)
    if y.shape != (T,):
        raise ParameterError(f"tag sequence must have length {T}")
    if not np.issubdtype(y.dtype, np.integer) or np.any((y < 0) | (y >= C)):
        raise ParameterError(f"tag indices must be integers in [0, {C})")
    return y.astype(np.int64)


def sequence_score(e, A, y):
    e, A = _check(e, A)
    T, C = e.shape
    y = _check_path(y, T, C)
    return float(e[np.arange(T), y].sum() + A[y[:-1], y[1:]].sum())


def _mix_weights(T, C, y, y2, lam):
    """Coefficient tables ``(w_e, w_A)`` with score = <w_e, e> + <w_A, A>."""
    w_e = np.zeros((T, C))
    w_A = np.zeros((C, C))
    steps = np.arange(T)
    np.add.at(w_e, (steps, y), lam)
    np.add.at(w_e, (steps, y2), 1.0 - lam)
    m = 0.5 * (lam[:-1] + lam[1:])
    np.add.at(w_A, (y[:-1], y[1:]), m)
    np.add.at(w_A, (y2[:-1], y2[1:]), 1.0 - m)
    return w_e, w_A


def _lam_values(traj, T):
    lam = np.asarray(getattr(traj, "values", traj), dtype=DTYPE)
    if lam.shape != (T,):
        raise ParameterError(f"trajectory length {lam.shape} does not match sequence length {T}")
    return lam


def mixed_sequence_score(e, A, y, y_prime, traj):
    e, A = _check(e, A)
    T, C = e.shape
    y = _check_path(y, T, C)
    y2 = _check_path(y_prime, T, C)
    lam = _lam_values(traj, T)
    unary = np.sum(lam * e[np.arange(T), y] + (1.0 - lam) * e[np.arange(T), y2])
    m = 0.5 * (lam[:-1] + lam[1:])
    pair = np.sum(m * A[y[:-1], y[1:]] + (1.0 - m) * A[y2[:-1], y2[1:]])
    return float(unary + pair)


def _forward(e, A):
    T, C = e.shape
    alpha = np.empty((T, C))
    alpha[0] = e[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + A, axis=0) + e[t]
    return alpha


def _backward(e, A):
    T, C = e.shape
    beta = np.zeros((T, C))
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(A + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(e, A):
    """log of the summed exp-scores of all C**T paths, by the forward algorithm."""
    e, A = _check(e, A)
    return logsumexp(_forward(e, A)[-1])


def marginals(e, A):
    """``(logZ, unary T x C, pairwise (T-1) x C x C)`` posterior marginals."""
    e, A = _check(e, A)
    alpha = _forward(e, A)
    beta = _backward(e, A)
    logz = logsumexp(alpha[-1])
    unary = np.exp(alpha + beta - logz)
    pair = np.exp(
        alpha[:-1, :, None] + A[None] + (e[1:] + beta[1:])[:, None, :] - logz
    )
    return logz, unary, pair


def crf_nll(e, A, y, y_prime=None, traj=None, mode="score"):
    """Negative log-likelihood of ``y`` (or of a mixed pair).

    With ``y_prime`` and ``traj`` given, ``mode='score'`` returns
    ``logZ - mixed_sequence_score`` and ``mode='nll'`` returns the
    ``lam_bar``-weighted sum of the two ordinary NLLs.
    """
    return crf_nll_and_grad(e, A, y, y_prime, traj, mode, need_grad=False)[0]


def crf_nll_and_grad(e, A, y, y_prime=None, traj=None, mode="score", need_grad=True):
    """``(loss, d loss/d e, d loss/d A)`` for :func:`crf_nll`."""
    e, A = _check(e, A)
    T, C = e.shape
    y = _check_path(y, T, C)
    if y_prime is None:
        y2, lam = y, np.ones(T)
    else:
        y2 = _check_path(y_prime, T, C)
        lam = _lam_values(traj, T) if traj is not None else np.ones(T)
    if mode == "nll":
        lam = np.full(T, lam.mean())
    elif mode != "score":
        raise ParameterError(f"mode must be one of {MIX_MODES}")
    w_e, w_A = _mix_weights(T, C, y, y2, lam)
    if need_grad:
        logz, unary, pair = marginals(e, A)
    else:
        logz = log_partition(e, A)
    loss = float(logz - np.sum(w_e * e) - np.sum(w_A * A))
    if not need_grad:
        return loss, None, None
    return loss, unary - w_e, pair.sum(axis=0) - w_A


def viterbi(e, A):
    """Highest-scoring path and its score; ties go to the lower tag index."""
    e, A = _check(e, A)
    T, C = e.shape
    delta = e[0].copy()
    back = np.zeros((T, C), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + A
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(C)] + e[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])
