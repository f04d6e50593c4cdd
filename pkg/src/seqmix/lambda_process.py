"""Mixing-coefficient trajectories with tunable temporal correlation.

The first coefficient is drawn from Beta(alpha, alpha). Each later one is
drawn from the Beta distribution whose mean and variance are

    mean     = rho * E[lambda_1] + (1 - rho) * lambda_{t-1}
    variance = rho**2 * Var(lambda_1)

so ``rho = 0`` repeats the first draw and ``rho = 1`` gives independent
Beta(alpha, alpha) draws.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import FeasibilityError, ParameterError, ShapeError
from .numkernel import as_rng, sample_beta

MEAN_CLAMP = 1e-6
VAR_SHRINK = 0.99
DEGENERATE_VAR = 1e-280


@dataclass(frozen=True)
class LambdaConfig:
    alpha: float = 1.0
    rho: float = 0.0
    horizon: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ParameterError(f"horizon must be a positive integer, got {self.horizon}")

    @property
    def marginal_mean(self):
        return 0.5

    @property
    def marginal_var(self):
        return 1.0 / (4.0 * (2.0 * self.alpha + 1.0))


@dataclass(frozen=True)
class LambdaTrajectory:
    values: np.ndarray
    config: LambdaConfig

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size != self.config.horizon:
            raise ShapeError("trajectory length must equal the configured horizon")
        if np.any((values < 0) | (values > 1)):
            raise ParameterError("mixing coefficients must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    @classmethod
    def constant(cls, value, horizon, alpha=1.0):
        """A fixed trajectory, handy for identity checks and test hooks."""
        cfg = LambdaConfig(alpha=alpha, rho=0.0, horizon=horizon)
        return cls(np.full(horizon, float(value)), cfg)


def mix(z, z_prime, lam):
    """``lam * z + (1 - lam) * z_prime`` elementwise."""
    z = np.asarray(z, dtype=np.float64)
    z_prime = np.asarray(z_prime, dtype=np.float64)
    if z.shape != z_prime.shape:
        raise ShapeError(f"cannot mix shapes {z.shape} and {z_prime.shape}")
    return lam * z + (1.0 - lam) * z_prime


def beta_moment_match(mean, variance):
    """Beta shapes ``(a, b)`` whose mean and variance equal the inputs.

    Works elementwise on arrays. Raises :class:`FeasibilityError` unless
    ``0 < variance < mean * (1 - mean)``.
    """
    mean = np.asarray(mean, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    bound = mean * (1.0 - mean)
    if np.any(~((mean > 0) & (mean < 1))):
        raise FeasibilityError("Beta mean must lie strictly inside (0, 1)")
    if np.any(~((variance > 0) & (variance < bound))):
        raise FeasibilityError("Beta variance must satisfy 0 < v < m(1 - m)")
    nu = bound / variance - 1.0
    a, b = mean * nu, (1.0 - mean) * nu
    if a.ndim == 0:
        return float(a), float(b)
    return a, b


def conditional_shapes(prev, cfg):
    """Beta shapes of ``lambda_t`` given ``lambda_{t-1} = prev`` (``rho > 0``).

    The target mean is clamped to ``[1e-6, 1 - 1e-6]`` and the target
    variance to at most ``0.99 m (1 - m)`` before inversion.
    """
    return beta_moment_match(*_conditional_moments(prev, cfg))


def _conditional_moments(prev, cfg):
    m = cfg.rho * cfg.marginal_mean + (1.0 - cfg.rho) * np.asarray(prev, dtype=np.float64)
    m = np.clip(m, MEAN_CLAMP, 1.0 - MEAN_CLAMP)
    v = np.minimum(cfg.rho**2 * cfg.marginal_var, VAR_SHRINK * m * (1.0 - m))
    return m, v


def sample_trajectories(cfg, n, rng=None):
    """``n`` independent trajectories as an ``(n, horizon)`` array."""
    rng = as_rng(rng)
    out = np.empty((n, cfg.horizon))
    if n == 0:
        return out
    out[:, 0] = sample_beta(cfg.alpha, cfg.alpha, rng, size=n)
    for t in range(1, cfg.horizon):
        if cfg.rho == 0.0:
            out[:, t] = out[:, t - 1]
        else:
            m, v = _conditional_moments(out[:, t - 1], cfg)
            # a vanishing variance would overflow the shapes; the law is then a point mass at m
            point = v <= DEGENERATE_VAR * m * (1.0 - m)
            out[:, t] = m
            if not point.all():
                a, b = beta_moment_match(m[~point], v[~point])
                out[~point, t] = sample_beta(a, b, rng)
    return out


def sample_trajectory(cfg, rng=None):
    return LambdaTrajectory(sample_trajectories(cfg, 1, rng)[0], cfg)


def empirical_mean(traj):
    values = traj.values if isinstance(traj, LambdaTrajectory) else np.asarray(traj, dtype=np.float64)
    if values.size == 0:
        raise ParameterError("empty trajectory")
    if np.all(values == values[0]):
        return float(values[0])
    return float(np.mean(values))
