"""Simulation engine: trajectories, error decomposition, Monte Carlo estimates.

Determinism contract: every Monte Carlo routine gives trajectory j its own
counter stream ``stream(seed, j)`` and consumes it with a single
``model.sample_path`` call, so a trajectory is a pure function of
``(model, alpha, seed, j)``.  Per-trajectory statistics are stacked in
trajectory order and reduced with single full-array numpy operations, so the
results are bit-identical no matter how trajectories are chunked or scheduled.
Chunking below only limits the memory held by draw buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator
from scipy.special import logsumexp
from scipy.stats import binom

from lsalab.linalg import SpectralProfile
from lsalab.noise import LsaModel, eps_noise
from lsalab.rng import stream

# Draw buffers are kept under roughly this many floats per chunk.
_CHUNK_FLOAT_BUDGET = 4_000_000


class TrajectoryBlowup(RuntimeError):
    """A simulated iterate became non-finite.

    Attributes carry the step index (and trajectory index for batch runs) so
    callers can report the failure instead of crashing.
    """

    def __init__(self, step: int, trajectory: int | None = None):
        self.step = step
        self.trajectory = trajectory
        where = f"step {step}" if trajectory is None else f"trajectory {trajectory}, step {step}"
        super().__init__(f"iterate became non-finite at {where}")


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo point estimate with its standard error."""

    value: float
    std_err: float
    n_samples: int


@dataclass(frozen=True)
class TrajectoryDecomposition:
    """Exact four-term split of the final error theta_n - theta_star.

    gamma_term: product-of-factors transient carrying theta_0 - theta_star;
    j0: linear noise accumulation driven by the mean matrix;
    j1: first-order multiplicative-noise correction;
    h1: the remainder.  The four parts sum to theta_err (validated here to
    1e-9 relative -- they are the same arithmetic regrouped).
    """

    gamma_term: np.ndarray
    j0: np.ndarray
    j1: np.ndarray
    h1: np.ndarray
    theta_err: np.ndarray

    def __post_init__(self):
        parts = self.gamma_term + self.j0 + self.j1 + self.h1
        resid = float(np.linalg.norm(parts - self.theta_err))
        scale = max(
            float(np.linalg.norm(self.theta_err)),
            float(np.linalg.norm(self.gamma_term)),
            float(np.linalg.norm(self.j0)),
            float(np.linalg.norm(self.j1)),
            float(np.linalg.norm(self.h1)),
            1e-30,
        )
        if resid > 1e-9 * scale:
            raise ValueError(
                f"decomposition identity violated: residual {resid:.3e} vs scale {scale:.3e}"
            )

    @property
    def residual(self) -> float:
        parts = self.gamma_term + self.j0 + self.j1 + self.h1
        resid = float(np.linalg.norm(parts - self.theta_err))
        scale = max(float(np.linalg.norm(self.theta_err)), 1e-30)
        return resid / scale


def _check_run_args(model: LsaModel, alpha: float, n: int) -> None:
    if not (alpha > 0.0 and np.isfinite(alpha)):
        raise ValueError(f"alpha must be positive and finite, got {alpha}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")


def run_trajectory(
    model: LsaModel, alpha: float, theta0: np.ndarray, n: int, gen: Generator
) -> np.ndarray:
    """Iterate theta_{k+1} = theta_k - alpha*(A_{k+1} theta_k - b_{k+1}).

    Returns the full path, shape (n+1, d).  Raises TrajectoryBlowup with the
    offending step index if an iterate becomes non-finite.
    """
    _check_run_args(model, alpha, n)
    theta = np.asarray(theta0, dtype=float).reshape(model.dim).copy()
    path = np.empty((n + 1, model.dim))
    path[0] = theta
    if n == 0:
        return path
    a_seq, b_seq = model.sample_path(gen, n)
    for k in range(n):
        theta = theta - alpha * (a_seq[k] @ theta - b_seq[k])
        if not np.all(np.isfinite(theta)):
            raise TrajectoryBlowup(step=k + 1)
        path[k + 1] = theta
    return path


def run_decomposed(
    model: LsaModel, alpha: float, theta0: np.ndarray, n: int, gen: Generator
) -> TrajectoryDecomposition:
    """Run the recursion and its four-term error decomposition on shared draws.

    All five recursions (the iterate itself, the transient product term, and
    the three noise terms) consume the same (A_k, b_k) sequence, so the
    identity  theta_err = gamma_term + j0 + j1 + h1  holds to rounding error.
    """
    _check_run_args(model, alpha, n)
    d = model.dim
    eye = np.eye(d)
    abar = model.abar
    theta_err = np.asarray(theta0, dtype=float).reshape(d) - model.theta_star
    gamma_term = theta_err.copy()
    j0 = np.zeros(d)
    j1 = np.zeros(d)
    h1 = np.zeros(d)
    if n > 0:
        a_seq, b_seq = model.sample_path(gen, n)
        eps_seq = eps_noise(model, a_seq, b_seq)
        g_mean = eye - alpha * abar
        for k in range(n):
            g_k = eye - alpha * a_seq[k]
            delta_k = a_seq[k] - abar
            eps_k = eps_seq[k]
            theta_err = g_k @ theta_err + alpha * eps_k
            gamma_term = g_k @ gamma_term
            j1_new = g_mean @ j1 - alpha * (delta_k @ j0)
            h1 = g_k @ h1 - alpha * (delta_k @ j1)
            j0 = g_mean @ j0 + alpha * eps_k
            j1 = j1_new
            if not np.all(np.isfinite(theta_err)):
                raise TrajectoryBlowup(step=k + 1)
    return TrajectoryDecomposition(
        gamma_term=gamma_term, j0=j0, j1=j1, h1=h1, theta_err=theta_err
    )


def product(model: LsaModel, alpha: float, n: int, gen: Generator) -> np.ndarray:
    """Random product Gamma_{1:n} = (I - alpha*A_n) ... (I - alpha*A_1).

    n = 0 returns the identity.
    """
    _check_run_args(model, alpha, n)
    d = model.dim
    gamma = np.eye(d)
    if n == 0:
        return gamma
    a_seq, _ = model.sample_path(gen, n)
    eye = np.eye(d)
    for k in range(n):
        gamma = (eye - alpha * a_seq[k]) @ gamma
    return gamma


def _chunk_sizes(n_traj: int, per_traj_floats: int) -> list[tuple[int, int]]:
    """Fixed [lo, hi) trajectory ranges keeping draw buffers within budget."""
    chunk = max(1, min(4096, _CHUNK_FLOAT_BUDGET // max(1, per_traj_floats)))
    return [(lo, min(lo + chunk, n_traj)) for lo in range(0, n_traj, chunk)]


def _scalar_paths(
    model: LsaModel, n: int, seed: int, lo: int, hi: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack scalar-model draws for trajectories lo..hi-1, shape (hi-lo, n)."""
    a = np.empty((hi - lo, n))
    b = np.empty((hi - lo, n))
    for j in range(lo, hi):
        a_seq, b_seq = model.sample_path(stream(seed, j), n)
        a[j - lo] = a_seq[:, 0, 0]
        b[j - lo] = b_seq[:, 0]
    return a, b


def final_errors(
    model: LsaModel, alpha: float, theta0: np.ndarray, n: int, n_traj: int, seed: int
) -> np.ndarray:
    """theta_n - theta_star for n_traj independent trajectories, shape (n_traj, d).

    Trajectory j uses stream(seed, j).  Raises TrajectoryBlowup (with the
    trajectory index) if any trajectory leaves the finite range.
    """
    _check_run_args(model, alpha, n)
    d = model.dim
    theta0 = np.asarray(theta0, dtype=float).reshape(d)
    out = np.empty((n_traj, d))
    if d == 1:
        for lo, hi in _chunk_sizes(n_traj, 2 * n):
            a, b = _scalar_paths(model, n, seed, lo, hi)
            theta = np.full(hi - lo, theta0[0])
            for k in range(n):
                theta = theta - alpha * (a[:, k] * theta - b[:, k])
            bad = ~np.isfinite(theta)
            if np.any(bad):
                j = lo + int(np.argmax(bad))
                raise TrajectoryBlowup(step=_locate_blowup(model, alpha, theta0, n, seed, j), trajectory=j)
            out[lo:hi, 0] = theta
    else:
        for j in range(n_traj):
            a_seq, b_seq = model.sample_path(stream(seed, j), n)
            theta = theta0.copy()
            for k in range(n):
                theta = theta - alpha * (a_seq[k] @ theta - b_seq[k])
            if not np.all(np.isfinite(theta)):
                raise TrajectoryBlowup(
                    step=_locate_blowup(model, alpha, theta0, n, seed, j), trajectory=j
                )
            out[j] = theta
    return out - model.theta_star


def _locate_blowup(
    model: LsaModel, alpha: float, theta0: np.ndarray, n: int, seed: int, j: int
) -> int:
    """Re-run trajectory j stepwise to find the first non-finite step."""
    try:
        run_trajectory(model, alpha, theta0, n, stream(seed, j))
    except TrajectoryBlowup as exc:
        return exc.step
    return n


def mc_norm_moment(
    model: LsaModel, alpha: float, n: int, p: float, n_traj: int, seed: int
) -> McEstimate:
    """Monte Carlo estimate of E^(1/p) ||Gamma_{1:n}||^p over n_traj products.

    The standard error comes from the delta method applied to the sample mean
    of X_j = ||Gamma_j||^p: se(est) = (1/p) * mean^(1/p - 1) * se(mean).
    """
    _check_run_args(model, alpha, n)
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if n_traj < 2:
        raise ValueError(f"n_traj must be >= 2, got {n_traj}")
    x = np.empty(n_traj)
    if model.dim == 1:
        for lo, hi in _chunk_sizes(n_traj, 2 * n):
            a, _ = _scalar_paths(model, n, seed, lo, hi)
            gamma = np.prod(1.0 - alpha * a, axis=1)
            x[lo:hi] = np.abs(gamma) ** p
    else:
        for j in range(n_traj):
            gamma = product(model, alpha, n, stream(seed, j))
            x[j] = np.linalg.norm(gamma, 2) ** p
    mean = float(np.mean(x))
    se_mean = float(np.std(x, ddof=1) / math.sqrt(n_traj))
    if mean <= 0.0:
        return McEstimate(value=0.0, std_err=0.0, n_samples=n_traj)
    value = mean ** (1.0 / p)
    std_err = (1.0 / p) * mean ** (1.0 / p - 1.0) * se_mean
    return McEstimate(value=value, std_err=std_err, n_samples=n_traj)


def cov_j0(model: LsaModel, alpha: float, n: int) -> np.ndarray:
    """Exact covariance of the linear noise term after n steps.

    Sigma_0 = 0;  Sigma_{k+1} = (I - alpha*abar) Sigma_k (I - alpha*abar)^T
    + alpha^2 * Sigma_eps.  As n grows this approaches alpha * S where S
    solves the discretized-Riccati equation.
    """
    _check_run_args(model, alpha, n)
    g = np.eye(model.dim) - alpha * model.abar
    sig = np.zeros((model.dim, model.dim))
    drive = alpha**2 * model.sigma_eps_exact
    for _ in range(n):
        sig = g @ sig @ g.T + drive
    return 0.5 * (sig + sig.T)


def stationary_horizon(
    profile: SpectralProfile, alpha: float, tol: float, dim: int | None = None
) -> int:
    """Burn-in length n with sqrt(kappa_q * d) * (1 - a*alpha/2)^(n/2) <= tol.

    ceil(2 * log(tol / sqrt(kappa_q * d)) / log(1 - a*alpha/2)), at least 1.
    """
    d = profile.dim if dim is None else dim
    if not 0.0 < tol:
        raise ValueError(f"tol must be positive, got {tol}")
    rate = 1.0 - profile.a * alpha / 2.0
    if not 0.0 < rate < 1.0:
        raise ValueError(f"need 0 < 1 - a*alpha/2 < 1, got {rate}")
    target = tol / math.sqrt(profile.kappa_q * d)
    if target >= 1.0:
        return 1
    return max(1, math.ceil(2.0 * math.log(target) / math.log(rate)))


def sample_stationary(
    model: LsaModel,
    alpha: float,
    n_samples: int,
    seed: int,
    tol: float | None = None,
    profile: SpectralProfile | None = None,
) -> np.ndarray:
    """Approximate stationary samples by forward burn-in from theta_star.

    Each sample is the endpoint of an independent trajectory of length
    N(alpha, tol) started at theta_star; tol defaults to
    1e-8 * (1 + ||theta_star||).  Returns shape (n_samples, d).
    """
    if profile is None:
        from lsalab.noise import lyapunov_witness

        profile = lyapunov_witness(model)
    if tol is None:
        tol = 1e-8 * (1.0 + float(np.linalg.norm(model.theta_star)))
    horizon = stationary_horizon(profile, alpha, tol, model.dim)
    return model.theta_star + final_errors(
        model, alpha, model.theta_star, horizon, n_samples, seed
    )


def coupled_w2(
    model: LsaModel,
    alpha: float,
    n: int,
    theta0_a: np.ndarray,
    theta0_b: np.ndarray,
    n_traj: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Synchronous-coupling contraction curve.

    Two copies of the recursion share every (A, b) draw, so their difference
    satisfies Delta_{k+1} = (I - alpha*A_{k+1}) Delta_k.  Returns the per-step
    estimates of E^(1/2) ||Delta_k||^2 for k = 0..n and their delta-method
    standard errors, each of shape (n+1,).
    """
    _check_run_args(model, alpha, n)
    d = model.dim
    delta0 = np.asarray(theta0_a, dtype=float).reshape(d) - np.asarray(
        theta0_b, dtype=float
    ).reshape(d)
    sq = np.empty((n_traj, n + 1))
    if d == 1:
        for lo, hi in _chunk_sizes(n_traj, 2 * n):
            a, _ = _scalar_paths(model, n, seed, lo, hi)
            delta = np.full(hi - lo, delta0[0])
            sq[lo:hi, 0] = delta**2
            for k in range(n):
                delta = (1.0 - alpha * a[:, k]) * delta
                sq[lo:hi, k + 1] = delta**2
    else:
        eye = np.eye(d)
        for j in range(n_traj):
            a_seq, _ = model.sample_path(stream(seed, j), n)
            delta = delta0.copy()
            sq[j, 0] = delta @ delta
            for k in range(n):
                delta = (eye - alpha * a_seq[k]) @ delta
                sq[j, k + 1] = delta @ delta
    mean = np.mean(sq, axis=0)
    se_mean = np.std(sq, axis=0, ddof=1) / math.sqrt(n_traj)
    value = np.sqrt(mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        std_err = np.where(mean > 0.0, se_mean / (2.0 * np.sqrt(mean)), 0.0)
    return value, std_err


def coupled_exact_sq(
    model: LsaModel, alpha: float, n: int, delta0: np.ndarray
) -> np.ndarray:
    """Exact E||Delta_k||^2, k = 0..n, for the synchronous coupling.

    vec(E[Delta_k Delta_k.T]) evolves by the one-step second-moment transfer
    E[(I - alpha*A) (x) (I - alpha*A)] built from the model's closed-form
    kernel E[A (x) A]; each entry of the returned curve is the trace of the
    matrixized state.  This is the deterministic counterpart of the Monte
    Carlo curve from :func:`coupled_w2` (squared scale).
    """
    _check_run_args(model, alpha, n)
    from lsalab.noise import second_moment_kernel

    d = model.dim
    delta0 = np.asarray(delta0, dtype=float).reshape(d)
    kernel = second_moment_kernel(model)
    g = np.eye(d) - alpha * model.abar
    transfer = np.kron(g, g) + alpha**2 * (kernel - np.kron(model.abar, model.abar))
    state = np.outer(delta0, delta0).reshape(-1)
    out = np.empty(n + 1)
    idx = np.arange(d) * (d + 1)
    out[0] = float(np.sum(state[idx]))
    for k in range(n):
        state = transfer @ state
        out[k + 1] = float(np.sum(state[idx]))
    return out


# ---------------------------------------------------------------------------
# Exact scalar oracles for the biased Rademacher recursion.
# ---------------------------------------------------------------------------


def rademacher_exact_moment(q_a: float, alpha: float, p: float, n: int) -> float:
    """Exact E|theta_n|^p for theta_{k+1} = (1 - alpha*A_{k+1}) theta_k, theta_0 = 1.

    Equals {q_a (1-alpha)^p + (1-q_a) (1+alpha)^p}^n, evaluated in log-space
    so large p / n do not overflow intermediate terms (the result itself may
    still be inf-large for extreme inputs).
    """
    if not 0.0 < q_a < 1.0:
        raise ValueError(f"q_a must lie in (0, 1), got {q_a}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 0 or p <= 0.0:
        raise ValueError(f"need n >= 0 and p > 0, got n={n}, p={p}")
    log_base = logsumexp(
        [math.log(q_a) + p * math.log1p(-alpha), math.log1p(-q_a) + p * math.log1p(alpha)]
    )
    return float(np.exp(n * log_base))


def rademacher_exact_tail(q_a: float, alpha: float, n: int, t: float) -> float:
    """Exact P(theta_n >= t) for the same recursion, via the Binomial CDF.

    theta_n = (1-alpha)^K (1+alpha)^(n-K) with K ~ Binomial(n, q_a), so the
    event is K <= k* with k* = floor((n log(1+alpha) - log t) / log((1+alpha)/(1-alpha))),
    clamped to [-1, n].
    """
    if not 0.0 < q_a < 1.0:
        raise ValueError(f"q_a must lie in (0, 1), got {q_a}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if t <= 0.0:
        return 1.0
    log_ratio = math.log1p(alpha) - math.log1p(-alpha)
    k_star = math.floor((n * math.log1p(alpha) - math.log(t)) / log_ratio)
    k_star = max(-1, min(n, k_star))
    if k_star < 0:
        return 0.0
    return float(binom.cdf(k_star, n, q_a))


# ---------------------------------------------------------------------------
# Empirical statistics for sampled ensembles.
# ---------------------------------------------------------------------------


def empirical_quantile(samples: np.ndarray, level: float) -> float:
    """Interpolated order statistic (numpy's linear interpolation rule)."""
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"level must lie in [0, 1], got {level}")
    return float(np.quantile(np.asarray(samples, dtype=float).reshape(-1), level))


def empirical_w2(x: np.ndarray, y: np.ndarray) -> float:
    """1-D Wasserstein-2 distance between equal-size samples: sorted pairing."""
    x = np.sort(np.asarray(x, dtype=float).reshape(-1))
    y = np.sort(np.asarray(y, dtype=float).reshape(-1))
    if x.size != y.size or x.size == 0:
        raise ValueError("samples must be non-empty and of equal size")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def empirical_ks(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov statistic of a sample against a supplied CDF."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - f), np.max(f - (grid - 1.0 / n))))
