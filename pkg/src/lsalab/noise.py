"""Noise models: joint laws for the random pairs (A_n, b_n).

A model packages the mean pair (abar, bbar), the target theta_star solving
``abar @ theta_star = bbar``, the scale constants used by the bound
evaluators (c_a, sigma_b), the exact covariance of the effective noise

    eps_n = (b_n - bbar) - (A_n - abar) @ theta_star,

and a sampler.  Samplers draw whole paths at once from a single stream with a
fixed consumption layout (all A-noise words for the n steps first, then all
b-noise words), so a path is a pure function of ``(seed, stream_id, n)`` and
never depends on batching or scheduling.

All built-in models satisfy the standing noise assumptions: ||A_n|| <= c_a
almost surely (or with the documented sub-Gaussian scale), and ||b_n - bbar||
sub-Gaussian with scale sigma_b (sigma * sqrt(d) for the Gaussian-vector
models, i.e. the RMS of the norm; exact range bounds for the finite-state
model).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from numpy.random import Generator

from lsalab.linalg import (
    _as_square,
    hurwitz_check,
    solve_lyapunov,
    spectral_norm,
)
from lsalab.rng import normal_inverse_cdf, rademacher, uniform_open01

# Power-iteration controls for the stationary law of the finite-state chain.
STATIONARY_TOL = 1e-12
STATIONARY_MAX_ITERS = 10**6


class PathSampler(Protocol):
    def sample_path(self, gen: Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw (A_1..A_n, b_1..b_n) with shapes (n, d, d) and (n, d)."""


@dataclass(frozen=True)
class ContractiveProfile:
    """Witness that every realization of A contracts in a common geometry.

    ``||I - alpha*A||_{q_tilde}^2 <= 1 - a_tilde * alpha`` almost surely for
    alpha in (0, alpha_tilde_inf].
    """

    q_tilde: np.ndarray
    a_tilde: float
    alpha_tilde_inf: float

    @property
    def kappa_q_tilde(self) -> float:
        w = np.linalg.eigvalsh(self.q_tilde)
        return float(w[-1] / w[0])


@dataclass(frozen=True)
class LsaModel:
    """A fully specified instance of the fixed-stepsize linear recursion."""

    name: str
    dim: int
    abar: np.ndarray
    bbar: np.ndarray
    theta_star: np.ndarray
    c_a: float
    sigma_b: float
    sigma_eps_exact: np.ndarray
    sampler: PathSampler
    a1_compliant: bool = True
    contractive: ContractiveProfile | None = None

    def sample_path(self, gen: Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self.sampler.sample_path(gen, n)


def sample_pair(model: LsaModel, gen: Generator) -> tuple[np.ndarray, np.ndarray]:
    """One draw of (A, b), shapes (d, d) and (d,)."""
    a_seq, b_seq = model.sample_path(gen, 1)
    return a_seq[0], b_seq[0]


def eps_noise(model: LsaModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Effective noise eps = (b - bbar) - (A - abar) @ theta_star.

    Accepts single pairs or stacked paths (leading axes broadcast).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (b - model.bbar) - (a - model.abar) @ model.theta_star


def sigma_eps(model: LsaModel) -> np.ndarray:
    """Exact covariance of the effective noise, E[eps eps.T]."""
    return model.sigma_eps_exact


def eps_subgauss_const(model: LsaModel) -> float:
    """Sub-Gaussian scale of ||eps||: sqrt(2*sigma_b^2 + 8*c_a^2*||theta_star||^2)."""
    t2 = float(np.dot(model.theta_star, model.theta_star))
    return float(np.sqrt(2.0 * model.sigma_b**2 + 8.0 * model.c_a**2 * t2))


# ---------------------------------------------------------------------------
# Biased Rademacher (1-D): the moment blow-up witness.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _BiasedRademacherSampler:
    q_a: float

    def sample_path(self, gen: Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        a = rademacher(gen, n, p_plus=self.q_a).reshape(n, 1, 1)
        b = np.zeros((n, 1))
        return a, b


def biased_rademacher_model(q_a: float) -> LsaModel:
    """Scalar recursion with A = +-1, P(A = +1) = q_a in (1/2, 1), b = 0.

    The mean 2*q_a - 1 is positive, so the recursion is stable in every
    moment of low enough order, yet moments of order above a finite
    threshold blow up exponentially; tails of the n-step product are exact
    Binomial sums.
    """
    if not 0.5 < q_a < 1.0:
        raise ValueError(f"q_a must lie in (1/2, 1), got {q_a}")
    abar = np.array([[2.0 * q_a - 1.0]])
    return LsaModel(
        name="biased_rademacher",
        dim=1,
        abar=abar,
        bbar=np.zeros(1),
        theta_star=np.zeros(1),
        c_a=1.0,
        sigma_b=0.0,
        sigma_eps_exact=np.zeros((1, 1)),
        sampler=_BiasedRademacherSampler(q_a),
    )


# ---------------------------------------------------------------------------
# Biased Rademacher A with Gaussian b (1-D).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _RademacherGaussianSampler:
    q_a: float
    sigma: float

    def sample_path(self, gen: Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        a = rademacher(gen, n, p_plus=self.q_a).reshape(n, 1, 1)
        b = self.sigma * normal_inverse_cdf(gen, n).reshape(n, 1)
        return a, b


def rademacher_gaussian_model(q_a: float, sigma: float) -> LsaModel:
    """Scalar recursion with A = +-1 (P(+1) = q_a) and b ~ N(0, sigma^2)."""
    if not 0.5 < q_a < 1.0:
        raise ValueError(f"q_a must lie in (1/2, 1), got {q_a}")
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    abar = np.array([[2.0 * q_a - 1.0]])
    return LsaModel(
        name="rademacher_gaussian",
        dim=1,
        abar=abar,
        bbar=np.zeros(1),
        theta_star=np.zeros(1),
        c_a=1.0,
        sigma_b=float(sigma),
        sigma_eps_exact=np.array([[float(sigma) ** 2]]),
        sampler=_RademacherGaussianSampler(q_a, sigma),
    )


# ---------------------------------------------------------------------------
# Bounded multiplicative factor: A = abar + eta * zeta * M, b = bbar + sigma*g.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _BoundedFactorSampler:
    abar: np.ndarray
    bbar: np.ndarray
    m: np.ndarray
    eta: float
    sigma: float

    def sample_path(self, gen: Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        d = self.abar.shape[0]
        zeta = rademacher(gen, n)
        a = self.abar[None, :, :] + self.eta * zeta[:, None, None] * self.m[None, :, :]
        g = normal_inverse_cdf(gen, (n, d))
        b = self.bbar[None, :] + self.sigma * g
        return a, b


def bounded_factor_model(
    abar: np.ndarray,
    bbar: np.ndarray,
    m: np.ndarray,
    eta: float,
    sigma: float,
    contractive: bool = False,
) -> LsaModel:
    """A = abar + eta * zeta * M with a fair sign zeta; b = bbar + sigma * g.

    The multiplicative noise is bounded (two-point), the additive noise
    Gaussian.  ``c_a = ||abar|| + eta * ||M||`` and the effective-noise
    covariance is exactly ``sigma^2 * I + eta^2 * (M theta*) (M theta*)^T``.

    With ``contractive=True`` (scalar models only) a common-geometry
    contraction witness is attached, valid when both realizations
    ``abar +- eta*M`` are positive: q_tilde = 1, a_tilde = min realization,
    alpha_tilde_inf = a_tilde / max realization^2, since for alpha in that
    range (1 - alpha*A)^2 <= 1 - alpha*a_tilde for both realizations.
    """
    abar = _as_square(abar, "abar")
    m = _as_square(m, "m")
    bbar = np.asarray(bbar, dtype=float).reshape(-1)
    d = abar.shape[0]
    if bbar.shape != (d,) or m.shape != (d, d):
        raise ValueError("abar, bbar, m have inconsistent shapes")
    if eta < 0.0 or sigma < 0.0:
        raise ValueError("eta and sigma must be >= 0")
    if not hurwitz_check(abar):
        raise ValueError("abar must have eigenvalues with positive real part")
    theta_star = np.linalg.solve(abar, bbar)
    m_theta = m @ theta_star
    sig_eps = sigma**2 * np.eye(d) + eta**2 * np.outer(m_theta, m_theta)
    profile = None
    if contractive:
        if d != 1:
            raise ValueError("contractive witness is only constructed for scalar models")
        lo = float(abar[0, 0] - eta * abs(m[0, 0]))
        hi = float(abar[0, 0] + eta * abs(m[0, 0]))
        if lo <= 0.0:
            raise ValueError(
                f"both realizations must be positive for the contraction witness, got {lo}"
            )
        profile = ContractiveProfile(
            q_tilde=np.eye(1), a_tilde=lo, alpha_tilde_inf=lo / hi**2
        )
    return LsaModel(
        name="bounded_factor",
        dim=d,
        abar=abar,
        bbar=bbar,
        theta_star=theta_star,
        c_a=float(spectral_norm(abar) + eta * spectral_norm(m)),
        sigma_b=float(sigma * np.sqrt(d)),
        sigma_eps_exact=sig_eps,
        sampler=_BoundedFactorSampler(abar, bbar, m, float(eta), float(sigma)),
        contractive=profile,
    )


# ---------------------------------------------------------------------------
# Temporal-difference evaluation on a finite-state reward process.
# ---------------------------------------------------------------------------


def stationary_law(p: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix by power iteration."""
    p = _as_square(p, "p")
    s = p.shape[0]
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("p must be row-stochastic")
    pi = np.full(s, 1.0 / s)
    for _ in range(STATIONARY_MAX_ITERS):
        nxt = pi @ p
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= STATIONARY_TOL:
            return nxt
        pi = nxt
    raise RuntimeError(
        f"power iteration did not reach tol={STATIONARY_TOL} within "
        f"{STATIONARY_MAX_ITERS} iterations"
    )


@dataclass(frozen=True)
class _TdZeroSampler:
    phi: np.ndarray
    rewards: np.ndarray
    gamma: float
    pi_cdf: np.ndarray
    p_cdf: np.ndarray

    def sample_path(self, gen: Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        u_x = uniform_open01(gen, n)
        u_next = uniform_open01(gen, n)
        x = np.minimum(np.searchsorted(self.pi_cdf, u_x, side="left"), self.pi_cdf.size - 1)
        rows = self.p_cdf[x]
        x_next = np.sum(u_next[:, None] > rows, axis=1)
        x_next = np.minimum(x_next, self.pi_cdf.size - 1)
        f = self.phi[x]
        f_next = self.phi[x_next]
        # rank-one outer products phi(x) (phi(x) - gamma phi(x'))^T, one per step
        a = f[:, :, None] * (f - self.gamma * f_next)[:, None, :]
        b = self.rewards[x][:, None] * f
        return a, b


def td_zero_model(
    p: np.ndarray, rewards: np.ndarray, phi: np.ndarray, gamma: float
) -> LsaModel:
    """Temporal-difference(0) evaluation pairs on a finite reward process.

    States x_n are drawn i.i.d. from the stationary law of ``p`` and the
    successor x_n' from ``p[x_n]``; then

        A_n = phi(x_n) (phi(x_n) - gamma * phi(x_n'))^T,
        b_n = r(x_n) * phi(x_n).

    The mean pair, the stationary law, c_a (max over transitions of the
    rank-one norm), sigma_b (max over states of ||b - bbar||) and the exact
    effective-noise covariance are all finite sums over the state space.
    """
    p = _as_square(p, "p")
    rewards = np.asarray(rewards, dtype=float).reshape(-1)
    phi = np.asarray(phi, dtype=float)
    s = p.shape[0]
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if phi.ndim != 2 or phi.shape[0] != s or rewards.shape != (s,):
        raise ValueError("p, rewards, phi have inconsistent shapes")
    pi = stationary_law(p)
    d_pi = np.diag(pi)
    abar = phi.T @ d_pi @ (phi - gamma * (p @ phi))
    bbar = phi.T @ (pi * rewards)
    if not hurwitz_check(abar):
        raise ValueError(
            "feature/transition combination yields a mean matrix without "
            "positive-real-part spectrum; choose full-rank features and gamma < 1"
        )
    theta_star = np.linalg.solve(abar, bbar)
    # exact noise covariance and the almost-sure bound c_a over reachable pairs
    d = phi.shape[1]
    sig_eps = np.zeros((d, d))
    c_a = 0.0
    for x in range(s):
        fx = phi[x]
        bx = rewards[x] * fx
        for x_next in range(s):
            w = pi[x] * p[x, x_next]
            if w == 0.0:
                continue
            a_real = np.outer(fx, fx - gamma * phi[x_next])
            eps = (bx - bbar) - (a_real - abar) @ theta_star
            sig_eps += w * np.outer(eps, eps)
            c_a = max(c_a, float(np.linalg.norm(fx) * np.linalg.norm(fx - gamma * phi[x_next])))
    sigma_b = float(max(np.linalg.norm(rewards[x] * phi[x] - bbar) for x in range(s)))
    return LsaModel(
        name="td_zero",
        dim=d,
        abar=abar,
        bbar=bbar,
        theta_star=theta_star,
        c_a=max(c_a, float(spectral_norm(abar))),
        sigma_b=sigma_b,
        sigma_eps_exact=0.5 * (sig_eps + sig_eps.T),
        sampler=_TdZeroSampler(
            phi=phi,
            rewards=rewards,
            gamma=float(gamma),
            pi_cdf=np.cumsum(pi),
            p_cdf=np.cumsum(p, axis=1),
        ),
    )


def lyapunov_witness(model: LsaModel):
    """Spectral profile of the model's mean matrix (convenience wrapper)."""
    from lsalab.linalg import spectral_profile

    return spectral_profile(model.abar, model.c_a)


# ---------------------------------------------------------------------------
# Exact second-moment structure of the random matrices.
# ---------------------------------------------------------------------------


def second_moment_kernel(model: LsaModel) -> np.ndarray:
    """Exact E[kron(A, A)] of the model's random matrix, shape (d^2, d^2).

    With numpy's row-major vec, ``kron(A, A) @ vec(X) == vec(A @ X @ A.T)``,
    so this kernel drives every exact second-moment recursion of the
    iterates.  Each built-in sampler admits a closed form: the +-1 factors
    are sign-invariant under the Kronecker square, the bounded-factor law
    has a two-point mixture, and the finite-state pairs reduce to a weighted
    sum over reachable transitions.
    """
    sampler = model.sampler
    if isinstance(sampler, (_BiasedRademacherSampler, _RademacherGaussianSampler)):
        return np.ones((1, 1))
    if isinstance(sampler, _BoundedFactorSampler):
        return np.kron(sampler.abar, sampler.abar) + sampler.eta**2 * np.kron(
            sampler.m, sampler.m
        )
    if isinstance(sampler, _TdZeroSampler):
        d = model.dim
        pi = np.diff(sampler.pi_cdf, prepend=0.0)
        p = np.diff(sampler.p_cdf, prepend=0.0, axis=1)
        out = np.zeros((d * d, d * d))
        for x in range(pi.size):
            fx = sampler.phi[x]
            for x_next in range(pi.size):
                w = pi[x] * p[x, x_next]
                if w == 0.0:
                    continue
                a_real = np.outer(fx, fx - sampler.gamma * sampler.phi[x_next])
                out += w * np.kron(a_real, a_real)
        return out
    raise NotImplementedError(
        f"no closed-form second-moment kernel for sampler {type(sampler).__name__}"
    )


def exact_stationary_cov(model: LsaModel, alpha: float) -> np.ndarray:
    """Exact stationary covariance of theta - theta_star at stepsize alpha.

    The stationary V solves

        abar @ V + V @ abar.T - alpha * E[A V A.T] = alpha * Sigma_eps,

    the fixed point of the one-step map V -> E[(I-alpha*A) V (I-alpha*A).T]
    + alpha^2 * Sigma_eps.  Unlike the linearized stationary scale
    (``solve_riccati``, which replaces E[A . A.T] by abar . abar.T), this
    keeps the multiplicative noise exactly, so it is the true limit of
    Var(theta_n) whenever that limit exists.  Raises when the second-moment
    map is not a contraction at this stepsize.
    """
    if not (np.isfinite(alpha) and alpha > 0.0):
        raise ValueError(f"alpha must be positive and finite, got {alpha}")
    d = model.dim
    kernel = second_moment_kernel(model)
    g = np.eye(d) - alpha * model.abar
    transfer = np.kron(g, g) + alpha**2 * (kernel - np.kron(model.abar, model.abar))
    radius = float(np.max(np.abs(np.linalg.eigvals(transfer))))
    if radius >= 1.0:
        raise ValueError(
            f"second moment of the iterates has no stationary value at "
            f"alpha={alpha} (one-step transfer has spectral radius {radius:.6g})"
        )
    eye = np.eye(d)
    k = np.kron(model.abar, eye) + np.kron(eye, model.abar) - alpha * kernel
    v = np.linalg.solve(k, alpha * model.sigma_eps_exact.reshape(-1)).reshape(d, d)
    return 0.5 * (v + v.T)
