"""Dense linear-algebra kernel: Lyapunov geometry of the driving matrix.

Everything here is exact desk-scale linear algebra (d <= 32 or so): the
Lyapunov / stationary-covariance / discretized-Riccati equations are solved by
vectorizing them into a single dense d^2 x d^2 linear system (Kronecker form)
and calling a dense solver.  Solutions are symmetrized and validated against
an explicit residual tolerance before being returned.

Conventions: the driving matrix ``abar`` has eigenvalues with positive real
part (the recursion theta - alpha*A*theta is then stable for small alpha);
unadorned norms are spectral (operator 2-) norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Margin used when certifying that every eigenvalue has positive real part.
EIG_MARGIN = 1e-9

# Relative residual accepted from the dense solvers.
SOLVER_TOL = 1e-10

# Eigenvalues of a would-be SPD matrix below this (relative to the largest)
# are treated as zero and rejected.
SPD_EIG_FLOOR = 1e-12


class NotHurwitzError(ValueError):
    """Driving matrix has an eigenvalue whose real part is not positive."""


class NotSpdError(ValueError):
    """Matrix expected to be symmetric positive definite is not."""


class SolverResidualError(RuntimeError):
    """A dense solve produced a residual above the accepted tolerance."""


def _as_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def spectral_norm(m: np.ndarray) -> float:
    """Operator 2-norm (largest singular value)."""
    return float(np.linalg.norm(np.asarray(m, dtype=float), 2))


def hurwitz_check(abar: np.ndarray, margin: float = EIG_MARGIN) -> bool:
    """True iff every eigenvalue of ``abar`` has real part > ``margin``.

    This is the stability convention used throughout: ``-abar`` is Hurwitz,
    so the fixed-stepsize recursion contracts for small alpha.
    """
    abar = _as_square(abar, "abar")
    return bool(np.min(np.linalg.eigvals(abar).real) > margin)


def _require_hurwitz(abar: np.ndarray) -> np.ndarray:
    abar = _as_square(abar, "abar")
    if not hurwitz_check(abar):
        raise NotHurwitzError(
            "driving matrix has an eigenvalue with real part <= "
            f"{EIG_MARGIN}: eigenvalues {np.linalg.eigvals(abar)}"
        )
    return abar


def _check_residual(lhs: np.ndarray, rhs: np.ndarray, what: str) -> None:
    resid = spectral_norm(lhs - rhs)
    tol = SOLVER_TOL * (1.0 + spectral_norm(rhs))
    if not resid <= tol:
        raise SolverResidualError(f"{what}: residual {resid:.3e} exceeds {tol:.3e}")


def solve_lyapunov(abar: np.ndarray) -> np.ndarray:
    """Solve ``abar.T @ Q + Q @ abar = I`` for symmetric positive definite Q.

    Vectorized form: ``(kron(I, abar.T) + kron(abar.T, I)) vec(Q) = vec(I)``.
    The result is the squared-norm-defining matrix of the geometry in which
    one step of the deterministic recursion is a contraction.
    """
    abar = _require_hurwitz(abar)
    d = abar.shape[0]
    eye = np.eye(d)
    k = np.kron(eye, abar.T) + np.kron(abar.T, eye)
    q = np.linalg.solve(k, eye.reshape(-1)).reshape(d, d)
    q = 0.5 * (q + q.T)
    _check_residual(abar.T @ q + q @ abar, eye, "lyapunov solve")
    return q


def solve_sigma(abar: np.ndarray, sigma_eps: np.ndarray) -> np.ndarray:
    """Solve ``abar @ S + S @ abar.T = sigma_eps`` for symmetric S.

    S is the asymptotic (alpha -> 0) covariance of the rescaled iterate
    error driven by noise with covariance ``sigma_eps``.
    """
    abar = _require_hurwitz(abar)
    sigma_eps = _as_square(sigma_eps, "sigma_eps")
    d = abar.shape[0]
    eye = np.eye(d)
    k = np.kron(eye, abar) + np.kron(abar, eye)
    s = np.linalg.solve(k, sigma_eps.reshape(-1)).reshape(d, d)
    s = 0.5 * (s + s.T)
    _check_residual(abar @ s + s @ abar.T, sigma_eps, "sigma solve")
    return s


def solve_riccati(abar: np.ndarray, sigma_eps: np.ndarray, alpha: float) -> np.ndarray:
    """Solve ``abar @ S + S @ abar.T - alpha * abar @ S @ abar.T = sigma_eps``.

    S is the fixed-stepsize stationary covariance scale: the stationary
    covariance of the linearized iterate error is alpha * S.  At alpha = 0
    this degenerates to :func:`solve_sigma`.
    """
    abar = _require_hurwitz(abar)
    sigma_eps = _as_square(sigma_eps, "sigma_eps")
    if not 0.0 <= alpha:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    d = abar.shape[0]
    eye = np.eye(d)
    k = np.kron(eye, abar) + np.kron(abar, eye) - alpha * np.kron(abar, abar)
    s = np.linalg.solve(k, sigma_eps.reshape(-1)).reshape(d, d)
    s = 0.5 * (s + s.T)
    _check_residual(
        abar @ s + s @ abar.T - alpha * (abar @ s @ abar.T), sigma_eps, "riccati solve"
    )
    return s


def spd_sqrt(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and inverse square root of an SPD matrix.

    Uses the symmetric eigendecomposition; eigenvalues below
    SPD_EIG_FLOOR * lambda_max are rejected as numerically singular.
    """
    q = _as_square(q, "q")
    q = 0.5 * (q + q.T)
    w, v = np.linalg.eigh(q)
    if w[-1] <= 0.0 or w[0] <= SPD_EIG_FLOOR * w[-1]:
        raise NotSpdError(f"matrix is not numerically SPD: eigenvalues {w}")
    root = (v * np.sqrt(w)) @ v.T
    inv_root = (v / np.sqrt(w)) @ v.T
    return root, inv_root


def q_norm_vec(x: np.ndarray, q: np.ndarray) -> float:
    """Weighted vector norm ``sqrt(x.T @ q @ x)`` for SPD ``q``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    q = _as_square(q, "q")
    # spd_sqrt also validates positive definiteness
    root, _ = spd_sqrt(q)
    return float(np.linalg.norm(root @ x))


def q_norm_mat(m: np.ndarray, q: np.ndarray) -> float:
    """Weighted operator norm: spectral norm of ``q^(1/2) @ m @ q^(-1/2)``."""
    m = _as_square(m, "m")
    root, inv_root = spd_sqrt(q)
    return spectral_norm(root @ m @ inv_root)


@dataclass(frozen=True)
class SpectralProfile:
    """Lyapunov geometry of a driving matrix, with the derived step limits.

    Attributes
    ----------
    abar : mean driving matrix.
    q : solution of ``abar.T @ q + q @ abar = I``.
    a : contraction rate 1 / (2 * ||q||).
    alpha_inf : largest admissible stepsize, (1/2) * ||abar||_q^-2 * ||q||^-1.
    kappa_q : condition number of q.
    c_a : almost-sure bound on ||A_n|| supplied by the model.
    b_q : 2 * sqrt(kappa_q) * c_a (bounded-noise product-moment constant).
    b_q_prime : same with the sub-Gaussian scale c_a_prime, when supplied.
    """

    abar: np.ndarray
    q: np.ndarray
    a: float
    alpha_inf: float
    kappa_q: float
    c_a: float
    b_q: float
    b_q_prime: float | None = None

    @property
    def dim(self) -> int:
        return self.abar.shape[0]

    @property
    def q_norm(self) -> float:
        return spectral_norm(self.q)


def spectral_profile(
    abar: np.ndarray, c_a: float, c_a_prime: float | None = None
) -> SpectralProfile:
    """Solve the Lyapunov equation and package the derived constants.

    ``c_a`` must dominate ``||abar||`` (it is an almost-sure or sub-Gaussian
    scale for the random driving matrices, and the mean cannot exceed it).
    """
    abar = _require_hurwitz(abar)
    if not np.isfinite(c_a) or c_a < spectral_norm(abar):
        raise ValueError(
            f"c_a={c_a} must be finite and >= ||abar|| = {spectral_norm(abar):.6g}"
        )
    q = solve_lyapunov(abar)
    q_norm = spectral_norm(q)
    a = 1.0 / (2.0 * q_norm)
    abar_qnorm = q_norm_mat(abar, q)
    alpha_inf = 0.5 / (abar_qnorm**2 * q_norm)
    w = np.linalg.eigvalsh(q)
    kappa_q = float(w[-1] / w[0])
    b_q = 2.0 * np.sqrt(kappa_q) * c_a
    b_q_prime = None if c_a_prime is None else 2.0 * np.sqrt(kappa_q) * c_a_prime
    return SpectralProfile(
        abar=abar,
        q=q,
        a=a,
        alpha_inf=alpha_inf,
        kappa_q=kappa_q,
        c_a=float(c_a),
        b_q=float(b_q),
        b_q_prime=b_q_prime,
    )


def alpha_p_inf(profile: SpectralProfile, p: float) -> float:
    """Largest stepsize for which p-th product moments stay uniformly bounded.

    min(alpha_inf, a / (2 * b_q^2 * (p - 1))); the second cap is vacuous at
    p = 1.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 1:
        return profile.alpha_inf
    return min(profile.alpha_inf, profile.a / (2.0 * profile.b_q**2 * (p - 1.0)))


def schatten_norm(m: np.ndarray, p: float) -> float:
    """Schatten p-norm: ell_p norm of the singular value vector, p in [1, inf]."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if not (p >= 1.0):
        raise ValueError(f"p must be in [1, inf], got {p}")
    sv = np.linalg.svd(m, compute_uv=False)
    if np.isinf(p):
        return float(sv[0]) if sv.size else 0.0
    return float(np.sum(sv**p) ** (1.0 / p))
