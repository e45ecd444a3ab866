"""Dense solver layer: worked instances, independent solver routes, geometry.

The Kronecker-form solvers are cross-checked against scipy's Schur-based
Lyapunov solvers (a genuinely different algorithm), and the derived
contraction constants are checked against their defining inequalities.
"""

from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from lsalab.linalg import (
    NotHurwitzError,
    NotSpdError,
    SolverResidualError,
    alpha_p_inf,
    hurwitz_check,
    q_norm_mat,
    q_norm_vec,
    schatten_norm,
    solve_lyapunov,
    solve_riccati,
    solve_sigma,
    spd_sqrt,
    spectral_norm,
    spectral_profile,
)
from lsalab.rng import stream


def random_hurwitz(gen: np.random.Generator, dim: int) -> np.ndarray:
    """Random matrix with eigenvalues in the open right half plane."""
    g = gen.standard_normal((dim, dim))
    r = gen.standard_normal((dim, dim))
    return g @ g.T / dim + 0.1 * np.eye(dim) + 0.5 * (r - r.T)


def random_spd(gen: np.random.Generator, dim: int) -> np.ndarray:
    w = gen.standard_normal((dim, dim))
    return w @ w.T / dim + 0.1 * np.eye(dim)


class TestSolveLyapunov:
    def test_shear_instance_by_hand(self):
        # abar = [[1, 1], [0, 1]]: expanding abar.T q + q abar = I entrywise
        # gives q11 = 1/2, q12 = -1/4, q22 = 3/4.
        q = solve_lyapunov(np.array([[1.0, 1.0], [0.0, 1.0]]))
        expected = np.array([[0.5, -0.25], [-0.25, 0.75]])
        assert np.allclose(q, expected, atol=1e-12)

    def test_scalar_closed_form(self):
        # 2 q abar = 1  =>  q = 1 / (2 abar)
        assert solve_lyapunov(np.array([[0.5]]))[0, 0] == pytest.approx(1.0, abs=1e-14)
        assert solve_lyapunov(np.array([[2.0]]))[0, 0] == pytest.approx(0.25, abs=1e-14)

    def test_matches_schur_route(self):
        for trial in range(25):
            gen = stream(101, trial)
            dim = 1 + trial % 8
            abar = random_hurwitz(gen, dim)
            q = solve_lyapunov(abar)
            ref = scipy.linalg.solve_continuous_lyapunov(abar.T, np.eye(dim))
            assert np.allclose(q, ref, rtol=1e-9, atol=1e-11)
            assert np.allclose(q, q.T)

    def test_rejects_unstable_matrix(self):
        with pytest.raises(NotHurwitzError):
            solve_lyapunov(np.array([[-1.0]]))
        with pytest.raises(NotHurwitzError):
            # one eigenvalue on the imaginary axis
            solve_lyapunov(np.array([[0.0, 1.0], [-1.0, 0.0]]))


class TestSolveSigma:
    def test_diagonal_instance(self):
        # abar = diag(2, 4), sigma_eps = I: sigma = diag(1/4, 1/8).
        sigma = solve_sigma(np.diag([2.0, 4.0]), np.eye(2))
        assert np.allclose(sigma, np.diag([0.25, 0.125]), atol=1e-13)

    def test_matches_schur_route(self):
        for trial in range(25):
            gen = stream(202, trial)
            dim = 1 + trial % 8
            abar = random_hurwitz(gen, dim)
            sigma_eps = random_spd(gen, dim)
            sigma = solve_sigma(abar, sigma_eps)
            ref = scipy.linalg.solve_continuous_lyapunov(abar, sigma_eps)
            assert np.allclose(sigma, ref, rtol=1e-9, atol=1e-11)


class TestSolveRiccati:
    def test_scalar_closed_form(self):
        # 2 abar s - alpha abar^2 s = sigma_eps  =>  s = sigma / (abar (2 - alpha abar))
        abar, alpha, se = 0.5, 0.1, 2.0
        s = solve_riccati(np.array([[abar]]), np.array([[se]]), alpha)
        assert s[0, 0] == pytest.approx(se / (abar * (2.0 - alpha * abar)), rel=1e-13)

    def test_matches_discrete_lyapunov_route(self):
        # abar s + s abar.T - alpha abar s abar.T = sigma_eps is the same
        # equation as s = g s g.T + alpha sigma_eps with g = I - alpha abar.
        for trial in range(25):
            gen = stream(303, trial)
            dim = 1 + trial % 8
            abar = random_hurwitz(gen, dim)
            sigma_eps = random_spd(gen, dim)
            alpha = 0.05 / max(1.0, spectral_norm(abar))
            s = solve_riccati(abar, sigma_eps, alpha)
            g = np.eye(dim) - alpha * abar
            ref = scipy.linalg.solve_discrete_lyapunov(g, alpha * sigma_eps)
            assert np.allclose(s, ref, rtol=1e-9, atol=1e-11)

    def test_reduces_to_sigma_as_alpha_vanishes(self):
        gen = stream(404, 0)
        abar = random_hurwitz(gen, 3)
        sigma_eps = random_spd(gen, 3)
        sigma = solve_sigma(abar, sigma_eps)
        s = solve_riccati(abar, sigma_eps, 1e-9)
        assert np.allclose(s, sigma, rtol=1e-6)

    def test_alpha_zero_is_sigma_and_negative_rejected(self):
        abar = np.array([[1.0]])
        se = np.eye(1)
        assert solve_riccati(abar, se, 0.0)[0, 0] == pytest.approx(
            solve_sigma(abar, se)[0, 0], rel=1e-14
        )
        with pytest.raises(ValueError):
            solve_riccati(abar, se, -0.1)


class TestNormsAndRoots:
    def test_spd_sqrt_roundtrip(self):
        gen = stream(505, 0)
        q = random_spd(gen, 5)
        root, inv_root = spd_sqrt(q)
        assert np.allclose(root @ root, q, atol=1e-12)
        assert np.allclose(root @ inv_root, np.eye(5), atol=1e-12)

    def test_spd_sqrt_rejects_indefinite(self):
        with pytest.raises(NotSpdError):
            spd_sqrt(np.diag([1.0, -1.0]))

    def test_q_norms_reduce_to_euclidean_at_identity(self):
        x = np.array([3.0, 4.0])
        assert q_norm_vec(x, np.eye(2)) == pytest.approx(5.0, abs=1e-14)
        m = np.array([[1.0, 2.0], [0.0, 1.0]])
        assert q_norm_mat(m, np.eye(2)) == pytest.approx(spectral_norm(m), abs=1e-14)

    def test_q_norm_operator_consistency(self):
        gen = stream(506, 0)
        q = random_spd(gen, 4)
        m = gen.standard_normal((4, 4))
        bound = q_norm_mat(m, q)
        for _ in range(50):
            x = gen.standard_normal(4)
            assert q_norm_vec(m @ x, q) <= bound * q_norm_vec(x, q) * (1 + 1e-12)

    def test_schatten_norm_against_svd(self):
        gen = stream(507, 0)
        m = gen.standard_normal((4, 6))
        sv = np.linalg.svd(m, compute_uv=False)
        assert schatten_norm(m, 1) == pytest.approx(sv.sum(), rel=1e-12)
        assert schatten_norm(m, 2) == pytest.approx(np.sqrt((sv**2).sum()), rel=1e-12)
        assert schatten_norm(m, np.inf) == pytest.approx(sv[0], rel=1e-12)
        with pytest.raises(ValueError):
            schatten_norm(m, 0.5)


class TestSpectralProfile:
    def test_scalar_constants(self):
        # abar = 1/2: q = 1, a = 1/2, alpha_inf = 1/(2 * (1/2)^2) ... with
        # q = 1 the weighted norm of abar is 1/2, so alpha_inf = 2.
        prof = spectral_profile(np.array([[0.5]]), c_a=1.0)
        assert prof.q[0, 0] == pytest.approx(1.0, abs=1e-14)
        assert prof.a == pytest.approx(0.5, abs=1e-14)
        assert prof.alpha_inf == pytest.approx(2.0, rel=1e-13)
        assert prof.kappa_q == pytest.approx(1.0, abs=1e-13)
        assert prof.b_q == pytest.approx(2.0, rel=1e-13)
        assert prof.b_q_prime is None
        assert prof.dim == 1
        # a * alpha_inf = 1 exactly for every scalar model
        assert prof.a * prof.alpha_inf == pytest.approx(1.0, rel=1e-13)

    def test_sub_gaussian_scale_carried(self):
        prof = spectral_profile(np.array([[0.5]]), c_a=1.0, c_a_prime=3.0)
        assert prof.b_q_prime == pytest.approx(6.0, rel=1e-13)

    def test_rejects_small_c_a(self):
        with pytest.raises(ValueError):
            spectral_profile(np.array([[2.0]]), c_a=1.0)

    def test_step_limit_product_never_exceeds_one(self):
        # a * alpha_inf = ||abar||_q^-2 / (4 ||q||^2 a) ... direct consequence
        # of 1 = ||abar.T q + q abar|| <= 2 ||q|| ||abar||: always <= 1.
        for trial in range(30):
            gen = stream(606, trial)
            dim = 1 + trial % 8
            abar = random_hurwitz(gen, dim)
            prof = spectral_profile(abar, c_a=2.0 * spectral_norm(abar))
            assert prof.a * prof.alpha_inf <= 1.0 + 1e-12

    @given(st.integers(min_value=0, max_value=500))
    @settings(max_examples=40, deadline=None)
    def test_contraction_inequality_property(self, trial):
        # || I - alpha abar ||_q^2 <= 1 - a alpha on (0, alpha_inf]
        gen = stream(707, trial)
        dim = 1 + trial % 6
        abar = random_hurwitz(gen, dim)
        prof = spectral_profile(abar, c_a=2.0 * spectral_norm(abar))
        alpha = float(gen.uniform(0.0, 1.0)) * prof.alpha_inf
        if alpha == 0.0:
            return
        g = np.eye(dim) - alpha * abar
        assert q_norm_mat(g, prof.q) ** 2 <= 1.0 - prof.a * alpha + 1e-12

    def test_alpha_p_inf_caps(self):
        prof = spectral_profile(np.array([[0.5]]), c_a=1.0)
        assert alpha_p_inf(prof, 1.0) == pytest.approx(prof.alpha_inf)
        # a / (2 b_q^2 (p-1)) = 0.5 / (2 * 4 * 1) = 1/16 at p = 2
        assert alpha_p_inf(prof, 2.0) == pytest.approx(0.0625, rel=1e-13)
        assert alpha_p_inf(prof, 3.0) == pytest.approx(0.03125, rel=1e-13)
        assert alpha_p_inf(prof, 4.0) < alpha_p_inf(prof, 3.0)
        with pytest.raises(ValueError):
            alpha_p_inf(prof, 0.5)

    def test_hurwitz_check_boundary(self):
        assert hurwitz_check(np.array([[1.0]]))
        assert not hurwitz_check(np.array([[0.0]]))
        assert not hurwitz_check(np.array([[1.0, 0.0], [0.0, -0.5]]))


class TestResidualGuard:
    def test_solver_residual_error_is_runtime_error(self):
        assert issubclass(SolverResidualError, RuntimeError)
