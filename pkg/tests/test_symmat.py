"""Tests for the symmetric-matrix kernel: eigen conventions, PSD projection
calculus, pseudoinverse, partitioning, tangent-cone residuals."""

import numpy as np
import pytest

from sqsdp import symmat
from sqsdp.symmat import (
    EigenDecomp,
    eig,
    partition,
    pinv,
    proj_psd,
    proj_psd_dirderiv,
    proj_psd_jacobian_svec,
    smat,
    svec,
    sym,
    tangent_cone_residual,
)


def rand_sym(rng, d, scale=1.0):
    return sym(rng.standard_normal((d, d)) * scale)


class TestEig:
    def test_already_diagonal(self):
        dec = eig(np.diag([3.0, 1.0]))
        assert np.allclose(dec.values, [3.0, 1.0])
        assert np.allclose(dec.vectors, np.eye(2))

    def test_2x2_analytic(self):
        dec = eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(dec.values, [1.0, -1.0])
        s = 1.0 / np.sqrt(2.0)
        assert np.allclose(dec.vectors[:, 0], [s, s])
        assert np.allclose(dec.vectors[:, 1], [s, -s])

    def test_reconstruction_random(self):
        rng = np.random.default_rng(42)
        M = rand_sym(rng, 6)
        dec = eig(M)
        assert np.linalg.norm(dec.reassemble() - M, "fro") <= 1e-10 * (1 + np.linalg.norm(M, "fro"))

    def test_invariants(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            d = int(rng.integers(1, 8))
            M = rand_sym(rng, d, scale=float(rng.uniform(0.1, 50)))
            dec = eig(M)
            assert np.linalg.norm(dec.vectors.T @ dec.vectors - np.eye(d), "fro") <= 1e-12 * d
            assert np.all(np.diff(dec.values) <= 0)  # descending

    def test_deterministic_and_sign_fixed(self):
        rng = np.random.default_rng(0)
        M = rand_sym(rng, 5)
        d1, d2 = eig(M), eig(M)
        assert np.array_equal(d1.vectors, d2.vectors)
        assert np.array_equal(d1.values, d2.values)
        for j in range(5):
            col = d1.vectors[:, j]
            nz = np.nonzero(col)[0]
            assert col[nz[0]] > 0


class TestProjPsd:
    def test_eigenvalue_clamp(self):
        assert np.allclose(proj_psd(np.diag([2.0, -3.0])), np.diag([2.0, 0.0]))

    def test_psd_fixed_point(self):
        rng = np.random.default_rng(1)
        B = rng.standard_normal((4, 4))
        M = B @ B.T
        assert np.linalg.norm(proj_psd(M) - M, "fro") <= 1e-10 * (1 + np.linalg.norm(M, "fro"))

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        M = rand_sym(rng, 5)
        P1 = proj_psd(M)
        assert np.linalg.norm(proj_psd(P1) - P1, "fro") <= 1e-10

    def test_result_is_psd(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            M = rand_sym(rng, 5)
            lam_min = np.linalg.eigvalsh(proj_psd(M))[0]
            assert lam_min >= -1e-12 * np.linalg.norm(M, "fro")

    def test_nearest_psd_oracle(self):
        # Independent oracle for the nearest-PSD problem: a conic solve through
        # cvxpy/Clarabel plus the Moreau optimality certificate (S >= 0,
        # S - M >= 0, <S, S - M> = 0 characterizes the projection uniquely).
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(3)
        M = rand_sym(rng, 5)
        mine = proj_psd(M)
        R = mine - M
        assert np.linalg.eigvalsh(mine)[0] >= -1e-10
        assert np.linalg.eigvalsh(R)[0] >= -1e-10
        assert abs(np.sum(mine * R)) <= 1e-10
        S = cp.Variable((5, 5), symmetric=True)
        problem = cp.Problem(cp.Minimize(cp.sum_squares(S - M)), [S >> 0])
        problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
        assert np.linalg.norm(S.value - mine, "fro") <= 1e-8

    def test_nonexpansive_500_pairs(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            A = rand_sym(rng, 4, scale=float(rng.uniform(0.1, 10)))
            B = rand_sym(rng, 4, scale=float(rng.uniform(0.1, 10)))
            lhs = np.linalg.norm(proj_psd(A) - proj_psd(B), "fro")
            rhs = np.linalg.norm(A - B, "fro")
            assert lhs <= rhs + 1e-12

    def test_complementarity_split(self):
        # X, Z PSD with XZ = 0 implies proj(X - Z) = X.
        rng = np.random.default_rng(13)
        for _ in range(50):
            d = int(rng.integers(2, 6))
            Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
            k = int(rng.integers(0, d + 1))
            a = np.zeros(d)
            b = np.zeros(d)
            a[:k] = rng.uniform(0.1, 3, size=k)
            b[k:] = rng.uniform(0.1, 3, size=d - k)
            X = sym((Q * a) @ Q.T)
            Z = sym((Q * b) @ Q.T)
            assert np.linalg.norm(proj_psd(X - Z) - X, "fro") <= 1e-10


class TestProjPsdDirDeriv:
    def test_identity_near_pd(self):
        rng = np.random.default_rng(5)
        M = np.diag([3.0, 1.0, 0.5])
        Q = rand_sym(rng, 3)
        assert np.allclose(proj_psd_dirderiv(M, Q), Q, atol=1e-12)

    def test_zero_near_nd(self):
        rng = np.random.default_rng(6)
        M = -np.diag([3.0, 1.0, 0.5])
        Q = rand_sym(rng, 3)
        assert np.allclose(proj_psd_dirderiv(M, Q), 0.0, atol=1e-12)

    def test_rank_deficient_block_example(self):
        # M = diag(1, -1), Q = ones: mixed-block weight (1+0)/(1+1) = 1/2.
        M = np.diag([1.0, -1.0])
        Q = np.ones((2, 2))
        expected = np.array([[1.0, 0.5], [0.5, 0.0]])
        got = proj_psd_dirderiv(M, Q)
        assert np.allclose(got, expected, atol=1e-12)
        # one-sided finite-difference oracle
        t = 1e-6
        fd = (proj_psd(M + t * Q) - proj_psd(M)) / t
        assert np.linalg.norm(got - fd, "fro") <= 1e-5

    def test_fd_consistency(self):
        rng = np.random.default_rng(17)
        checked = 0
        while checked < 60:
            M = rand_sym(rng, 5)
            if np.min(np.abs(np.linalg.eigvalsh(M))) <= 1e-4:
                continue
            Q = rand_sym(rng, 5)
            Q /= np.linalg.norm(Q, "fro")
            t = 1e-7
            fd = (proj_psd(M + t * Q) - proj_psd(M)) / t
            err = np.linalg.norm(proj_psd_dirderiv(M, Q) - fd, "fro")
            assert err <= 1e-5, f"fd mismatch {err:.2e}"
            checked += 1

    def test_positive_homogeneity(self):
        rng = np.random.default_rng(19)
        M = np.diag([1.0, 0.0, -1.0])  # all three blocks active
        Q = rand_sym(rng, 3)
        d1 = proj_psd_dirderiv(M, Q)
        d2 = proj_psd_dirderiv(M, 2.0 * Q)
        assert np.linalg.norm(d2 - 2.0 * d1, "fro") <= 1e-12 * (1 + np.linalg.norm(d1, "fro"))

    def test_zero_direction_short_circuit(self):
        out = proj_psd_dirderiv(np.diag([1.0, -1.0]), np.zeros((2, 2)))
        assert np.array_equal(out, np.zeros((2, 2)))

    def test_nonlinear_in_direction_on_zero_block(self):
        # At M = 0 the derivative along Q is proj(Q) itself.
        rng = np.random.default_rng(23)
        Q = rand_sym(rng, 3)
        out = proj_psd_dirderiv(np.zeros((3, 3)), Q)
        assert np.allclose(out, proj_psd(Q), atol=1e-12)

    def test_repeated_eigenspace_rotation_invariance(self):
        # The block formula only involves eigenvalues and rotated copies of Q,
        # so rebuilding M from a rotated basis of a repeated eigenspace must
        # not change the result.
        rng = np.random.default_rng(29)
        lam = np.array([2.0, 2.0, -1.0])
        P = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        theta = 0.7
        R = np.eye(3)
        R[:2, :2] = [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        P2 = P @ R  # rotates within the lam=2 eigenspace
        M1 = sym((P * lam) @ P.T)
        M2 = sym((P2 * lam) @ P2.T)
        assert np.linalg.norm(M1 - M2, "fro") <= 1e-12
        Q = rand_sym(rng, 3)
        out1 = proj_psd_dirderiv(M1, Q)
        out2 = proj_psd_dirderiv(M2, Q)
        assert np.linalg.norm(out1 - out2, "fro") <= 1e-9


class TestPinv:
    def test_diagonal(self):
        assert np.allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))

    def test_full_rank(self):
        rng = np.random.default_rng(31)
        B = rng.standard_normal((4, 4))
        M = B @ B.T + 0.5 * np.eye(4)
        assert np.linalg.norm(M @ pinv(M) - np.eye(4), "fro") <= 1e-8

    def test_rank_one(self):
        v = np.array([2.0, 0.0, 0.0])  # norm 2
        M = np.outer(v, v)
        expected = np.outer(v, v) / 16.0
        got = pinv(M)
        assert np.allclose(got, expected, atol=1e-12)

    def test_penrose_identities_psd(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            d = int(rng.integers(2, 6))
            r = int(rng.integers(1, d + 1))
            B = rng.standard_normal((d, r))
            M = B @ B.T
            Mp = pinv(M)
            scale = 1.0 + np.linalg.norm(M, "fro")
            assert np.linalg.norm(M @ Mp @ M - M, "fro") <= 1e-8 * scale
            assert np.linalg.norm(Mp @ M @ Mp - Mp, "fro") <= 1e-8 * (1 + np.linalg.norm(Mp))
            assert np.linalg.norm((M @ Mp).T - M @ Mp, "fro") <= 1e-8
            assert np.linalg.norm((Mp @ M).T - Mp @ M, "fro") <= 1e-8


class TestPartition:
    @staticmethod
    def _dec(values):
        d = len(values)
        return EigenDecomp(vectors=np.eye(d), values=np.array(values, dtype=float))

    def test_three_way(self):
        part = partition(self._dec([2.0, 0.0, -1.0]), 1e-8)
        assert part.alpha.tolist() == [0]
        assert part.beta.tolist() == [1]
        assert part.gamma.tolist() == [2]
        assert part.sizes == (1, 1, 1)

    def test_inside_tolerance(self):
        part = partition(self._dec([1e-9, -1e-9]), 1e-8)
        assert part.beta.tolist() == [0, 1]
        assert not part.fragile

    def test_fragile_flag(self):
        part = partition(self._dec([5e-8, -1.0]), 1e-8)
        assert part.alpha.tolist() == [0]
        assert part.gamma.tolist() == [1]
        assert part.fragile

    def test_covers_everything(self):
        rng = np.random.default_rng(41)
        for _ in range(30):
            vals = rng.standard_normal(6) * 10.0 ** rng.integers(-10, 2)
            part = partition(self._dec(vals), 1e-8)
            assert sum(part.sizes) == 6

    def test_negative_tol_rejected(self):
        with pytest.raises(ValueError):
            partition(self._dec([1.0]), -1.0)


class TestTangentConeResidual:
    def test_full_rank_x(self):
        dec = eig(np.eye(3))
        part = partition(dec, 1e-8)
        M = np.array([[0.0, 5.0, 1.0], [5.0, -7.0, 0.0], [1.0, 0.0, 2.0]])
        assert tangent_cone_residual(dec, part, M) == 0.0

    def test_restricted_block_psd(self):
        dec = eig(np.diag([1.0, 0.0]))
        part = partition(dec, 1e-8)
        assert tangent_cone_residual(dec, part, np.diag([-5.0, 1.0])) == 0.0

    def test_restricted_block_violation(self):
        dec = eig(np.diag([1.0, 0.0]))
        part = partition(dec, 1e-8)
        # oracle: the restricted block is the scalar M[1,1] = -2
        assert tangent_cone_residual(dec, part, np.diag([7.0, -2.0])) == pytest.approx(2.0, abs=1e-12)


class TestSvec:
    def test_roundtrip_and_inner_product(self):
        rng = np.random.default_rng(43)
        for d in (1, 2, 5):
            A = rand_sym(rng, d)
            B = rand_sym(rng, d)
            assert np.allclose(smat(svec(A), d), A)
            assert np.isclose(svec(A) @ svec(B), np.sum(A * B))

    def test_congruence_orthogonal(self):
        rng = np.random.default_rng(47)
        P = np.linalg.qr(rng.standard_normal((4, 4)))[0]
        C = symmat.congruence_matrix(P)
        t = symmat.svec_dim(4)
        assert np.linalg.norm(C.T @ C - np.eye(t), "fro") <= 1e-12

    def test_jacobian_matches_dirderiv_when_linear(self):
        # Away from zero eigenvalues the directional derivative is linear and
        # both code paths must agree.
        rng = np.random.default_rng(53)
        M = rand_sym(rng, 4)
        assert np.min(np.abs(np.linalg.eigvalsh(M))) > 1e-4
        G = proj_psd_jacobian_svec(M)
        for _ in range(5):
            Q = rand_sym(rng, 4)
            lhs = smat(G @ svec(Q), 4)
            rhs = proj_psd_dirderiv(M, Q)
            assert np.linalg.norm(lhs - rhs, "fro") <= 1e-10
