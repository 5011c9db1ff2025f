"""Dense symmetric-matrix kernel.

Eigendecomposition with fixed ordering/sign conventions, projection onto the
positive semidefinite cone, the directional derivative of that projection,
a spectral pseudoinverse, eigenvalue sign partitioning, and tangent-cone
membership residuals.  Everything here is a pure function of its inputs;
matrices are plain ``numpy`` arrays symmetrized on entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EigenFailure(RuntimeError):
    """Eigendecomposition did not converge or failed its sanity checks."""


def sym(M):
    """Return the symmetric part (M + M^T)/2 as a new array."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def default_tol(M):
    """Default zero-eigenvalue classification tolerance, scaled to the input."""
    return 1e-8 * (1.0 + np.linalg.norm(M, "fro"))


@dataclass(frozen=True)
class EigenDecomp:
    """Orthogonal eigendecomposition M = P diag(values) P^T.

    Eigenvalues are sorted descending; the sign of each eigenvector is fixed
    so its first nonzero component is positive.
    """

    vectors: np.ndarray  # (d, d) orthogonal, columns are eigenvectors
    values: np.ndarray   # (d,) descending

    @property
    def dim(self):
        return self.values.shape[0]

    def reassemble(self):
        return sym((self.vectors * self.values) @ self.vectors.T)


@dataclass(frozen=True)
class IndexPartition:
    """Sign partition of a spectrum: values > tol, |values| <= tol, values < -tol.

    ``fragile`` is set when any |eigenvalue| falls in (tol, 10*tol], i.e. the
    classification would flip under a modest tolerance change.
    """

    alpha: np.ndarray  # indices of positive eigenvalues
    beta: np.ndarray   # indices of (numerically) zero eigenvalues
    gamma: np.ndarray  # indices of negative eigenvalues
    tol: float
    fragile: bool

    @property
    def sizes(self):
        return (self.alpha.size, self.beta.size, self.gamma.size)


def eig(M):
    """Eigendecomposition of a symmetric matrix with fixed conventions.

    Raises EigenFailure when LAPACK does not converge or the factors fail
    the orthogonality/reconstruction sanity checks; the error message carries
    basic conditioning diagnostics of the input.
    """
    M = sym(M)
    d = M.shape[0]
    try:
        vals, vecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(
            f"eigh failed on {d}x{d} matrix: {exc}; "
            f"fro={np.linalg.norm(M, 'fro'):.3e}, "
            f"max_abs={np.abs(M).max() if M.size else 0.0:.3e}"
        ) from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    # sign convention: first nonzero component of each eigenvector is positive
    for j in range(d):
        nz = np.nonzero(vecs[:, j])[0]
        if nz.size and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    dec = EigenDecomp(vectors=vecs, values=vals)
    ortho = np.linalg.norm(vecs.T @ vecs - np.eye(d), "fro")
    recon = np.linalg.norm(dec.reassemble() - M, "fro")
    scale = 1.0 + np.linalg.norm(M, "fro")
    if ortho > 1e-12 * max(d, 1) or recon > 1e-10 * scale:
        raise EigenFailure(
            f"eigh sanity check failed on {d}x{d} matrix: "
            f"ortho={ortho:.3e}, recon={recon:.3e}, "
            f"extreme_eigs=({vals[-1] if d else 0.0:.3e}, {vals[0] if d else 0.0:.3e})"
        )
    return dec


def partition(dec, tol):
    """Partition a spectrum by sign at the given tolerance."""
    if tol < 0:
        raise ValueError(f"partition tolerance must be nonnegative, got {tol}")
    vals = dec.values
    alpha = np.flatnonzero(vals > tol)
    beta = np.flatnonzero(np.abs(vals) <= tol)
    gamma = np.flatnonzero(vals < -tol)
    a = np.abs(vals)
    fragile = bool(np.any((a > tol) & (a <= 10.0 * tol)))
    return IndexPartition(alpha=alpha, beta=beta, gamma=gamma, tol=tol, fragile=fragile)


def proj_psd(M):
    """Metric projection of a symmetric matrix onto the PSD cone."""
    dec = eig(M)
    clipped = np.maximum(dec.values, 0.0)
    return sym((dec.vectors * clipped) @ dec.vectors.T)


def proj_psd_dirderiv(M, Q, tol=None):
    """Directional derivative of the PSD-cone projection at M along Q.

    Assembled in M's eigenbasis: with N = P^T Q P and the alpha/beta/gamma
    sign partition of M's spectrum, the positive and mixed blocks are scaled
    copies of N (Hadamard weights (lam_i^+ + lam_j^+)/(|lam_i| + |lam_j|),
    zero eigenvalues treated as exactly zero), the zero-zero block is the
    nested PSD projection of N's zero-zero block, and the remaining blocks
    vanish.  Positively homogeneous in Q.
    """
    M = sym(M)
    Q = sym(Q)
    if not np.any(Q):
        return np.zeros_like(M)
    if tol is None:
        tol = default_tol(M)
    dec = eig(M)
    part = partition(dec, tol)
    lam = dec.values.copy()
    lam[part.beta] = 0.0
    N = dec.vectors.T @ Q @ dec.vectors
    pos = np.maximum(lam, 0.0)
    denom = np.abs(lam)[:, None] + np.abs(lam)[None, :]
    num = pos[:, None] + pos[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        U = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)
    B = U * N
    b = part.beta
    if b.size:
        B[np.ix_(b, b)] = proj_psd(N[np.ix_(b, b)])
    return sym(dec.vectors @ B @ dec.vectors.T)


def pinv(M, tol=None):
    """Spectral pseudoinverse: eigenvalues above tol are inverted, the rest zeroed.

    Intended for (numerically) PSD matrices: eigenvalues at or below tol,
    including negative roundoff, are treated as zero rank.
    """
    M = sym(M)
    if tol is None:
        tol = default_tol(M)
    dec = eig(M)
    inv = np.where(dec.values > tol, 1.0 / np.where(dec.values > tol, dec.values, 1.0), 0.0)
    return sym((dec.vectors * inv) @ dec.vectors.T)


def tangent_cone_residual(Xdec, part, M):
    """Violation of M lying in the PSD-cone tangent cone at the matrix behind Xdec.

    The tangent cone at a PSD matrix is characterized by PSD-ness of M
    restricted to the span of the zero/negative eigenvectors; returns
    max(0, -lambda_min) of that restricted block, and 0 when the block is empty.
    """
    keep = np.concatenate([part.beta, part.gamma])
    if keep.size == 0:
        return 0.0
    W = Xdec.vectors[:, keep]
    R = sym(W.T @ sym(M) @ W)
    lam_min = np.linalg.eigvalsh(R)[0]
    return float(max(0.0, -lam_min))


def svec(M):
    """Vectorize a symmetric matrix, scaling off-diagonals by sqrt(2).

    The scaling makes Euclidean inner products of svec vectors equal to
    Frobenius inner products of the matrices.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    iu = np.triu_indices(d)
    out = M[iu] * np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return out


def smat(v, d):
    """Inverse of svec for dimension d."""
    v = np.asarray(v, dtype=float)
    out = np.zeros((d, d))
    iu = np.triu_indices(d)
    out[iu] = v * np.where(iu[0] == iu[1], 1.0, 1.0 / np.sqrt(2.0))
    out = out + out.T - np.diag(np.diag(out))
    return out


def svec_dim(d):
    return d * (d + 1) // 2


def congruence_matrix(P):
    """Matrix of V -> P^T V P acting on svec coordinates (orthogonal for orthogonal P)."""
    d = P.shape[0]
    t = svec_dim(d)
    C = np.empty((t, t))
    basis = np.eye(t)
    for k in range(t):
        C[:, k] = svec(P.T @ smat(basis[k], d) @ P)
    return C


def proj_psd_jacobian_svec(M, tol=None):
    """A generalized-Jacobian element of the PSD projection at M, on svec coordinates.

    Hadamard form in M's eigenbasis with weights
    (lam_i^+ + lam_j^+)/(|lam_i| + |lam_j|); the 0/0 case (both eigenvalues
    numerically zero) is set to 1, the limit taken from the PSD side.  This is
    a linear surrogate for the directional derivative, which is nonlinear on
    the zero-zero block; the two coincide whenever no eigenvalue of M sits at
    zero.  Returned as a dense symmetric PSD contraction of size
    d(d+1)/2 x d(d+1)/2.
    """
    M = sym(M)
    if tol is None:
        tol = default_tol(M)
    dec = eig(M)
    part = partition(dec, tol)
    lam = dec.values.copy()
    lam[part.beta] = 0.0
    pos = np.maximum(lam, 0.0)
    denom = np.abs(lam)[:, None] + np.abs(lam)[None, :]
    num = pos[:, None] + pos[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        Omega = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 1.0)
    C = congruence_matrix(dec.vectors)
    iu = np.triu_indices(M.shape[0])
    omega_vec = Omega[iu]
    return (C.T * omega_vec) @ C
