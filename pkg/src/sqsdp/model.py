"""NSDP problem abstraction and Lagrangian machinery.

The problem is  min f(x)  s.t.  g(x) = 0,  X(x) >= 0 (PSD),  with Lagrangian
L(x, y, Z) = f(x) - <y, g(x)> - <Z, X(x)>.  This module holds the evaluation
contract, the constraint-derivative operators and their adjoints, the
curvature term contributed by the matrix cone, and the KKT residual

    sigma(v) = ||grad_x L(v)|| + ||g(x)|| + ||X(x) - proj_psd(X(x) - Z)||_F

which doubles as the stabilization parameter of the subproblem.  All norms on
primal-dual triples are the product-space sum norm ||x|| + ||y|| + ||Z||_F;
rate measurements depend on it, so it is fixed rather than configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import symmat


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PrimalDualPoint:
    """Primal-dual iterate v = (x, y, Z); Z is symmetrized, all fields read-only.

    Z is not required to be PSD at intermediate iterates.
    """

    x: np.ndarray
    y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", _readonly(np.atleast_1d(self.y)))
        object.__setattr__(self, "Z", _readonly(symmat.sym(self.Z)))

    def norm(self):
        return float(
            np.linalg.norm(self.x)
            + np.linalg.norm(self.y)
            + np.linalg.norm(self.Z, "fro")
        )


def distance(v, w):
    """Sum-norm distance between two primal-dual points."""
    return float(
        np.linalg.norm(v.x - w.x)
        + np.linalg.norm(v.y - w.y)
        + np.linalg.norm(v.Z - w.Z, "fro")
    )


FD_STEP = 1e-6


def _fd_jacobian(func, x, out_shape):
    """Central-difference Jacobian of func w.r.t. x, stacked along a new first axis."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = np.zeros((n,) + out_shape)
    for j in range(n):
        h = FD_STEP * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        out[j] = (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)
    return out


@dataclass(frozen=True)
class NsdpProblem:
    """Evaluation contract for an NSDP instance.

    First-order callbacks are mandatory; missing second-order callbacks are
    filled with central differences of the level below (step 1e-6*(1+|x_j|)).
    Conventions:

    - ``jac_g(x)`` is n x m with columns grad g_i(x);
    - ``Amat(x)`` is (n, d, d), slice j being the partial derivative of X
      w.r.t. x_j;
    - ``hess_g(x, y)`` is the y-weighted sum of constraint Hessians (n x n);
    - ``hess_X_contract(x, Z)`` has (i, j) entry <Z, d^2 X / dx_i dx_j>.

    Instances must stay read-only after construction; one instance may serve
    concurrent solver runs.
    """

    n: int
    m: int
    d: int
    f: Callable[[np.ndarray], float]
    grad_f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    jac_g: Callable[[np.ndarray], np.ndarray]
    Xmat: Callable[[np.ndarray], np.ndarray]
    Amat: Callable[[np.ndarray], np.ndarray]
    hess_f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_g: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    hess_X_contract: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.hess_f is None:
            grad_f = self.grad_f
            object.__setattr__(
                self,
                "hess_f",
                lambda x: symmat.sym(_fd_jacobian(grad_f, x, (self.n,))),
            )
        if self.hess_g is None:
            jac_g = self.jac_g
            object.__setattr__(
                self,
                "hess_g",
                lambda x, y: symmat.sym(
                    _fd_jacobian(lambda t: jac_g(t) @ y, x, (self.n,))
                ),
            )
        if self.hess_X_contract is None:
            Amat = self.Amat
            object.__setattr__(
                self,
                "hess_X_contract",
                lambda x, Z: symmat.sym(
                    _fd_jacobian(
                        lambda t: np.tensordot(Amat(t), symmat.sym(Z), axes=([1, 2], [0, 1])),
                        x,
                        (self.n,),
                    )
                ),
            )


def apply_dX(prob, x, u):
    """Directional derivative of the constraint matrix: sum_j u_j A_j(x)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (prob.n,):
        raise ValueError(f"direction has shape {u.shape}, expected ({prob.n},)")
    return np.tensordot(u, prob.Amat(x), axes=1)


def apply_dX_adjoint(prob, x, U):
    """Adjoint of apply_dX: component j is <A_j(x), U>."""
    U = np.asarray(U, dtype=float)
    if U.shape != (prob.d, prob.d):
        raise ValueError(f"matrix has shape {U.shape}, expected ({prob.d}, {prob.d})")
    return np.tensordot(prob.Amat(x), U, axes=([1, 2], [0, 1]))


def grad_lagrangian(prob, v):
    """grad_x L(v) = grad f(x) - jac_g(x) y - adjoint(A)(x) Z."""
    out = prob.grad_f(v.x).astype(float).copy()
    if prob.m:
        out -= prob.jac_g(v.x) @ v.y
    out -= apply_dX_adjoint(prob, v.x, v.Z)
    return out


def hess_lagrangian(prob, v):
    """Hessian of the Lagrangian in x; symmetric exactly."""
    H = np.asarray(prob.hess_f(v.x), dtype=float).copy()
    if prob.m:
        H = H - prob.hess_g(v.x, v.y)
    H = H - prob.hess_X_contract(v.x, v.Z)
    return symmat.sym(H)


def curvature_term(prob, x, Z, tol=None):
    """Matrix-cone curvature contribution: entries 2 <Z, A_i X(x)^+ A_j>.

    The trace form is symmetric when X and Z commute (as they do at KKT
    points); symmetrization guards roundoff away from such points.
    """
    A = prob.Amat(x)
    Xp = symmat.pinv(prob.Xmat(x), tol)
    Z = symmat.sym(Z)
    # C_i = Z A_i X^+, entry (i,j) = tr(C_i A_j)
    C = np.einsum("kl,ilm,mp->ikp", Z, A, Xp)
    H = 2.0 * np.einsum("ikp,jpk->ij", C, A)
    return symmat.sym(H)


def kkt_residual(prob, v):
    """KKT residual sigma(v); zero exactly at KKT points."""
    X = prob.Xmat(v.x)
    comp = X - symmat.proj_psd(X - v.Z)
    res = float(np.linalg.norm(grad_lagrangian(prob, v)))
    if prob.m:
        res += float(np.linalg.norm(prob.g(v.x)))
    res += float(np.linalg.norm(comp, "fro"))
    return res


def perturbed_kkt_residual(prob, v, u):
    """Residual of the KKT system of the perturbed problem with parameter u = (r, s, T).

    The perturbed problem shifts the objective gradient by r, the equality
    constraint by s and the matrix constraint by T; with u = 0 this reduces to
    kkt_residual.
    """
    r, s, T = u
    r = np.asarray(r, dtype=float)
    T = symmat.sym(T)
    X = prob.Xmat(v.x) + T
    comp = X - symmat.proj_psd(X - v.Z)
    res = float(np.linalg.norm(grad_lagrangian(prob, v) + r))
    if prob.m:
        res += float(np.linalg.norm(prob.g(v.x) + np.asarray(s, dtype=float)))
    res += float(np.linalg.norm(comp, "fro"))
    return res
