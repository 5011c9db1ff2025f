"""Stabilized QSDP subproblem: construction and solution.

At an iterate v = (x, y, Z) with penalty sigma > 0 the subproblem is

    min   <grad f, xi> + <H xi, xi>/2 + sigma/2 (||zeta||^2 + ||Sigma||_F^2)
    s.t.  g + Jg^T xi + sigma (zeta - y) = 0
          X + A(xi) + sigma (Sigma - Z)  >= 0  (PSD)

whose KKT system identifies the constraint multipliers with (zeta, Sigma)
itself.  Stacking stationarity, the equality constraint, and the
projection-form complementarity gives a piecewise-smooth square system that
we solve with a semismooth Newton method (damped, residual-backtracking),
falling back to an alternating splitting scheme when Newton stalls.  Unlike
the unstabilized linearization, this subproblem is feasible for every input:
a feasible point is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import model, symmat
from .symmat import proj_psd, proj_psd_jacobian_svec, smat, svec, svec_dim, sym


@dataclass(frozen=True)
class StabilizedSubproblem:
    """Frozen snapshot of all data defining the subproblem at one iterate."""

    n: int
    m: int
    d: int
    gradf: np.ndarray   # (n,)
    H: np.ndarray       # (n, n) symmetric
    gval: np.ndarray    # (m,)
    Jg: np.ndarray      # (n, m)
    Xval: np.ndarray    # (d, d) symmetric
    Aops: np.ndarray    # (n, d, d), slice j symmetric
    sigma: float
    yref: np.ndarray    # (m,)
    Zref: np.ndarray    # (d, d) symmetric
    nu: Optional[float] = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(
                f"stabilized subproblem requires sigma > 0, got {self.sigma}; "
                "sigma == 0 means the outer loop should have terminated"
            )

    def apply_A(self, xi):
        return np.tensordot(xi, self.Aops, axes=1)

    def apply_A_adjoint(self, U):
        return np.tensordot(self.Aops, U, axes=([1, 2], [0, 1]))

    def cone_slack(self, xi, Sigma):
        return self.Xval + self.apply_A(xi) + self.sigma * (Sigma - self.Zref)


@dataclass(frozen=True)
class SubproblemConfig:
    tol: float = 1e-12
    newton_max_iters: int = 50
    split_max_iters: int = 20000
    convexify: bool = False
    damp_init: float = 1e-8
    damp_max: float = 1e6
    stall_window: int = 10


@dataclass(frozen=True)
class SubproblemSolution:
    xi: np.ndarray
    zeta: np.ndarray
    Sigma: np.ndarray
    kkt_res: float
    newton_iters: int
    status: str  # converged | fallback_used | failed
    split_iters: int = 0
    nu_active: bool = False


def build(prob, v, H, sigma, nu=None):
    """Freeze problem data at v into a StabilizedSubproblem; no aliasing."""
    x = np.array(v.x, dtype=float)
    return StabilizedSubproblem(
        n=prob.n, m=prob.m, d=prob.d,
        gradf=np.array(prob.grad_f(x), dtype=float),
        H=sym(H),
        gval=np.array(prob.g(x), dtype=float),
        Jg=np.array(prob.jac_g(x), dtype=float).reshape(prob.n, prob.m),
        Xval=sym(prob.Xmat(x)),
        Aops=np.array([sym(A) for A in prob.Amat(x)]).reshape(prob.n, prob.d, prob.d),
        sigma=float(sigma),
        yref=np.array(v.y, dtype=float),
        Zref=sym(v.Z),
        nu=nu,
    )


def eliminate_zeta(sp, xi):
    """zeta solving the equality constraint exactly for a given xi (empty when m=0)."""
    if not sp.m:
        return np.zeros(0)
    return sp.yref - (sp.gval + sp.Jg.T @ xi) / sp.sigma


def residual_blocks(sp, w):
    """The three KKT residual blocks (stationarity, equality, cone) at w = (xi, zeta, Sigma)."""
    xi, zeta, Sigma = w
    Sigma = sym(Sigma)
    r1 = sp.H @ xi + sp.gradf - sp.Jg @ zeta - sp.apply_A_adjoint(Sigma)
    r2 = sp.gval + sp.Jg.T @ xi + sp.sigma * (zeta - sp.yref)
    S = sp.cone_slack(xi, Sigma)
    r3 = S - proj_psd(S - Sigma)
    return r1, r2, r3


def subproblem_kkt_residual(sp, w):
    """Sum norm of the three KKT residual blocks; zero iff w is a subproblem KKT point."""
    r1, r2, r3 = residual_blocks(sp, w)
    return float(np.linalg.norm(r1) + np.linalg.norm(r2) + np.linalg.norm(r3, "fro"))


def always_feasible_point(sp):
    """The closed-form feasible point (0, y - g/sigma, Z - (X - proj(X - sigma Z))/sigma).

    Satisfies both constraints exactly for every subproblem instance; this is
    what makes the stabilized subproblem solvable where the plain linearized
    subproblem may be infeasible.
    """
    xi = np.zeros(sp.n)
    zeta = eliminate_zeta(sp, xi)
    Sigma = sp.Zref - (sp.Xval - proj_psd(sp.Xval - sp.sigma * sp.Zref)) / sp.sigma
    return xi, zeta, sym(Sigma)


def constraint_residuals(sp, w):
    """(equality norm, cone violation) of w; cone violation is max(0, -lambda_min(slack))."""
    xi, zeta, Sigma = w
    eq = sp.gval + sp.Jg.T @ xi + sp.sigma * (zeta - sp.yref)
    S = sp.cone_slack(xi, sym(Sigma))
    lam_min = np.linalg.eigvalsh(sym(S))[0] if sp.d else 0.0
    return float(np.linalg.norm(eq)), float(max(0.0, -lam_min))


def _stack(sp, r1, r2, r3):
    return np.concatenate([r1, r2, svec(r3)])


def _effective_H(sp, cfg):
    if not cfg.convexify:
        return sp.H
    lam_min = np.linalg.eigvalsh(sp.H)[0]
    shift = max(0.0, 1e-8 - lam_min)
    return sp.H + shift * np.eye(sp.n)


def _newton_matrix(sp, H, G):
    """Jacobian of the stacked KKT map at the current point.

    G is a generalized-Jacobian element of the PSD projection at S - Sigma in
    svec coordinates; A_sv stacks svec(A_j) as columns.
    """
    n, m, d = sp.n, sp.m, sp.d
    t = svec_dim(d)
    A_sv = np.column_stack([svec(sp.Aops[j]) for j in range(n)]) if n else np.zeros((t, 0))
    J = np.zeros((n + m + t, n + m + t))
    J[:n, :n] = H
    J[:n, n:n + m] = -sp.Jg
    J[:n, n + m:] = -A_sv.T
    J[n:n + m, :n] = sp.Jg.T
    J[n:n + m, n:n + m] = sp.sigma * np.eye(m)
    ImG = np.eye(t) - G
    J[n + m:, :n] = ImG @ A_sv
    J[n + m:, n + m:] = sp.sigma * ImG + G
    return J


def _solve_newton(sp, cfg, w0):
    """Semismooth Newton with residual backtracking and Levenberg damping.

    Returns (w, res, iters, converged).
    """
    n, m, d = sp.n, sp.m, sp.d
    t = svec_dim(d)
    H = _effective_H(sp, cfg)
    xi, zeta, Sigma = w0
    xi = xi.copy()
    zeta = zeta.copy()
    Sigma = sym(Sigma)

    def unpack(delta):
        return delta[:n], delta[n:n + m], smat(delta[n + m:], d)

    best = (xi, zeta, Sigma)
    r1, r2, r3 = residual_blocks(sp, (xi, zeta, Sigma))
    res = float(np.linalg.norm(r1) + np.linalg.norm(r2) + np.linalg.norm(r3, "fro"))
    best_res = res
    since_improve = 0

    for it in range(cfg.newton_max_iters):
        if res <= cfg.tol:
            return (xi, zeta, Sigma), res, it, True
        F = _stack(sp, r1, r2, r3)
        theta = float(F @ F)
        Mhat = sp.cone_slack(xi, Sigma) - Sigma
        G = proj_psd_jacobian_svec(Mhat)
        J = _newton_matrix(sp, H, G)

        tau = 0.0
        step_taken = False
        while True:
            try:
                delta = np.linalg.solve(J + tau * np.eye(J.shape[0]), -F)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                # Armijo on ||F||^2 along the (possibly damped) Newton direction
                step = 1.0
                while step >= 2.0 ** -24:
                    cand = (xi + step * delta[:n],
                            zeta + step * delta[n:n + m],
                            sym(Sigma + step * smat(delta[n + m:], d)))
                    c1, c2, c3 = residual_blocks(sp, cand)
                    theta_new = float(
                        c1 @ c1 + c2 @ c2 + np.sum(c3 * c3)
                    )
                    if theta_new <= (1.0 - 2e-4 * step) * theta:
                        xi, zeta, Sigma = cand
                        r1, r2, r3 = c1, c2, c3
                        step_taken = True
                        break
                    step *= 0.5
            if step_taken:
                break
            tau = cfg.damp_init if tau == 0.0 else tau * 10.0
            if tau > cfg.damp_max:
                break
        if not step_taken:
            break

        res = float(np.linalg.norm(r1) + np.linalg.norm(r2) + np.linalg.norm(r3, "fro"))
        if res < best_res * (1.0 - 1e-12):
            best = (xi, zeta, Sigma)
            best_res = res
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.stall_window:
                break

    if res <= cfg.tol:
        return (xi, zeta, Sigma), res, cfg.newton_max_iters, True
    return best, best_res, cfg.newton_max_iters, False


def solve_splitting(sp, tol=1e-12, max_iters=20000, w0=None, nu=None):
    """Alternating splitting scheme for the subproblem.

    Alternates (a) exact minimization of the quadratic over (xi, zeta) with
    Sigma frozen (one linear least-squares solve of the stationarity/equality
    system) and (b) the closed-form Sigma update via a single PSD projection,
    Sigma <- proj(Z - (X + A(xi))/sigma).  The Sigma update is relaxed by an
    adaptive damping factor: the undamped alternation can oscillate when
    sigma is small, and damping preserves the fixed points, which are exactly
    the subproblem KKT points.  Returns (w, res, iters, converged).
    """
    n, m = sp.n, sp.m
    K = np.zeros((n + m, n + m))
    K[:n, :n] = sp.H
    K[:n, n:] = -sp.Jg
    K[n:, :n] = sp.Jg.T
    K[n:, n:] = sp.sigma * np.eye(m)

    if w0 is None:
        xi = np.zeros(n)
        zeta = sp.yref.copy()
        Sigma = sym(sp.Zref)
    else:
        xi, zeta, Sigma = w0
        xi, zeta, Sigma = xi.copy(), zeta.copy(), sym(Sigma)

    res = subproblem_kkt_residual(sp, (xi, zeta, Sigma))
    best = (xi.copy(), zeta.copy(), Sigma.copy())
    best_res = res
    eta = 1.0
    since_improve = 0

    for it in range(max_iters):
        if res <= tol:
            return (xi, zeta, Sigma), res, it, True
        rhs = np.concatenate([
            -sp.gradf + sp.apply_A_adjoint(Sigma),
            sp.sigma * sp.yref - sp.gval,
        ])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        xi = sol[:n]
        if nu is not None:
            nrm = np.linalg.norm(xi)
            if nrm > nu:
                xi = xi * (nu / nrm)
        zeta = sol[n:]
        target = proj_psd(sp.Zref - (sp.Xval + sp.apply_A(xi)) / sp.sigma)
        Sigma = sym((1.0 - eta) * Sigma + eta * target)
        res = subproblem_kkt_residual(sp, (xi, zeta, Sigma))
        if res < best_res * (1.0 - 1e-14):
            best = (xi.copy(), zeta.copy(), Sigma.copy())
            best_res = res
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= 20:
                eta *= 0.5
                xi, zeta, Sigma = best[0].copy(), best[1].copy(), best[2].copy()
                res = best_res
                since_improve = 0
                if eta < 1e-6:
                    break
    return best, best_res, max_iters, res <= tol or best_res <= tol


def solve(sp, cfg=None):
    """Solve the subproblem: semismooth Newton from (0, y, Z), splitting fallback.

    Never raises on numerical failure; a 'failed' status carries the best
    point found and its residual.  When the trust ball radius nu is present
    and the Newton solution violates it, the subproblem is re-solved with the
    xi-step projected onto the ball (nu_active set on the result).
    """
    if cfg is None:
        cfg = SubproblemConfig()
    w0 = (np.zeros(sp.n), sp.yref.copy(), sym(sp.Zref))

    w, res, iters, ok = _solve_newton(sp, cfg, w0)
    status = "converged" if ok else None
    split_iters = 0
    nu_active = False

    if not ok:
        w_s, res_s, split_iters, ok_s = solve_splitting(
            sp, tol=cfg.tol, max_iters=cfg.split_max_iters, nu=sp.nu
        )
        if ok_s or res_s < res:
            w, res = w_s, res_s
        status = "fallback_used" if ok_s else "failed"

    if sp.nu is not None and status != "failed":
        if np.linalg.norm(w[0]) > sp.nu * (1.0 + 1e-12):
            w, res, split_iters, ok_b = solve_splitting(
                sp, tol=cfg.tol, max_iters=cfg.split_max_iters, nu=sp.nu
            )
            nu_active = True
            status = "fallback_used" if ok_b else "failed"

    xi, zeta, Sigma = w
    return SubproblemSolution(
        xi=xi, zeta=zeta, Sigma=sym(Sigma),
        kkt_res=res, newton_iters=iters, status=status,
        split_iters=split_iters, nu_active=nu_active,
    )
