"""Numerical probes of the structural hypotheses at computed or stored solutions.

These estimate, never certify: the two-sided error-bound constants relating
the KKT residual to the distance from a reference point, the sign spectrum of
X(x*) - Z* (whose zero block signals failure of strict complementarity), and
the minimum curvature of the Lagrangian over sampled critical-cone
directions.  All sampling is seeded and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model, symmat
from .model import PrimalDualPoint


def unit_perturbation(rng, n, m, d):
    """Random direction of sum-norm exactly one in the primal-dual product space."""
    while True:
        dx = rng.standard_normal(n)
        dy = rng.standard_normal(m)
        dZ = symmat.sym(rng.standard_normal((d, d)))
        s = np.linalg.norm(dx) + np.linalg.norm(dy) + np.linalg.norm(dZ, "fro")
        if s > 1e-12:
            return dx / s, dy / s, dZ / s


def perturb_point(vstar, radius, rng):
    """vstar plus a random direction scaled to sum-norm exactly radius."""
    dx, dy, dZ = unit_perturbation(rng, vstar.x.size, vstar.y.size, vstar.Z.shape[0])
    return PrimalDualPoint(
        x=vstar.x + radius * dx,
        y=vstar.y + radius * dy,
        Z=vstar.Z + radius * dZ,
    )


@dataclass
class RadiusStats:
    radius: float
    min_sigma_over_err: float
    max_sigma_over_err: float
    min_err_over_sigma: float
    max_err_over_sigma: float
    samples: int


@dataclass
class ProbeReport:
    problem_id: str
    radii: list = field(default_factory=list)
    error_bound: list = field(default_factory=list)   # RadiusStats per radius
    part_sizes: Optional[tuple] = None                # (|alpha|, |beta|, |gamma|)
    strict_complementarity: Optional[bool] = None
    sosc_min_curvature: Optional[float] = None
    sosc_accepted: Optional[int] = None
    notes: list = field(default_factory=list)


def error_bound_probe(prob, vstar, radii, samples_per_radius=200, seed=0):
    """Sample both ratios sigma(v)/||v - v*|| and its inverse on shells around v*.

    Bounded extremes across shrinking radii are evidence for the two-sided
    local equivalence of the KKT residual and the distance to the solution.
    Requires vstar to actually be a KKT point (residual <= 1e-10).
    """
    res0 = model.kkt_residual(prob, vstar)
    if res0 > 1e-10:
        raise ValueError(f"reference point has KKT residual {res0:.3e} > 1e-10")
    rng = np.random.default_rng(seed)
    out = []
    for radius in radii:
        ratios = np.empty(samples_per_radius)
        for i in range(samples_per_radius):
            v = perturb_point(vstar, radius, rng)
            sigma = model.kkt_residual(prob, v)
            ratios[i] = sigma / radius
        out.append(RadiusStats(
            radius=float(radius),
            min_sigma_over_err=float(ratios.min()),
            max_sigma_over_err=float(ratios.max()),
            min_err_over_sigma=float(1.0 / ratios.max()),
            max_err_over_sigma=float(1.0 / ratios.min()),
            samples=samples_per_radius,
        ))
    return out


def complementarity_spectrum(prob, v, tol=None):
    """Sign partition of X(x) - Z; strict complementarity means the zero block is empty."""
    M = prob.Xmat(v.x) - v.Z
    dec = symmat.eig(M)
    if tol is None:
        tol = symmat.default_tol(M)
    part = symmat.partition(dec, tol)
    return part, part.beta.size == 0


def _critical_cone_project(prob, vstar, d0, rounds=50, threshold=1e-8):
    """Push a direction toward the critical cone by alternating projections.

    Alternates the orthogonal projection onto the linear equalities
    {grad f^T d = 0, Jg^T d = 0} with a least-squares correction enforcing
    PSD-ness of A(d) restricted to the zero/negative eigenspace of X(x*).
    Returns the direction, or None if it collapses or the residuals stay
    above the acceptance thresholds.
    """
    x = vstar.x
    gradf = prob.grad_f(x)
    Jg = prob.jac_g(x)
    E = np.column_stack([gradf.reshape(-1, 1), Jg]) if prob.m else gradf.reshape(-1, 1)
    # orthogonal projector onto null(E^T)
    Q, R = np.linalg.qr(E)
    keep = np.abs(np.diag(R)) > 1e-12 if R.size else np.zeros(0, bool)
    Qr = Q[:, : len(keep)][:, keep]
    proj_lin = np.eye(prob.n) - Qr @ Qr.T

    X = prob.Xmat(x)
    dec = symmat.eig(X)
    part = symmat.partition(dec, symmat.default_tol(X))
    bg = np.concatenate([part.beta, part.gamma])
    A = prob.Amat(x)
    d = d0.copy()

    if bg.size:
        W = dec.vectors[:, bg]
        # least-squares map d -> svec(W^T A(d) W)
        t = symmat.svec_dim(bg.size)
        B = np.column_stack([symmat.svec(W.T @ A[j] @ W) for j in range(prob.n)])

    for _ in range(rounds):
        d = proj_lin @ d
        if bg.size:
            R_blk = symmat.sym(W.T @ np.tensordot(d, A, axes=1) @ W)
            R_pos = symmat.proj_psd(R_blk)
            rhs = symmat.svec(R_pos - R_blk)
            delta = np.linalg.lstsq(B, rhs, rcond=None)[0]
            d = d + delta
    nrm = np.linalg.norm(d)
    if nrm < 1e-6:
        return None
    d = d / nrm
    if abs(gradf @ d) > threshold:
        return None
    if prob.m and np.linalg.norm(Jg.T @ d) > threshold:
        return None
    if symmat.tangent_cone_residual(dec, part, np.tensordot(d, A, axes=1)) > threshold:
        return None
    return d


def sosc_probe(prob, vstar, num_dirs=64, seed=0):
    """Minimum sampled Lagrangian curvature over critical-cone directions.

    Samples unit directions, pushes each toward the critical cone, and
    evaluates <(hess_L + curvature_term) d, d> on the accepted ones.  A
    positive minimum is evidence (not proof) that the second-order sufficient
    condition holds.  Returns (min_curvature, accepted_count); min_curvature
    is None when no direction is accepted (indeterminate).
    """
    res0 = model.kkt_residual(prob, vstar)
    if res0 > 1e-10:
        raise ValueError(f"reference point has KKT residual {res0:.3e} > 1e-10")
    rng = np.random.default_rng(seed)
    Hfull = model.hess_lagrangian(prob, vstar) + model.curvature_term(prob, vstar.x, vstar.Z)
    best = None
    accepted = 0
    for _ in range(num_dirs):
        d0 = rng.standard_normal(prob.n)
        d0 /= np.linalg.norm(d0)
        d = _critical_cone_project(prob, vstar, d0)
        if d is None:
            continue
        accepted += 1
        curv = float(d @ Hfull @ d)
        best = curv if best is None else min(best, curv)
    return best, accepted


def perturbed_kkt_closure(prob, v, H, solution, sigma):
    """Residual of the perturbed KKT system induced by a subproblem solution.

    A subproblem KKT point makes (x, zeta, Sigma) an exact KKT point of the
    perturbed problem with parameter u = (H xi, Jg^T xi + sigma (zeta - y),
    A(xi) + sigma (Sigma - Z)), H being the Hessian the subproblem was built
    with; this evaluates that closure, which should sit at the subproblem
    solve tolerance.
    """
    xi, zeta, Sigma = solution.xi, solution.zeta, solution.Sigma
    r = H @ xi
    s = prob.jac_g(v.x).T @ xi + sigma * (zeta - v.y) if prob.m else np.zeros(0)
    T = np.tensordot(xi, prob.Amat(v.x), axes=1) + sigma * (Sigma - v.Z)
    shifted = PrimalDualPoint(x=v.x, y=zeta, Z=Sigma)
    return model.perturbed_kkt_residual(prob, shifted, (r, s, T))


def probe_report(spec, what="all", seed=0, radii=(1e-2, 1e-3, 1e-4), samples=200, num_dirs=64):
    """Assemble a ProbeReport for a registry/loaded problem (used by the CLI)."""
    prob = spec.to_problem()
    report = ProbeReport(problem_id=spec.id)
    wants = {"error-bound", "spectrum", "sosc"} if what == "all" else {what}

    if "error-bound" in wants:
        if spec.vstar is None:
            raise ValueError(f"{spec.id}: error-bound probe needs a stored reference point")
        report.radii = [float(r) for r in radii]
        report.error_bound = error_bound_probe(prob, spec.vstar, radii, samples, seed)
    if "spectrum" in wants:
        v = spec.vstar
        if v is None:
            raise ValueError(f"{spec.id}: spectrum probe needs a stored reference point")
        part, strict = complementarity_spectrum(prob, v)
        report.part_sizes = part.sizes
        report.strict_complementarity = strict
        if not strict:
            report.notes.append("zero eigenvalue block nonempty: strict complementarity fails")
    if "sosc" in wants:
        if spec.vstar is None:
            raise ValueError(f"{spec.id}: sosc probe needs a stored reference point")
        curv, accepted = sosc_probe(prob, spec.vstar, num_dirs=num_dirs, seed=seed)
        report.sosc_min_curvature = curv
        report.sosc_accepted = accepted
        if curv is None:
            report.notes.append("no direction passed the critical-cone filter: indeterminate")
    return report
