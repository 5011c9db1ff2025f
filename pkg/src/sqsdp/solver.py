"""Outer loop of the stabilized sequential quadratic SDP method.

Per iteration: evaluate the KKT residual sigma_k = sigma(v_k) (termination
measure and stabilization parameter in one), freeze the Hessian H_k, solve
the stabilized subproblem, and step v_{k+1} = (x_k + xi, zeta, Sigma).  This
is the pure local method: no line search, no merit function, no multiplier
safeguards.  Divergence from poor starting points is expected and reported,
not patched.

Rate instrumentation records per-iteration errors against a known reference
point when one is supplied and classifies the tail behaviour as quadratic,
superlinear, linear, or none.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import model, subqp, symmat
from .model import PrimalDualPoint


@dataclass(frozen=True)
class SolverConfig:
    tol_sigma: float = 1e-10
    max_iters: int = 50
    hessian_mode: str = "exact"       # exact | perturbed | fd
    perturb_coeff: float = 0.0        # perturbed mode adds coeff * sigma^power * I
    perturb_power: float = 1.0
    nu: Optional[float] = None
    sub_tol_floor: float = 1e-12
    sub_tol_coeff: float = 1e-4
    newton_max_iters: int = 50
    split_max_iters: int = 20000
    convexify: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.tol_sigma <= 0:
            raise ValueError("tol_sigma must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.hessian_mode not in ("exact", "perturbed", "fd"):
            raise ValueError(f"unknown hessian_mode {self.hessian_mode!r}")

    def subproblem_config(self, sigma):
        return subqp.SubproblemConfig(
            tol=max(self.sub_tol_floor, self.sub_tol_coeff * sigma * sigma),
            newton_max_iters=self.newton_max_iters,
            split_max_iters=self.split_max_iters,
            convexify=self.convexify,
        )


@dataclass
class IterationRecord:
    k: int
    sigma: float
    err: Optional[float]          # sum-norm distance to the reference point, when known
    part_sizes: tuple             # (|alpha|, |beta|, |gamma|) of X(x_k) - Z_k
    delta_norm: Optional[float] = None
    sub_iters: Optional[int] = None
    sub_residual: Optional[float] = None
    sub_status: Optional[str] = None
    v: Optional[PrimalDualPoint] = None
    solution: Optional[subqp.SubproblemSolution] = None
    hessian_shift: float = 0.0


@dataclass
class RateSummary:
    classification: str           # quadratic | superlinear | linear | none | insufficient_data
    linear_ratios: list
    quadratic_ratios: list
    n_window: int
    source: str = "error"         # error | sigma_proxy

    @property
    def quad_spread(self):
        q = [r for r in self.quadratic_ratios if r > 0]
        if len(q) < 2:
            return None
        return max(q) / min(q)


@dataclass
class SolveReport:
    status: str                   # kkt_reached | max_iters | subproblem_failure
    v: PrimalDualPoint
    history: list
    rate: Optional[RateSummary] = None

    @property
    def iterations(self):
        return self.history[-1].k

    @property
    def sigma_final(self):
        return self.history[-1].sigma


def hessian(prob, v, cfg, sigma=None):
    """Hessian strategy for the subproblem.

    exact      -- the Lagrangian Hessian itself;
    perturbed  -- exact plus coeff * sigma(v)^power * I, used to realize
                  approximations that converge to the true Hessian at
                  controlled speed;
    fd         -- central differences of the Lagrangian gradient.
    """
    if cfg.hessian_mode == "exact":
        return model.hess_lagrangian(prob, v)
    if cfg.hessian_mode == "perturbed":
        H = model.hess_lagrangian(prob, v)
        if cfg.perturb_coeff:
            if sigma is None:
                sigma = model.kkt_residual(prob, v)
            H = H + cfg.perturb_coeff * sigma**cfg.perturb_power * np.eye(prob.n)
        return H
    grad = lambda x: model.grad_lagrangian(prob, PrimalDualPoint(x, v.y, v.Z))
    return symmat.sym(model._fd_jacobian(grad, np.array(v.x), (prob.n,)))


def _partition_sizes(prob, v):
    M = prob.Xmat(v.x) - v.Z
    dec = symmat.eig(M)
    part = symmat.partition(dec, symmat.default_tol(M))
    return part.sizes


def run(prob, v0, cfg=None, vstar=None):
    """Run the stabilized SQSDP iteration from v0.

    Terminates when sigma(v_k) <= tol_sigma, after max_iters subproblem
    solves, or on subproblem failure (reported in the status, never raised).
    When vstar is given, per-iteration distances feed the rate summary.
    """
    if cfg is None:
        cfg = SolverConfig()
    v = v0
    sigma = model.kkt_residual(prob, v)
    history = []
    status = None

    for k in range(cfg.max_iters + 1):
        rec = IterationRecord(
            k=k,
            sigma=sigma,
            err=model.distance(v, vstar) if vstar is not None else None,
            part_sizes=_partition_sizes(prob, v),
            v=v,
        )
        history.append(rec)
        if sigma <= cfg.tol_sigma or sigma == 0.0:
            status = "kkt_reached"
            break
        if k == cfg.max_iters:
            status = "max_iters"
            break

        H = hessian(prob, v, cfg, sigma=sigma)
        sp = subqp.build(prob, v, H, sigma, nu=cfg.nu)
        sol = subqp.solve(sp, cfg.subproblem_config(sigma))
        rec.solution = sol
        rec.sub_iters = sol.newton_iters if sol.status == "converged" else sol.split_iters
        rec.sub_residual = sol.kkt_res
        rec.sub_status = sol.status
        if sol.status == "failed":
            status = "subproblem_failure"
            break
        rec.delta_norm = float(
            np.linalg.norm(sol.xi)
            + np.linalg.norm(sol.zeta - v.y)
            + np.linalg.norm(sol.Sigma - v.Z, "fro")
        )
        v = PrimalDualPoint(x=v.x + sol.xi, y=sol.zeta, Z=sol.Sigma)
        sigma = model.kkt_residual(prob, v)

    report = SolveReport(status=status, v=v, history=history)
    report.rate = rate_estimate(history)
    return report


ERR_WINDOW = (1e-11, 1e-1)


def classify_rate(errors, window=ERR_WINDOW, min_records=4):
    """Classify the convergence rate of a positive error sequence.

    Only records inside the window are used (below it, ratios are dominated
    by roundoff).  Quadratic: the ratios e_{k+1}/e_k^2 vary by at most 100x
    and the q-linear ratios drop by at least 10x per step at the tail.
    Superlinear: q-linear ratios decrease monotonically and end below 1e-2.
    Linear: q-linear ratios bounded below one.  Otherwise none.
    """
    lo, hi = window
    errors = [float(e) for e in errors]
    in_window = [lo <= e <= hi for e in errors]
    n_window = sum(in_window)
    lin, quad = [], []
    for i in range(len(errors) - 1):
        if in_window[i] and in_window[i + 1]:
            lin.append(errors[i + 1] / errors[i])
            quad.append(errors[i + 1] / errors[i] ** 2)
    if n_window < min_records or len(lin) < 2:
        return RateSummary("insufficient_data", lin, quad, n_window)

    quad_stable = max(quad) / min(quad) <= 100.0 if min(quad) > 0 else False
    tail_steps = [lin[i + 1] / lin[i] for i in range(len(lin) - 1)][-2:]
    tail_drops = all(s <= 0.1 for s in tail_steps)
    if quad_stable and tail_drops:
        cls = "quadratic"
    elif all(lin[i + 1] < lin[i] for i in range(len(lin) - 1)) and lin[-1] < 1e-2:
        cls = "superlinear"
    elif max(lin) < 1.0:
        cls = "linear"
    else:
        cls = "none"
    return RateSummary(cls, lin, quad, n_window)


def rate_estimate(history):
    """Rate summary from a solve history.

    Uses the recorded distances to the reference point when available; falls
    back to the sigma values as a proxy otherwise (justified by the two-sided
    local equivalence of sigma and the distance to the KKT point).
    """
    errors = [rec.err for rec in history]
    if all(e is not None for e in errors) and errors:
        return classify_rate(errors)
    summary = classify_rate([rec.sigma for rec in history])
    summary.source = "sigma_proxy"
    return summary


@dataclass
class PooledRateCheck:
    """Quadratic-convergence evidence pooled across several error sequences.

    quad_ok: the ratios e_{k+1}/e_k^2 (both endpoints inside the window) vary
    by at most `spread_limit` across all sequences;
    tail_ok: in every sequence the last ratio e_{k+1}/e_k with e_k inside the
    window sits below `tail_limit`.
    """

    quad_ratios: list
    tail_ratios: list
    spread: Optional[float]
    quad_ok: bool
    tail_ok: bool

    @property
    def ok(self):
        return self.quad_ok and self.tail_ok


def pooled_rate_check(error_sequences, window=(1e-10, 1e-2),
                      spread_limit=100.0, tail_limit=1e-2):
    """Direct windowed ratio checks over one or more runs of the same problem."""
    lo, hi = window
    quad = []
    tails = []
    for errs in error_sequences:
        errs = [float(e) for e in errs]
        pairs = [(errs[i], errs[i + 1]) for i in range(len(errs) - 1)
                 if lo <= errs[i] <= hi]
        if not pairs:
            continue
        ek, ek1 = pairs[-1]
        tails.append(ek1 / ek)
        for a, b in pairs:
            if lo <= b <= hi:
                quad.append(b / (a * a))
    spread = max(quad) / min(quad) if len(quad) >= 2 and min(quad) > 0 else None
    quad_ok = spread is None or spread <= spread_limit
    tail_ok = bool(tails) and all(t < tail_limit for t in tails)
    return PooledRateCheck(quad_ratios=quad, tail_ratios=tails,
                           spread=spread, quad_ok=quad_ok, tail_ok=tail_ok)
