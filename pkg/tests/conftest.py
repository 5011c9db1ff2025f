"""Shared generators for subproblem and solver tests."""

import numpy as np
import pytest

from sqsdp import symmat
from sqsdp.subqp import StabilizedSubproblem


def random_subproblem(rng, n=None, m=None, d=None, sigma=None,
                      infeasible_linearization=None):
    """Random convex subproblem snapshot (H positive definite).

    `infeasible_linearization` makes the corresponding plain linearized
    subproblem infeasible by construction: 'cone' freezes the constraint
    matrix at a negative definite value with zero sensitivity, 'equality'
    overdetermines the linearized equality system.
    """
    n = int(rng.integers(1, 5)) if n is None else n
    m = int(rng.integers(0, 3)) if m is None else m
    d = int(rng.integers(1, 4)) if d is None else d
    if infeasible_linearization == "equality":
        m = n + 1
    B = rng.standard_normal((n, n))
    H = B @ B.T + 0.5 * np.eye(n)
    Aops = np.array([symmat.sym(rng.standard_normal((d, d))) for _ in range(n)])
    Xval = symmat.sym(rng.standard_normal((d, d)))
    if infeasible_linearization == "cone":
        Aops = np.zeros((n, d, d))
        C = rng.standard_normal((d, d))
        Xval = symmat.sym(-(C @ C.T) - np.eye(d))  # negative definite
    return StabilizedSubproblem(
        n=n, m=m, d=d,
        gradf=rng.standard_normal(n),
        H=H,
        gval=rng.standard_normal(m),
        Jg=rng.standard_normal((n, m)),
        Xval=Xval,
        Aops=Aops,
        sigma=float(rng.uniform(0.3, 1.5)) if sigma is None else float(sigma),
        yref=rng.standard_normal(m),
        Zref=symmat.sym(rng.standard_normal((d, d))),
    )


@pytest.fixture
def rand_sp():
    return random_subproblem
