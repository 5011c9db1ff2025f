"""Built-in NSDP test problems and a declarative polynomial problem format.

Problems are polynomial: the objective has degree <= 4, each equality
constraint degree <= 2, and each entry of the constraint matrix degree <= 2,
so all derivatives are closed-form and evaluation is exact for integer
coefficients at integer points.  Reference KKT points shipped with a problem
are re-verified every time the problem is materialized; stored truths are
never trusted silently.

File format: TOML (key-value with nested tables).  Polynomial tables map a
space-separated exponent tuple to a coefficient, e.g. ``"2 0" = 0.5`` for
0.5*x1^2 in two variables.  Matrix entry tables are keyed ``"i j"``
(1-based); each unordered entry may be defined once and is mirrored.  See the
README for the full grammar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import model, symmat
from .model import NsdpProblem, PrimalDualPoint

FORMAT_VERSION = 1
MAX_DEGREE_OBJECTIVE = 4
MAX_DEGREE_CONSTRAINT = 2
MAX_DEGREE_MATRIX = 2
KNOWN_TAGS = ("srcq", "sosc", "strict_complementarity", "beta_nonempty")


class ProblemFormatError(ValueError):
    """Problem file violates the format (syntax, dims, degrees, symmetry)."""


class ReferenceVerificationError(ValueError):
    """Stored reference point fails its KKT-residual check."""


@dataclass(frozen=True)
class Polynomial:
    """Multivariate polynomial as a map from exponent tuples to coefficients."""

    n: int
    terms: tuple  # ((exponents, coeff), ...)

    @staticmethod
    def from_dict(n, table):
        items = []
        for expo, coeff in sorted(table.items()):
            expo = tuple(int(e) for e in expo)
            if len(expo) != n or any(e < 0 for e in expo):
                raise ValueError(f"bad exponent tuple {expo} for n={n}")
            if coeff != 0.0:
                items.append((expo, float(coeff)))
        return Polynomial(n=n, terms=tuple(items))

    @property
    def degree(self):
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, x):
        total = 0.0
        for expo, coeff in self.terms:
            val = coeff
            for xj, ej in zip(x, expo):
                if ej:
                    val *= xj**ej
            total += val
        return total

    def diff(self, j):
        table = {}
        for expo, coeff in self.terms:
            if expo[j] == 0:
                continue
            new = list(expo)
            new[j] -= 1
            key = tuple(new)
            table[key] = table.get(key, 0.0) + coeff * expo[j]
        return Polynomial.from_dict(self.n, table)

    def grad(self, x):
        return np.array([self.diff(j)(x) for j in range(self.n)])

    def hess(self, x):
        H = np.zeros((self.n, self.n))
        for i in range(self.n):
            di = self.diff(i)
            for j in range(i, self.n):
                H[i, j] = H[j, i] = di.diff(j)(x)
        return H


@dataclass(frozen=True)
class ProblemSpec:
    """A polynomial NSDP instance plus optional verified reference point and tags."""

    id: str
    n: int
    m: int
    d: int
    objective: Polynomial
    constraints: tuple  # of Polynomial, length m
    entries: dict  # (i, j) with i <= j -> Polynomial, absent means zero
    vstar: Optional[PrimalDualPoint] = None
    vstar_tol: float = 1e-10
    tags: frozenset = frozenset()
    spectrum: Optional[tuple] = None  # declared (|alpha|, |beta|, |gamma|) at vstar
    basin_radius: float = 1e-2

    def __post_init__(self):
        if self.objective.degree > MAX_DEGREE_OBJECTIVE:
            raise ProblemFormatError(
                f"{self.id}: objective degree {self.objective.degree} exceeds {MAX_DEGREE_OBJECTIVE}"
            )
        for i, p in enumerate(self.constraints):
            if p.degree > MAX_DEGREE_CONSTRAINT:
                raise ProblemFormatError(
                    f"{self.id}: constraint {i + 1} degree {p.degree} exceeds {MAX_DEGREE_CONSTRAINT}"
                )
        for (i, j), p in self.entries.items():
            if i > j:
                raise ProblemFormatError(f"{self.id}: matrix entry ({i},{j}) not upper-triangular")
            if p.degree > MAX_DEGREE_MATRIX:
                raise ProblemFormatError(
                    f"{self.id}: matrix entry ({i + 1},{j + 1}) degree {p.degree} exceeds {MAX_DEGREE_MATRIX}"
                )

    def to_problem(self):
        """Materialize the evaluation contract with closed-form derivatives."""
        n, m, d = self.n, self.m, self.d
        objective = self.objective
        constraints = self.constraints
        entries = dict(self.entries)
        # precompute differentiated entry polynomials
        entry_grads = {key: [p.diff(k) for k in range(n)] for key, p in entries.items()}

        def f(x):
            return objective(x)

        def grad_f(x):
            return objective.grad(x)

        def hess_f(x):
            return objective.hess(x)

        def g(x):
            return np.array([p(x) for p in constraints])

        def jac_g(x):
            if not m:
                return np.zeros((n, 0))
            return np.column_stack([p.grad(x) for p in constraints])

        def hess_g(x, y):
            H = np.zeros((n, n))
            for yi, p in zip(y, constraints):
                if yi:
                    H += yi * p.hess(x)
            return H

        def Xmat(x):
            X = np.zeros((d, d))
            for (i, j), p in entries.items():
                X[i, j] = X[j, i] = p(x)
            return X

        def Amat(x):
            A = np.zeros((n, d, d))
            for (i, j), grads in entry_grads.items():
                for k in range(n):
                    val = grads[k](x)
                    A[k, i, j] = A[k, j, i] = val
            return A

        def hess_X_contract(x, Z):
            H = np.zeros((n, n))
            for (i, j), p in entries.items():
                w = Z[i, j] if i == j else 2.0 * Z[i, j]
                if w:
                    H += w * p.hess(x)
            return H

        return NsdpProblem(
            n=n, m=m, d=d,
            f=f, grad_f=grad_f, hess_f=hess_f,
            g=g, jac_g=jac_g, hess_g=hess_g,
            Xmat=Xmat, Amat=Amat, hess_X_contract=hess_X_contract,
        )

    def verify_reference(self):
        """Recompute the KKT residual of the stored reference point.

        Raises ReferenceVerificationError when it exceeds the stated tolerance.
        Returns the residual (0.0 when no reference is stored).
        """
        if self.vstar is None:
            return 0.0
        res = model.kkt_residual(self.to_problem(), self.vstar)
        if res > self.vstar_tol:
            raise ReferenceVerificationError(
                f"{self.id}: reference point has KKT residual {res:.3e} "
                f"> tolerance {self.vstar_tol:.3e}"
            )
        return res


def _poly(n, table):
    return Polynomial.from_dict(n, table)


def _build_registry():
    specs = []

    # scalar-degenerate: min x^2 s.t. x >= 0 (1x1 cone).  The minimizer sits on
    # the boundary with a zero multiplier, so the zero-eigenvalue block is
    # nonempty (strict complementarity fails) while SRCQ and SOSC hold.
    specs.append(ProblemSpec(
        id="scalar-degenerate",
        n=1, m=0, d=1,
        objective=_poly(1, {(2,): 1.0}),
        constraints=(),
        entries={(0, 0): _poly(1, {(1,): 1.0})},
        vstar=PrimalDualPoint(x=[0.0], y=[], Z=[[0.0]]),
        tags=frozenset({"srcq", "sosc", "beta_nonempty"}),
        spectrum=(0, 1, 0),
        basin_radius=5e-2,
    ))

    # nondegenerate-2x2: min x1 + ||x||^2/2 s.t. x1 + x2 = 1, diag(x) >= 0.
    # Constraint nondegeneracy holds, but the optimum lands exactly on the
    # boundary x1 = 0 with a vanishing multiplier, leaving a zero eigenvalue
    # in X* - Z*.  v* = ((0, 1), 1, 0).
    specs.append(ProblemSpec(
        id="nondegenerate-2x2",
        n=2, m=1, d=2,
        objective=_poly(2, {(1, 0): 1.0, (2, 0): 0.5, (0, 2): 0.5}),
        constraints=(_poly(2, {(1, 0): 1.0, (0, 1): 1.0, (0, 0): -1.0}),),
        entries={
            (0, 0): _poly(2, {(1, 0): 1.0}),
            (1, 1): _poly(2, {(0, 1): 1.0}),
        },
        vstar=PrimalDualPoint(x=[0.0, 1.0], y=[1.0], Z=np.zeros((2, 2))),
        tags=frozenset({"srcq", "sosc", "beta_nonempty"}),
        spectrum=(1, 1, 0),
        basin_radius=5e-2,
    ))

    # beta-2x2: min (x1-1)^2/2 + x2^2/2 with the cone constraint expressed in
    # a rotated basis, X = [[x1+x2, x1-x2], [x1-x2, x1+x2]]/2 (eigenvalues x1
    # and x2).  At v* = ((1, 0), 0) the constraint matrix and the multiplier
    # are both singular and share the zero eigenvector.
    specs.append(ProblemSpec(
        id="beta-2x2",
        n=2, m=0, d=2,
        objective=_poly(2, {(0, 0): 0.5, (1, 0): -1.0, (2, 0): 0.5, (0, 2): 0.5}),
        constraints=(),
        entries={
            (0, 0): _poly(2, {(1, 0): 0.5, (0, 1): 0.5}),
            (0, 1): _poly(2, {(1, 0): 0.5, (0, 1): -0.5}),
            (1, 1): _poly(2, {(1, 0): 0.5, (0, 1): 0.5}),
        },
        vstar=PrimalDualPoint(x=[1.0, 0.0], y=[], Z=np.zeros((2, 2))),
        tags=frozenset({"srcq", "sosc", "beta_nonempty"}),
        spectrum=(1, 1, 0),
        basin_radius=5e-2,
    ))

    # affine-qsdp: convex quadratic objective, affine equality, affine matrix
    # constraint; strictly complementary optimum with an active cone block.
    # v* = ((1, 0), 1, diag(0, 1)).
    specs.append(ProblemSpec(
        id="affine-qsdp",
        n=2, m=1, d=2,
        objective=_poly(2, {(2, 0): 0.5, (0, 2): 0.5, (0, 1): 2.0}),
        constraints=(_poly(2, {(1, 0): 1.0, (0, 1): 1.0, (0, 0): -1.0}),),
        entries={
            (0, 0): _poly(2, {(1, 0): 1.0}),
            (1, 1): _poly(2, {(0, 1): 1.0}),
        },
        vstar=PrimalDualPoint(x=[1.0, 0.0], y=[1.0], Z=np.diag([0.0, 1.0])),
        tags=frozenset({"srcq", "sosc", "strict_complementarity"}),
        spectrum=(1, 0, 1),
        basin_radius=5e-2,
    ))

    # curved-3x3: 3x3 constraint matrix with genuinely nonlinear entries
    # (products x1*x2 and x2*x3), exercising the second-derivative
    # contraction.  v* = ((1, 1, 0), 1, diag(0, 0, 2)), strictly complementary.
    specs.append(ProblemSpec(
        id="curved-3x3",
        n=3, m=1, d=3,
        objective=_poly(3, {
            (2, 0, 0): 0.5, (0, 2, 0): 0.5, (0, 0, 2): 0.5,
            (0, 0, 1): 3.0, (0, 0, 0): 1.0,
        }),
        constraints=(_poly(3, {(1, 0, 0): 1.0, (0, 1, 0): 1.0, (0, 0, 1): 1.0, (0, 0, 0): -2.0}),),
        entries={
            (0, 0): _poly(3, {(1, 0, 0): 1.0}),
            (0, 1): _poly(3, {(1, 1, 0): 1.0, (0, 0, 0): -1.0}),
            (1, 1): _poly(3, {(0, 1, 0): 1.0}),
            (1, 2): _poly(3, {(0, 1, 1): 1.0}),
            (2, 2): _poly(3, {(0, 0, 1): 1.0}),
        },
        vstar=PrimalDualPoint(x=[1.0, 1.0, 0.0], y=[1.0], Z=np.diag([0.0, 0.0, 2.0])),
        tags=frozenset({"srcq", "sosc", "strict_complementarity"}),
        spectrum=(2, 0, 1),
        basin_radius=5e-2,
    ))

    return specs


def registry():
    """Built-in problems, reference points re-verified on every call."""
    specs = _build_registry()
    for spec in specs:
        spec.verify_reference()
    return specs


def registry_ids():
    return [spec.id for spec in _build_registry()]


def get(problem_id):
    for spec in registry():
        if spec.id == problem_id:
            return spec
    raise KeyError(problem_id)


def _parse_poly_table(n, table, context, max_degree):
    parsed = {}
    for key, coeff in table.items():
        parts = key.split()
        if len(parts) != n:
            raise ProblemFormatError(
                f"{context}: exponent key '{key}' has {len(parts)} entries, expected {n}"
            )
        try:
            expo = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ProblemFormatError(f"{context}: bad exponent key '{key}'") from exc
        if any(e < 0 for e in expo):
            raise ProblemFormatError(f"{context}: negative exponent in '{key}'")
        if sum(expo) > max_degree:
            raise ProblemFormatError(
                f"{context}: monomial '{key}' has degree {sum(expo)} > {max_degree}"
            )
        if not isinstance(coeff, (int, float)) or isinstance(coeff, bool):
            raise ProblemFormatError(f"{context}: coefficient for '{key}' is not a number")
        if expo in parsed:
            raise ProblemFormatError(f"{context}: duplicate monomial '{key}'")
        parsed[expo] = float(coeff)
    return Polynomial.from_dict(n, parsed)


def loads(text, source="<string>"):
    """Parse a problem from TOML text.  See load()."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFormatError(f"{source}: TOML parse error: {exc}") from exc

    allowed = {"format_version", "id", "dims", "objective", "constraints",
               "matrix", "reference", "tags", "basin_radius"}
    unknown = set(doc) - allowed
    if unknown:
        raise ProblemFormatError(f"{source}: unknown top-level keys {sorted(unknown)}")

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ProblemFormatError(f"{source}: format_version must be {FORMAT_VERSION}, got {version!r}")
    pid = doc.get("id")
    if not isinstance(pid, str) or not pid:
        raise ProblemFormatError(f"{source}: 'id' must be a nonempty string")

    dims = doc.get("dims")
    if not isinstance(dims, dict):
        raise ProblemFormatError(f"{source}: missing [dims] table")
    try:
        n, m, d = int(dims["n"]), int(dims["m"]), int(dims["d"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"{source}: [dims] needs integer n, m, d") from exc
    if n < 1 or m < 0 or d < 1:
        raise ProblemFormatError(f"{source}: invalid dims n={n}, m={m}, d={d}")

    obj_table = doc.get("objective")
    if not isinstance(obj_table, dict):
        raise ProblemFormatError(f"{source}: missing [objective] table")
    objective = _parse_poly_table(n, obj_table, f"{source}:objective", MAX_DEGREE_OBJECTIVE)

    raw_constraints = doc.get("constraints", [])
    if not isinstance(raw_constraints, list):
        raise ProblemFormatError(f"{source}: 'constraints' must be an array of tables")
    if len(raw_constraints) != m:
        raise ProblemFormatError(
            f"{source}: got {len(raw_constraints)} constraint tables, dims say m={m}"
        )
    constraints = tuple(
        _parse_poly_table(n, tbl, f"{source}:constraints[{i + 1}]", MAX_DEGREE_CONSTRAINT)
        for i, tbl in enumerate(raw_constraints)
    )

    matrix = doc.get("matrix")
    if not isinstance(matrix, dict) or not matrix:
        raise ProblemFormatError(f"{source}: missing [matrix.\"i j\"] entry tables")
    entries = {}
    for key, tbl in matrix.items():
        parts = key.split()
        if len(parts) != 2:
            raise ProblemFormatError(f"{source}:matrix: entry key '{key}' must be 'i j'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ProblemFormatError(f"{source}:matrix: bad entry key '{key}'") from exc
        if not (1 <= i <= d and 1 <= j <= d):
            raise ProblemFormatError(f"{source}:matrix: entry ({i},{j}) outside 1..{d}")
        canonical = (min(i, j) - 1, max(i, j) - 1)
        if canonical in entries:
            raise ProblemFormatError(
                f"{source}:matrix: entry ({i},{j}) duplicates its mirror; "
                "each unordered entry may be defined once"
            )
        entries[canonical] = _parse_poly_table(
            n, tbl, f"{source}:matrix.'{key}'", MAX_DEGREE_MATRIX
        )

    vstar = None
    vstar_tol = 1e-10
    ref = doc.get("reference")
    if ref is not None:
        if not isinstance(ref, dict):
            raise ProblemFormatError(f"{source}: [reference] must be a table")
        try:
            x = np.array(ref["x"], dtype=float)
            y = np.array(ref.get("y", []), dtype=float)
            Z = np.array(ref["Z"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemFormatError(f"{source}: [reference] needs x, Z (and y when m>0)") from exc
        if x.shape != (n,) or y.shape != (m,) or Z.shape != (d, d):
            raise ProblemFormatError(
                f"{source}: reference shapes x{x.shape}, y{y.shape}, Z{Z.shape} "
                f"do not match dims ({n}, {m}, {d})"
            )
        vstar_tol = float(ref.get("tolerance", 1e-10))
        vstar = PrimalDualPoint(x=x, y=y, Z=Z)

    tags = frozenset()
    tag_table = doc.get("tags")
    if tag_table is not None:
        if not isinstance(tag_table, dict):
            raise ProblemFormatError(f"{source}: [tags] must be a table of booleans")
        bad = set(tag_table) - set(KNOWN_TAGS)
        if bad:
            raise ProblemFormatError(f"{source}: unknown tags {sorted(bad)}")
        tags = frozenset(t for t, on in tag_table.items() if on is True)

    spec = ProblemSpec(
        id=pid, n=n, m=m, d=d,
        objective=objective, constraints=constraints, entries=entries,
        vstar=vstar, vstar_tol=vstar_tol, tags=tags,
        basin_radius=float(doc.get("basin_radius", 1e-2)),
    )
    spec.verify_reference()
    return spec


def load(path):
    """Load and validate a problem file; reference points are verified immediately."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, source=str(path))


@dataclass(frozen=True)
class DerivativeCheckReport:
    passed: bool
    max_rel_err: float
    threshold: float
    worst_check: str
    worst_point: int
    per_check: dict

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"derivative check {status}: max rel err {self.max_rel_err:.3e} "
            f"(threshold {self.threshold:.1e}, worst '{self.worst_check}' at point {self.worst_point})"
        )


def derivative_check(spec, seed=0, points=10, threshold=1e-5):
    """Validate all supplied derivatives against central differences.

    Accepts a ProblemSpec or a bare NsdpProblem.  Probes `points` random
    points; failures are reported, not raised.
    """
    prob = spec.to_problem() if isinstance(spec, ProblemSpec) else spec
    rng = np.random.default_rng(seed)
    per_check = {}
    worst = (0.0, "none", -1)

    def record(name, point_idx, analytic, fd):
        nonlocal worst
        err = float(np.max(np.abs(np.asarray(fd) - np.asarray(analytic))
                           / (1.0 + np.abs(np.asarray(analytic)))))
        per_check[name] = max(per_check.get(name, 0.0), err)
        if err > worst[0]:
            worst = (err, name, point_idx)

    for p_idx in range(points):
        x = rng.standard_normal(prob.n)
        y = rng.standard_normal(prob.m)
        Z = symmat.sym(rng.standard_normal((prob.d, prob.d)))

        record("grad_f", p_idx, prob.grad_f(x),
               model._fd_jacobian(lambda t: np.array([prob.f(t)]), x, (1,)).ravel())
        record("hess_f", p_idx, prob.hess_f(x),
               symmat.sym(model._fd_jacobian(prob.grad_f, x, (prob.n,))))
        if prob.m:
            record("jac_g", p_idx, prob.jac_g(x),
                   model._fd_jacobian(prob.g, x, (prob.m,)).T)
            record("hess_g", p_idx, prob.hess_g(x, y),
                   symmat.sym(model._fd_jacobian(lambda t: prob.jac_g(t) @ y, x, (prob.n,))))
        record("Amat", p_idx, prob.Amat(x),
               model._fd_jacobian(prob.Xmat, x, (prob.d, prob.d)))
        record(
            "hess_X_contract", p_idx, prob.hess_X_contract(x, Z),
            symmat.sym(model._fd_jacobian(
                lambda t: np.tensordot(prob.Amat(t), Z, axes=([1, 2], [0, 1])),
                x, (prob.n,),
            )),
        )

    max_err, worst_check, worst_point = worst
    return DerivativeCheckReport(
        passed=max_err <= threshold,
        max_rel_err=max_err,
        threshold=threshold,
        worst_check=worst_check,
        worst_point=worst_point,
        per_check=per_check,
    )
