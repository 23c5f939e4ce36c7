"""Dense linear programming with a deterministic two-phase primal simplex.

The solver is self-contained (no external LP dependency) and aimed at the
small, dense problems produced by frontier models: up to a few thousand
rows, a handful to a few hundred columns.  Determinism is part of the
contract: identical input bits yield identical output bits, because every
pivot choice is resolved by a fixed rule (Dantzig pricing with
lowest-index tie break, switching to Bland's rule after a fixed number of
pivots to rule out cycling).

Two practical devices keep it robust and fast:

* rows and columns are equilibrated by power-of-two factors (lossless in
  binary floating point) before solving, so data mixing magnitudes from
  1e-2 to 1e7 does not destabilise the pivots;
* "tall" problems (many more rows than columns) are solved through their
  dual, whose tableau is small, and the primal solution is recovered from
  the dual multipliers.  The recovered solution is verified against the
  primal constraints and strong duality; on any doubt the solver falls
  back to the direct path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import LpInputError, SimplexError

LESS_EQUAL = "<="
GREATER_EQUAL = ">="
EQUAL = "="

NONNEGATIVE = "nonneg"
FREE = "free"

MAXIMIZE = "max"
MINIMIZE = "min"

# internal row coding
_LE, _GE, _EQ = -1, 1, 0


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class SimplexOptions:
    """Numerical knobs of the simplex.

    pivot_tol: entries smaller than this never become pivots.
    feasibility_tol: tolerance for constraint residuals (after row
        scaling) and for the phase-1 infeasibility test.
    bland_threshold: number of Dantzig pivots before switching to Bland's
        rule; 0 picks an automatic value from the problem size.
    max_iterations: hard safety cap; 0 picks an automatic value.
    dualize: "auto" solves tall problems through their dual, "never" and
        "always" force one path (mostly for testing).
    """

    pivot_tol: float = 1e-10
    feasibility_tol: float = 1e-9
    bland_threshold: int = 0
    max_iterations: int = 0
    scale: bool = True
    dualize: str = "auto"


class LpProblem:
    """A dense LP: optimize ``objective @ x`` under row constraints.

    Rows relate ``matrix[i] @ x`` to ``rhs[i]`` through ``relations[i]``
    (one of ``"<="``, ``">="``, ``"="``).  Each variable is either
    nonnegative (``"nonneg"``, the default) or sign-free (``"free"``).
    """

    __slots__ = ("sense", "objective", "matrix", "relations", "rhs", "bounds")

    def __init__(self, sense, objective, matrix, relations, rhs, bounds=None):
        if sense not in (MAXIMIZE, MINIMIZE):
            raise LpInputError(f"sense must be 'max' or 'min', got {sense!r}")
        self.sense = sense

        objective = _finite_vector(objective, "objective")
        k = objective.shape[0]
        if k == 0:
            raise LpInputError("problem needs at least one variable")

        matrix = np.array(matrix, dtype=float, copy=True)
        if matrix.size == 0:
            matrix = matrix.reshape(0, k)
        if matrix.ndim != 2:
            raise LpInputError("constraint matrix must be two-dimensional")
        if matrix.shape[1] != k:
            raise LpInputError(
                f"constraint rows have {matrix.shape[1]} coefficients, "
                f"objective has {k}"
            )
        if not np.isfinite(matrix).all():
            raise LpInputError("constraint matrix contains non-finite entries")
        m = matrix.shape[0]

        relations = np.array(list(relations), dtype="U2")
        if relations.shape != (m,):
            raise LpInputError("one relation per constraint row is required")
        bad = ~np.isin(relations, (LESS_EQUAL, GREATER_EQUAL, EQUAL))
        if bad.any():
            raise LpInputError(f"unknown relation {relations[bad][0]!r}")

        rhs = _finite_vector(rhs, "rhs")
        if rhs.shape != (m,):
            raise LpInputError("one right-hand side per constraint row is required")

        if bounds is None:
            bounds = np.full(k, NONNEGATIVE, dtype="U6")
        else:
            bounds = np.array(list(bounds), dtype="U6")
            if bounds.shape != (k,):
                raise LpInputError("one bound spec per variable is required")
            bad = ~np.isin(bounds, (NONNEGATIVE, FREE))
            if bad.any():
                raise LpInputError(f"unknown bound {bounds[bad][0]!r}")

        for arr in (objective, matrix, rhs, relations, bounds):
            arr.setflags(write=False)
        self.objective = objective
        self.matrix = matrix
        self.relations = relations
        self.rhs = rhs
        self.bounds = bounds

    @classmethod
    def from_rows(cls, sense, objective, rows, bounds=None):
        """Build from an iterable of ``(coefficients, relation, rhs)`` triples."""
        objective = _finite_vector(objective, "objective")
        k = objective.shape[0]
        coeffs, relations, rhs = [], [], []
        for row in rows:
            try:
                a, rel, b = row
            except (TypeError, ValueError) as exc:
                raise LpInputError(
                    "each constraint must be a (coefficients, relation, rhs) triple"
                ) from exc
            a = np.asarray(a, dtype=float)
            if a.shape != (k,):
                raise LpInputError(
                    f"constraint row has {a.size} coefficients, expected {k}"
                )
            coeffs.append(a)
            relations.append(rel)
            rhs.append(b)
        matrix = np.vstack(coeffs) if coeffs else np.zeros((0, k))
        return cls(sense, objective, matrix, relations, np.asarray(rhs, dtype=float), bounds)

    @property
    def n_variables(self) -> int:
        return self.objective.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LpSolution:
    """Solve outcome.

    ``objective_value`` and ``variable_values`` are set only when the
    status is OPTIMAL.  ``row_duals`` holds the constraint shadow prices
    d(objective)/d(rhs) in the orientation of the problem as given.
    """

    status: LpStatus
    objective_value: float | None = None
    variable_values: np.ndarray | None = None
    row_duals: np.ndarray | None = None
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve_lp(problem: LpProblem, options: SimplexOptions | None = None) -> LpSolution:
    """Solve a dense LP, deterministically.

    Returns a solution with status OPTIMAL, INFEASIBLE or UNBOUNDED.
    Malformed problems raise :class:`LpInputError` at construction time,
    never here; internal numerical failures raise :class:`SimplexError`.
    """
    opts = options if options is not None else SimplexOptions()
    m, k = problem.n_constraints, problem.n_variables
    if opts.dualize == "always" or (
        opts.dualize == "auto" and m >= 64 and m >= 8 * k
    ):
        solution = _solve_via_dual(problem, opts)
        if solution is not None:
            return solution
    return _solve_direct(
        problem.sense,
        problem.objective,
        problem.matrix,
        problem.relations,
        problem.rhs,
        problem.bounds,
        opts,
    )


# ---------------------------------------------------------------------------
# direct path
# ---------------------------------------------------------------------------


def _solve_direct(sense, c_orig, A_orig, relations, b_orig, bounds, opts) -> LpSolution:
    m, k = A_orig.shape
    fmax = 1.0 if sense == MAXIMIZE else -1.0
    rel = np.full(m, _LE, dtype=np.int8)
    rel[relations == GREATER_EQUAL] = _GE
    rel[relations == EQUAL] = _EQ
    free_mask = bounds == FREE

    A = np.array(A_orig, dtype=float)
    b = np.array(b_orig, dtype=float)
    cwork = fmax * np.asarray(c_orig, dtype=float)

    # power-of-two equilibration: exact in binary floating point, so it can
    # only help conditioning, never perturb the problem
    if opts.scale and m > 0:
        rscale = _pow2_scale(np.abs(A).max(axis=1))
        A *= rscale[:, None]
        b *= rscale
        cscale = _pow2_scale(np.abs(A).max(axis=0))
        A *= cscale
        cwork = cwork * cscale
    else:
        rscale = np.ones(m)
        cscale = np.ones(k)

    A_check, b_check, rel_check = A.copy(), b.copy(), rel.copy()

    # orient rows: make every rhs nonnegative, and turn ">= 0" rows into
    # "<= 0" so they start with a slack basis instead of an artificial
    flip_rows = ((rel == _GE) & (b <= 0.0)) | ((rel != _GE) & (b < 0.0))
    flip = np.where(flip_rows, -1.0, 1.0)
    if flip_rows.any():
        A[flip_rows] *= -1.0
        b[flip_rows] *= -1.0
        swap = flip_rows & (rel != _EQ)
        rel[swap] = -rel[swap]

    # split free variables x = x+ - x-
    free_idx = np.flatnonzero(free_mask)
    k_std = k + free_idx.size
    slack_rows = np.flatnonzero(rel != _EQ)
    art_rows = np.flatnonzero(rel != _LE)
    n_slack = slack_rows.size
    n_art = art_rows.size
    ncols = k_std + n_slack + n_art + 1

    T = np.zeros((m + 1, ncols))
    T[:m, :k] = A
    if free_idx.size:
        T[:m, k:k_std] = -A[:, free_idx]
    T[:m, -1] = b

    slack_cols = k_std + np.arange(n_slack)
    art_cols = k_std + n_slack + np.arange(n_art)
    T[slack_rows, slack_cols] = np.where(rel[slack_rows] == _LE, 1.0, -1.0)
    T[art_rows, art_cols] = 1.0

    # pristine standardized system, used to refresh the final basic
    # solution (tableau updates accumulate drift over many pivots)
    A_std0 = T[:m, :-1].copy()
    b_std0 = T[:m, -1].copy()

    basis = np.empty(m, dtype=np.intp)
    ident = np.empty(m, dtype=np.intp)  # initial identity column per row
    le_rows = rel == _LE
    basis[le_rows] = slack_cols[np.searchsorted(slack_rows, np.flatnonzero(le_rows))]
    basis[art_rows] = art_cols
    ident[le_rows] = basis[le_rows]
    ident[art_rows] = art_cols

    allowed = np.ones(ncols - 1, dtype=bool)
    allowed[art_cols] = False

    bland_after = opts.bland_threshold or (500 + 10 * (m + 1))
    max_iter = opts.max_iterations or (200000 + 50 * m)
    total_iters = 0
    row_ids = np.arange(m)

    if n_art:
        cvec = np.zeros(ncols - 1)
        cvec[art_cols] = -1.0
        _set_objective_row(T, basis, cvec)
        status, it = _iterate(
            T, basis, allowed, opts.pivot_tol, opts.feasibility_tol,
            bland_after, max_iter, phase=1,
        )
        total_iters += it
        if status != "optimal":  # pragma: no cover - phase 1 is always bounded
            raise SimplexError("phase 1 terminated abnormally")
        if T[-1, -1] < -opts.feasibility_tol:
            return LpSolution(LpStatus.INFEASIBLE, iterations=total_iters)

        in_art = np.isin(basis, art_cols)
        if in_art.any():
            keep = np.ones(T.shape[0] - 1, dtype=bool)
            for r in np.flatnonzero(in_art):
                # the artificial sits at a value <= feasibility_tol; snap it
                # to zero so the degenerate pivot cannot amplify the residue
                T[r, -1] = 0.0
                row = np.abs(T[r, : k_std + n_slack])
                j = int(np.argmax(row))
                if row[j] > opts.pivot_tol:
                    _pivot(T, r, j)
                    basis[r] = j
                else:
                    keep[r] = False  # redundant constraint
            if not keep.all():
                T = np.vstack([T[:-1][keep], T[-1:]])
                basis = basis[keep]
                ident = ident[keep]
                row_ids = row_ids[keep]

    mrows = T.shape[0] - 1
    cvec = np.zeros(ncols - 1)
    cvec[:k] = cwork
    if free_idx.size:
        cvec[k:k_std] = -cwork[free_idx]
    _set_objective_row(T, basis, cvec)
    status, it = _iterate(
        T, basis, allowed, opts.pivot_tol, opts.feasibility_tol,
        bland_after, max_iter, phase=2,
    )
    total_iters += it
    if status == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, iterations=total_iters)

    # refresh the basic solution and multipliers from the pristine data:
    # the optimal basis is combinatorial information and survives drift,
    # the numbers attached to it are recomputed exactly.  Should the
    # refreshed system be badly conditioned, the raw tableau values serve
    # as the fallback candidate.
    candidates = []
    if mrows:
        B = A_std0[row_ids][:, basis]
        try:
            fresh = _solve_refined(B, b_std0[row_ids])
            fresh_pi = _solve_refined(B.T, cvec[basis])
            if np.isfinite(fresh).all() and np.isfinite(fresh_pi).all():
                candidates.append((fresh, fresh_pi))
        except np.linalg.LinAlgError:
            pass
    candidates.append((T[:mrows, -1], T[-1, ident]))

    failure = SimplexError("basic solution lost feasibility")
    for values, pi in candidates:
        if (values < -opts.feasibility_tol).any():
            continue
        xstd = np.zeros(ncols - 1)
        xstd[basis] = np.maximum(values, 0.0)
        xs = xstd[:k].copy()
        if free_idx.size:
            xs[free_idx] -= xstd[k:k_std]
        try:
            _check_residuals(A_check, b_check, rel_check, xs, opts.feasibility_tol)
        except SimplexError as exc:
            failure = exc
            continue
        x = cscale * xs
        objective = float(np.dot(c_orig, x))
        duals = np.zeros(m)
        duals[row_ids] = fmax * flip[row_ids] * rscale[row_ids] * pi
        return LpSolution(LpStatus.OPTIMAL, objective, x, duals, total_iters)
    raise failure


def _solve_refined(B, rhs):
    """Solve ``B x = rhs`` with one step of iterative refinement.

    Near-degenerate optimal bases (routine when an LP is probed right at
    its feasibility boundary) can carry condition numbers around 1e9;
    the refinement step recovers the digits the first solve loses.
    """
    x = np.linalg.solve(B, rhs)
    x += np.linalg.solve(B, rhs - B @ x)
    return x


def _pow2_scale(maxabs):
    """Per-row/column scale factors rounded to exact powers of two."""
    scale = np.ones_like(maxabs)
    positive = maxabs > 0.0
    scale[positive] = np.exp2(-np.rint(np.log2(maxabs[positive])))
    return scale


def _set_objective_row(T, basis, cvec):
    nrows = T.shape[0] - 1
    T[-1, :] = cvec[basis] @ T[:nrows, :]
    T[-1, :-1] -= cvec


def _iterate(T, basis, allowed, pivot_tol, dual_tol, bland_after, max_iter, phase):
    # dual_tol guards the entering test: a reduced cost within roundoff of
    # zero must read as "optimal", not as an improving (and possibly
    # spuriously unbounded) direction
    nrows = T.shape[0] - 1
    iters = 0
    zrow = T[-1, :-1]
    while True:
        if iters < bland_after:
            vals = np.where(allowed, zrow, np.inf)
            j = int(np.argmin(vals))
            if vals[j] >= -dual_tol:
                return "optimal", iters
        else:
            cand = np.flatnonzero(allowed & (zrow < -dual_tol))
            if cand.size == 0:
                return "optimal", iters
            j = int(cand[0])

        col = T[:nrows, j]
        positive = col > pivot_tol
        if not positive.any():
            if phase == 1:  # pragma: no cover - phase 1 objective is bounded
                raise SimplexError("phase 1 detected an unbounded direction")
            return "unbounded", iters
        rows = np.flatnonzero(positive)
        ratios = np.maximum(T[rows, -1], 0.0) / col[rows]
        if iters < bland_after:
            r = rows[int(np.argmin(ratios))]
        else:
            best = ratios.min()
            tied = rows[ratios <= best]
            r = tied[int(np.argmin(basis[tied]))]

        _pivot(T, r, j)
        basis[r] = j
        iters += 1
        if iters > max_iter:
            raise SimplexError(f"simplex iteration limit {max_iter} exceeded")


def _pivot(T, r, j):
    T[r, :] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r, :])
    T[:, j] = 0.0
    T[r, j] = 1.0


def _check_residuals(A, b, rel, x, tol):
    if A.shape[0] == 0:
        return
    resid = A @ x - b
    viol = np.zeros_like(resid)
    le = rel == _LE
    ge = rel == _GE
    eq = rel == _EQ
    viol[le] = resid[le]
    viol[ge] = -resid[ge]
    viol[eq] = np.abs(resid[eq])
    worst = viol.max(initial=0.0)
    if worst > tol:
        raise SimplexError(
            f"optimal basis violates a scaled constraint by {worst:.3e} (> {tol:.1e})"
        )


# ---------------------------------------------------------------------------
# dual path for tall problems
# ---------------------------------------------------------------------------


def _solve_via_dual(problem: LpProblem, opts: SimplexOptions) -> LpSolution | None:
    """Solve a tall LP through its dual; None means "fall back to direct".

    For ``max c'x`` with rows oriented to ``A2 x <= b2`` (equalities kept)
    the dual is ``min b2'y`` with one row per primal variable:
    ``A2[:, j]' y >= c_j`` for nonnegative variables, ``= c_j`` for free
    ones; ``y_i`` is nonnegative for inequality rows and free for
    equalities.  The optimal ``x`` equals the dual's row shadow prices.
    """
    m, k = problem.n_constraints, problem.n_variables
    fmax = 1.0 if problem.sense == MAXIMIZE else -1.0
    cmax = fmax * problem.objective

    flip = np.where(problem.relations == GREATER_EQUAL, -1.0, 1.0)
    A2 = problem.matrix * flip[:, None]
    b2 = problem.rhs * flip

    rel_d = np.where(problem.bounds == NONNEGATIVE, GREATER_EQUAL, EQUAL)
    bounds_d = np.where(problem.relations == EQUAL, FREE, NONNEGATIVE)

    try:
        dual = _solve_direct(
            MINIMIZE, b2, np.ascontiguousarray(A2.T), rel_d, cmax, bounds_d, opts
        )
    except SimplexError:
        return None
    if dual.status is LpStatus.UNBOUNDED:
        # unbounded dual certifies an infeasible primal
        return LpSolution(LpStatus.INFEASIBLE, iterations=dual.iterations)
    if dual.status is LpStatus.INFEASIBLE:
        return None  # primal is unbounded or infeasible; let the direct path tell

    x = dual.row_duals.copy()
    nonneg = problem.bounds == NONNEGATIVE
    low = x[nonneg].min(initial=0.0)
    if low < -opts.feasibility_tol:
        return None
    x[nonneg] = np.maximum(x[nonneg], 0.0)

    # verify the recovered point: primal feasibility after row scaling, and
    # strong duality against the dual objective
    if problem.matrix.size:
        rscale = _pow2_scale(np.abs(problem.matrix).max(axis=1))
    else:
        rscale = np.ones(m)
    rel = np.full(m, _LE, dtype=np.int8)
    rel[problem.relations == GREATER_EQUAL] = _GE
    rel[problem.relations == EQUAL] = _EQ
    try:
        _check_residuals(
            problem.matrix * rscale[:, None],
            problem.rhs * rscale,
            rel,
            x,
            opts.feasibility_tol,
        )
    except SimplexError:
        return None
    objective = float(np.dot(problem.objective, x))
    gap = abs(fmax * objective - dual.objective_value)
    if gap > 1e-7 * max(1.0, abs(dual.objective_value)):
        return None

    duals = fmax * flip * dual.variable_values
    return LpSolution(LpStatus.OPTIMAL, objective, x, duals, dual.iterations)


def _finite_vector(values, label):
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    if not np.isfinite(arr).all():
        raise LpInputError(f"{label} contains non-finite entries")
    return arr
