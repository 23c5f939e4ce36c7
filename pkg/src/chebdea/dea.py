"""Chebyshev-distance DEA scores and the classical multiplier models.

Every decision making unit (DMU) is scored by how far its data can move,
in the Chebyshev (max-norm) sense, before its efficiency classification
changes.  Scores live in [0, 2]: below 1 the unit is inefficient (the
score is the smallest uniform data variation that would make it
efficient), at or above 1 it is efficient (the largest variation that
preserves efficiency).  Efficient units therefore receive distinct
scores, unlike the classical CCR/BCC models which pin them all at 1.

Two evaluation routes are provided: the linear reformulation (one LP per
unit, the practical default) and the exact nonlinear program solved by
bisection over the perturbation radius, which is possible because for a
fixed radius the constraint system is linear and its feasibility only
shrinks as the radius grows.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .lp import (
    EQUAL,
    FREE,
    GREATER_EQUAL,
    LESS_EQUAL,
    NONNEGATIVE,
    LpProblem,
    LpStatus,
    SimplexOptions,
    solve_lp,
)
from .exceptions import SimplexError

EFFICIENT = "efficient"
INEFFICIENT = "inefficient"

#: always-feasible / always-infeasible caps of the perturbation radius
DELTA_MIN = -0.5
DELTA_MAX = 0.5


class ReturnsToScale(enum.Enum):
    """Frontier technology: variable or constant returns to scale.

    VRS keeps the free intercept variable in the multiplier problems;
    CRS removes it (fixes it to zero).
    """

    VRS = "vrs"
    CRS = "crs"


class Panel:
    """Immutable benchmark sample: inputs X (n x r) and outputs Y (n x s).

    All entries must be finite and nonnegative; zero rows and columns are
    legal (the Chebyshev model tolerates them, the classical ones do not).
    """

    __slots__ = ("dmu_ids", "X", "Y")

    def __init__(self, dmu_ids, X, Y):
        X = np.array(X, dtype=float)
        Y = np.array(Y, dtype=float)
        if X.ndim != 2 or Y.ndim != 2:
            raise DomainError("X and Y must be two-dimensional arrays")
        n = X.shape[0]
        if n == 0 or X.shape[1] == 0 or Y.shape[1] == 0:
            raise DomainError("panel needs at least one DMU, one input and one output")
        if Y.shape[0] != n:
            raise DomainError("X and Y must have one row per DMU")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise DomainError("panel data must be finite")
        if (X < 0).any() or (Y < 0).any():
            raise DomainError("panel data must be nonnegative")
        dmu_ids = list(dmu_ids)
        if len(dmu_ids) != n:
            raise DomainError("one identifier per DMU is required")
        X.setflags(write=False)
        Y.setflags(write=False)
        self.dmu_ids = tuple(dmu_ids)
        self.X = X
        self.Y = Y

    @property
    def n_dmus(self) -> int:
        return self.X.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.X.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.Y.shape[1]

    def subset(self, indices) -> "Panel":
        """Sub-panel of the given DMU indices, preserving their order."""
        indices = list(indices)
        ids = [self.dmu_ids[j] for j in indices]
        return Panel(ids, self.X[indices], self.Y[indices])


@dataclass(frozen=True)
class EfficiencyScore:
    """Score of one DMU: ``score = 1 + 2 * delta`` with delta in [-0.5, 0.5]."""

    dmu_id: object
    delta: float
    score: float
    classification: str

    @classmethod
    def from_delta(cls, dmu_id, delta: float) -> "EfficiencyScore":
        delta = min(DELTA_MAX, max(DELTA_MIN, float(delta)))
        score = 1.0 + 2.0 * delta
        label = INEFFICIENT if score < 1.0 else EFFICIENT
        return cls(dmu_id, delta, score, label)


def _check_index(panel: Panel, i: int) -> int:
    i = int(i)
    if not 0 <= i < panel.n_dmus:
        raise DomainError(f"DMU index {i} out of range [0, {panel.n_dmus})")
    return i


def build_chebyshev_lp(panel: Panel, i: int, rts: ReturnsToScale) -> LpProblem:
    """LP of the linearized Chebyshev model for DMU ``i``.

    Variables, in order: the radius delta (free), input weights (r,
    nonnegative), output weights (s, nonnegative), and under VRS the free
    intercept.  Constraints: the unit's weighted output must reach
    ``1 + 2*delta``, its weighted input must stay within ``1 - 2*delta``,
    and no peer may show positive weighted net output; ``2 + (n - 1)``
    rows in total.
    """
    i = _check_index(panel, i)
    X, Y = panel.X, panel.Y
    n, r, s = panel.n_dmus, panel.n_inputs, panel.n_outputs
    vrs = rts is ReturnsToScale.VRS
    k = 1 + r + s + (1 if vrs else 0)
    m = n + 1

    A = np.zeros((m, k))
    relations = np.empty(m, dtype="U2")
    rhs = np.zeros(m)

    # output adequacy of the unit itself
    A[0, 0] = -2.0
    A[0, 1 + r : 1 + r + s] = Y[i]
    relations[0] = GREATER_EQUAL
    rhs[0] = 1.0
    # input budget of the unit itself
    A[1, 0] = 2.0
    A[1, 1 : 1 + r] = X[i]
    relations[1] = LESS_EQUAL
    rhs[1] = 1.0
    # peers must not dominate under the chosen weights
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    A[2:, 1 : 1 + r] = -X[mask]
    A[2:, 1 + r : 1 + r + s] = Y[mask]
    relations[2:] = LESS_EQUAL
    if vrs:
        A[0, -1] = -1.0
        A[2:, -1] = -1.0

    objective = np.zeros(k)
    objective[0] = 1.0
    bounds = [FREE] + [NONNEGATIVE] * (r + s) + ([FREE] if vrs else [])
    return LpProblem("max", objective, A, relations, rhs, bounds=bounds)


def chebyshev_score_linear(
    panel: Panel,
    i: int,
    rts: ReturnsToScale = ReturnsToScale.VRS,
    options: SimplexOptions | None = None,
) -> EfficiencyScore:
    """Score DMU ``i`` with the linearized Chebyshev model.

    The LP is feasible at delta = -0.5 (all weights zero) and capped at
    delta = 0.5 by the input budget, so this always returns a score in
    [0, 2]; a solver failure would indicate an internal bug and is
    propagated as :class:`SimplexError`.
    """
    i = _check_index(panel, i)
    solution = solve_lp(build_chebyshev_lp(panel, i, rts), options)
    if solution.status is not LpStatus.OPTIMAL:  # pragma: no cover - provably feasible
        raise SimplexError(
            f"Chebyshev LP for DMU {panel.dmu_ids[i]!r} ended {solution.status.value}"
        )
    return EfficiencyScore.from_delta(panel.dmu_ids[i], solution.variable_values[0])


def _fixed_delta_problem(panel: Panel, i: int, rts: ReturnsToScale, delta: float) -> LpProblem:
    """Feasibility system of the exact model at a frozen radius ``delta``.

    With delta fixed, the exact model's constraints are linear in the
    weights: variables are [input weights (r), output weights (s), free
    intercept under VRS] and the objective is irrelevant (zero).
    """
    X, Y = panel.X, panel.Y
    n, r, s = panel.n_dmus, panel.n_inputs, panel.n_outputs
    vrs = rts is ReturnsToScale.VRS
    k = r + s + (1 if vrs else 0)
    m = n + 1

    A = np.zeros((m, k))
    relations = np.empty(m, dtype="U2")
    rhs = np.zeros(m)

    A[0, r : r + s] = (1.0 - delta) * Y[i]
    relations[0] = GREATER_EQUAL
    rhs[0] = 1.0
    A[1, :r] = (1.0 + delta) * X[i]
    relations[1] = LESS_EQUAL
    rhs[1] = 1.0
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    A[2:, :r] = -(1.0 - delta) * X[mask]
    A[2:, r : r + s] = (1.0 + delta) * Y[mask]
    relations[2:] = LESS_EQUAL
    if vrs:
        A[0, -1] = -1.0
        A[2:, -1] = -1.0

    bounds = [NONNEGATIVE] * (r + s) + ([FREE] if vrs else [])
    return LpProblem("max", np.zeros(k), A, relations, rhs, bounds=bounds)


def feasible_at_delta(
    panel: Panel,
    i: int,
    rts: ReturnsToScale,
    delta: float,
    options: SimplexOptions | None = None,
) -> bool:
    """Whether the exact model admits any weights at radius ``delta``.

    "Feasible" means the solver certified a point within its residual
    tolerance.  Probing exactly at the feasibility boundary can leave the
    solver unable to certify either way; that counts as infeasible, which
    errs on the conservative side of the radius search.
    """
    i = _check_index(panel, i)
    try:
        solution = solve_lp(_fixed_delta_problem(panel, i, rts, delta), options)
    except SimplexError:
        return False
    return solution.status is LpStatus.OPTIMAL


def chebyshev_score_exact(
    panel: Panel,
    i: int,
    rts: ReturnsToScale = ReturnsToScale.VRS,
    tol: float = 1e-7,
    max_iter: int = 60,
    options: SimplexOptions | None = None,
) -> EfficiencyScore:
    """Score DMU ``i`` with the exact (nonlinear) Chebyshev model.

    Feasibility of the fixed-radius system is monotone: once it fails for
    some delta it fails for every larger delta (scaling the weights by
    the radius ratios maps a feasible point downward).  The supremum of
    feasible radii is therefore found by bisection on [-0.5, 0.5],
    clamped to that interval so the score stays in [0, 2].  A panel where
    even delta = -0.5 is infeasible (possible only with degenerate
    all-zero peers) scores 0, matching the linear model.
    """
    i = _check_index(panel, i)
    dmu_id = panel.dmu_ids[i]
    if not feasible_at_delta(panel, i, rts, DELTA_MIN, options):
        return EfficiencyScore.from_delta(dmu_id, DELTA_MIN)
    if feasible_at_delta(panel, i, rts, DELTA_MAX, options):
        return EfficiencyScore.from_delta(dmu_id, DELTA_MAX)
    lo, hi = DELTA_MIN, DELTA_MAX
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if feasible_at_delta(panel, i, rts, mid, options):
            lo = mid
        else:
            hi = mid
    return EfficiencyScore.from_delta(dmu_id, lo)


def classical_efficiency(
    panel: Panel,
    i: int,
    rts: ReturnsToScale = ReturnsToScale.VRS,
    options: SimplexOptions | None = None,
) -> float:
    """Input-oriented efficiency of DMU ``i`` in the classical model.

    CCR under CRS, BCC under VRS, both in multiplier form.  Requires the
    unit to have some strictly positive input (the weighted input is
    normalized to one); intended for strictly positive data, where the
    ranking of inefficient units coincides with the Chebyshev ranking.
    """
    i = _check_index(panel, i)
    X, Y = panel.X, panel.Y
    n, r, s = panel.n_dmus, panel.n_inputs, panel.n_outputs
    if not (X[i] > 0).any():
        raise DomainError(
            f"DMU {panel.dmu_ids[i]!r} has an all-zero input row; the classical "
            "model cannot normalize it - use the Chebyshev model instead"
        )
    vrs = rts is ReturnsToScale.VRS
    k = r + s + (1 if vrs else 0)
    m = n + 1

    A = np.zeros((m, k))
    relations = np.empty(m, dtype="U2")
    rhs = np.zeros(m)

    A[0, :r] = X[i]
    relations[0] = EQUAL
    rhs[0] = 1.0
    A[1:, :r] = -X
    A[1:, r : r + s] = Y
    relations[1:] = LESS_EQUAL
    if vrs:
        A[1:, -1] = -1.0

    objective = np.zeros(k)
    objective[r : r + s] = Y[i]
    if vrs:
        objective[-1] = -1.0
    bounds = [NONNEGATIVE] * (r + s) + ([FREE] if vrs else [])
    problem = LpProblem("max", objective, A, relations, rhs, bounds=bounds)
    solution = solve_lp(problem, options)
    if solution.status is not LpStatus.OPTIMAL:
        raise SimplexError(
            f"classical LP for DMU {panel.dmu_ids[i]!r} ended {solution.status.value}"
        )
    return float(solution.objective_value)


def score_all(
    panel: Panel,
    rts: ReturnsToScale = ReturnsToScale.VRS,
    method: str = "linear",
    threads: int = 1,
    options: SimplexOptions | None = None,
) -> list[EfficiencyScore]:
    """Score every DMU; output order always matches panel order.

    ``method`` is ``"linear"`` or ``"exact"``.  ``threads`` > 1 evaluates
    units concurrently (each solve touches only its own workspace);
    ``threads=0`` picks a small automatic pool.  Results are identical
    regardless of the thread count.
    """
    if method == "linear":
        scorer = lambda i: chebyshev_score_linear(panel, i, rts, options)
    elif method == "exact":
        scorer = lambda i: chebyshev_score_exact(panel, i, rts, options=options)
    else:
        raise DomainError(f"unknown scoring method {method!r}")
    indices = range(panel.n_dmus)
    if threads == 0:
        threads = min(4, os.cpu_count() or 1)
    if threads > 1 and panel.n_dmus > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(scorer, indices))
    return [scorer(i) for i in indices]


def scores_as_array(scores) -> np.ndarray:
    """Vector of score values from a list of :class:`EfficiencyScore`."""
    return np.array([s.score for s in scores], dtype=float)
