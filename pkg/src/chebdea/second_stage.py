"""Second-stage tools: regressing efficiency scores on the environment.

Scores from the Chebyshev frontier live in [0, 2], so before regression
they pass through the logit-style map ``ln(r / (2 - r))``; the regression
itself is ordinary least squares with classical i.i.d. inference.  Scores
produced by a frontier are in truth cross-dependent, which mainly
distorts inference, not the coefficient estimates; with samples in the
thousands the independence simplification is the standard working
assumption and robust or bootstrap errors are deliberately out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import stats as sstats

from .exceptions import CollinearityError, DomainError

DESIGN_LABELS = ("Intercept", "ln(p)", "1/ln(p)", "t/p")


def logit_transform(score, epsilon: float = 1e-6):
    """Map a score in [0, 2] to the real line via ``ln(c / (2 - c))``.

    ``c`` is the score clamped into ``[epsilon, 2 - epsilon]``; the
    endpoints would otherwise map to infinities.  Accepts scalars or
    arrays; scores outside [0, 2] are a domain error.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    arr = np.asarray(score, dtype=float)
    if not np.isfinite(arr).all():
        raise DomainError("scores must be finite")
    if (arr < 0).any() or (arr > 2).any():
        raise DomainError("scores must lie in [0, 2]")
    clamped = np.clip(arr, epsilon, 2.0 - epsilon)
    out = np.log(clamped / (2.0 - clamped))
    return out if arr.ndim else float(out)


def count_clamped(score, epsilon: float = 1e-6) -> int:
    """How many scores the transform would clamp at the given epsilon."""
    arr = np.atleast_1d(np.asarray(score, dtype=float))
    return int(((arr < epsilon) | (arr > 2.0 - epsilon)).sum())


@dataclass(frozen=True)
class DesignMatrix:
    """Regressor matrix with column labels."""

    Z: np.ndarray
    column_labels: tuple

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2:
            raise DomainError("design matrix must be two-dimensional")
        if not np.isfinite(Z).all():
            raise DomainError("design matrix entries must be finite")
        labels = tuple(str(c) for c in self.column_labels)
        if len(labels) != Z.shape[1]:
            raise DomainError("one label per design column is required")
        Z = Z.copy()
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "column_labels", labels)

    @property
    def n_obs(self) -> int:
        return self.Z.shape[0]

    @property
    def n_regressors(self) -> int:
        return self.Z.shape[1]


def build_design_matrix(population, distance) -> DesignMatrix:
    """Environmental design matrix ``[1, ln(p), 1/ln(p), t/p]``.

    Population must exceed 1 for every unit (``1/ln(p)`` blows up at 1);
    distances must be nonnegative.  The reciprocal-log column lets the
    fitted efficiency curve bend upward again for the very smallest
    municipalities, which the plain log cannot do.
    """
    p = np.asarray(population, dtype=float)
    t = np.asarray(distance, dtype=float)
    if p.ndim != 1 or t.shape != p.shape:
        raise DomainError("population and distance must be equal-length vectors")
    if not (np.isfinite(p).all() and np.isfinite(t).all()):
        raise DomainError("population and distance must be finite")
    if (p <= 1).any():
        raise DomainError("population must exceed 1 (1/ln(p) is singular at 1)")
    if (t < 0).any():
        raise DomainError("distance must be nonnegative")
    lp = np.log(p)
    Z = np.column_stack([np.ones_like(p), lp, 1.0 / lp, t / p])
    return DesignMatrix(Z, DESIGN_LABELS)


@dataclass(frozen=True)
class RegressionFit:
    """OLS estimates with classical standard errors and two-sided p-values."""

    beta: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    r_squared: float
    n_obs: int
    sigma2_hat: float
    column_labels: tuple

    @property
    def df_resid(self) -> int:
        return self.n_obs - self.beta.shape[0]


def ols_fit(Z, y) -> RegressionFit:
    """Least squares of ``y`` on ``Z`` with classical inference.

    ``Z`` may be a :class:`DesignMatrix` or a plain array.  Requires more
    observations than regressors and full column rank; rank deficiency is
    reported as :class:`CollinearityError` naming the offending columns.
    """
    if isinstance(Z, DesignMatrix):
        labels = Z.column_labels
        Z = Z.Z
    else:
        Z = np.asarray(Z, dtype=float)
        labels = tuple(f"x{j}" for j in range(Z.shape[1]))
    y = np.asarray(y, dtype=float)
    if Z.ndim != 2 or y.ndim != 1 or y.shape[0] != Z.shape[0]:
        raise DomainError("need a 2-D design and a matching response vector")
    if not (np.isfinite(Z).all() and np.isfinite(y).all()):
        raise DomainError("regression inputs must be finite")
    n, m = Z.shape
    if n <= m:
        raise DomainError(f"need more observations than regressors (n={n}, m={m})")

    # rank check via pivoted QR; the non-pivoting lstsq would silently
    # average collinear columns instead of telling the caller
    _, R, piv = sla.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag.max(initial=0.0) * max(n, m) * np.finfo(float).eps
    rank = int((diag > tol).sum())
    if rank < m:
        raise CollinearityError([labels[j] for j in sorted(piv[rank:])])

    beta, _, _, _ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ beta
    ssr = float(resid @ resid)
    df = n - m
    sigma2 = ssr / df
    xtx_inv = np.linalg.inv(Z.T @ Z)
    std_errors = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(std_errors > 0, beta / std_errors, np.inf * np.sign(beta))
    p_values = 2.0 * sstats.t.sf(np.abs(t_stats), df)

    if _has_intercept(Z):
        sst = float(((y - y.mean()) ** 2).sum())
    else:
        sst = float((y**2).sum())
    r_squared = 1.0 - ssr / sst if sst > 0 else (1.0 if ssr == 0 else 0.0)
    r_squared = min(1.0, max(0.0, r_squared))

    return RegressionFit(
        beta=beta,
        std_errors=std_errors,
        t_stats=t_stats,
        p_values=np.clip(p_values, 0.0, 1.0),
        r_squared=r_squared,
        n_obs=n,
        sigma2_hat=sigma2,
        column_labels=labels,
    )


def _has_intercept(Z) -> bool:
    """True when some column is a nonzero constant (absorbs the mean)."""
    constant = np.ptp(Z, axis=0) == 0.0
    return bool((constant & (Z[0] != 0.0)).any())


def pearson_correlation(a, b) -> float:
    """Plain Pearson correlation; constant vectors are a domain error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DomainError("correlation needs two equal-length vectors")
    if a.shape[0] < 2:
        raise DomainError("correlation needs at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da @ da) * (db @ db))
    if denom == 0.0:
        raise DomainError("correlation is undefined for constant vectors")
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


def silverman_bandwidth(sample) -> float:
    """Rule-of-thumb bandwidth ``0.9 * min(sd, IQR/1.34) * n**(-1/5)``.

    Degenerate spreads fall back the way R's ``bw.nrd0`` does (sd, then
    absolute value, then 1), so a bandwidth is always positive.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DomainError("bandwidth needs a sample of at least two values")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread == 0.0:
        spread = abs(float(x[0])) or 1.0
    return 0.9 * spread * x.size ** (-0.2)


def kde_grid(sample, bandwidth: float, n_points: int = 512, span: float = 4.0):
    """Evaluation grid covering ``[min - span*h, max + span*h]``.

    The default span of four bandwidths keeps the truncated kernel tails
    below 1e-4 of total mass, so the trapezoid integral of the density
    stays within 1e-3 of one even for tiny or single-valued samples.
    """
    x = np.asarray(sample, dtype=float)
    if bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    lo = float(x.min()) - span * bandwidth
    hi = float(x.max()) + span * bandwidth
    return np.linspace(lo, hi, n_points)


def gaussian_kde(sample, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density of ``sample`` evaluated at ``grid``.

    The estimate is the exact kernel sum (no binning or FFT shortcuts;
    sample sizes here never warrant them).  ``bandwidth=None`` applies
    the Silverman rule.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("density estimation needs a nonempty 1-D sample")
    if not np.isfinite(x).all():
        raise DomainError("sample must be finite")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if bandwidth <= 0:
        raise DomainError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - x[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=1)
    dens /= x.size * bandwidth * np.sqrt(2.0 * np.pi)
    return dens


@dataclass(frozen=True)
class ScoreSummary:
    """The reporting triple: share below 1, mean, median."""

    share_inefficient: float
    mean: float
    median: float


def summarize_scores(scores) -> ScoreSummary:
    """Summarize a score set; a score of exactly 1 counts as efficient."""
    values = np.asarray(
        [s.score if hasattr(s, "score") else float(s) for s in scores], dtype=float
    )
    if values.size == 0:
        raise DomainError("cannot summarize an empty score list")
    return ScoreSummary(
        share_inefficient=float((values < 1.0).mean()),
        mean=float(values.mean()),
        median=float(np.median(values)),
    )
