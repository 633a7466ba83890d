"""White-noise tests for vector series and the order search built on them.

Three tests are provided:

* ``ljung_box``: the multivariate portmanteau statistic
  ``Q = T^2 sum_k tr(G_k' G_0^{-1} G_k G_0^{-1}) / (T - k)`` referred to a
  chi-square with ``d^2 m`` degrees of freedom.
* ``tsay_rank_test``: the scale-free maximum of ``sqrt(T)`` times absolute
  lag-k Spearman rank autocorrelations of PCA-orthogonalized components,
  thresholded by an extreme-value quantile.
* ``cyz_max_test``: the maximum absolute cross-correlation statistic with a
  Gaussian-multiplier block-bootstrap threshold.

``diagonal_path_order`` walks the rotated panel ``N_t = G1' Y_t G2`` along
its diagonal, testing lower-right blocks for whiteness, then back-tests rows
and columns to pin down the two factor orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .config import EstimationConfig, resolve_test
from .errors import (
    DegenerateComponent,
    InsufficientData,
    InvalidInput,
    SingularCovariance,
)

# Components whose variance falls below this fraction of the rotated panel's
# largest entry variance are numerically zero: scale-free tests would otherwise
# react to floating-point residue, so such components are excluded and a block
# consisting only of them is declared white.
DEGENERATE_VARIANCE_RATIO = 1e-24


@dataclass(frozen=True)
class TestOutcome:
    """Result of one white-noise test on a vector series."""

    method: str
    statistic: float
    reject: bool
    p_value: float | None = None
    threshold: float | None = None
    dim: int = 0
    n_lags: int = 0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "reject": self.reject,
            "p_value": self.p_value,
            "threshold": self.threshold,
            "dim": self.dim,
            "n_lags": self.n_lags,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TestOutcome":
        return cls(**d)


@dataclass(frozen=True)
class TraceStep:
    """One tested block along the order search, indices 1-based."""

    stage: str
    row_start: int
    col_start: int
    outcome: TestOutcome

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "row_start": self.row_start,
            "col_start": self.col_start,
            "outcome": self.outcome.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceStep":
        return cls(
            stage=d["stage"],
            row_start=d["row_start"],
            col_start=d["col_start"],
            outcome=TestOutcome.from_dict(d["outcome"]),
        )


@dataclass(frozen=True)
class WhitenessReport:
    """Outcome of the diagonal-path order search."""

    r1: int
    r2: int
    l_star: int
    i_star: int | None
    j_star: int | None
    order_zero: bool
    boundary: bool
    test: str
    trace: tuple[TraceStep, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "r1": self.r1,
            "r2": self.r2,
            "l_star": self.l_star,
            "i_star": self.i_star,
            "j_star": self.j_star,
            "order_zero": self.order_zero,
            "boundary": self.boundary,
            "test": self.test,
            "trace": [s.to_dict() for s in self.trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WhitenessReport":
        return cls(
            r1=d["r1"],
            r2=d["r2"],
            l_star=d["l_star"],
            i_star=d["i_star"],
            j_star=d["j_star"],
            order_zero=d["order_zero"],
            boundary=d["boundary"],
            test=d["test"],
            trace=tuple(TraceStep.from_dict(s) for s in d.get("trace", [])),
        )


def _check_series(x: np.ndarray, m: int, min_extra: int = 1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidInput(f"series must be 1-d or 2-d, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("series contains non-finite entries")
    if m < 1:
        raise InvalidInput("m must be >= 1")
    T = x.shape[0]
    if T <= m + min_extra:
        raise InsufficientData(f"need T > m + {min_extra}, got T={T}, m={m}")
    return x


def _lagged_cov(x: np.ndarray, k: int) -> np.ndarray:
    """``(1/T) sum_{t=k+1}^T x_t x_{t-k}'`` for an already centered series."""
    T = x.shape[0]
    if k == 0:
        return x.T @ x / T
    return x[k:].T @ x[:-k] / T


def ljung_box(x: np.ndarray, m: int, alpha: float = 0.05) -> TestOutcome:
    """Multivariate portmanteau test for whiteness of a vector series.

    Rejects when the chi-square p-value of ``Q`` with ``d^2 m`` degrees of
    freedom falls below ``alpha``.  For ``d = 1`` the statistic equals
    ``T / (T + 2)`` times the classical univariate portmanteau statistic.
    """
    x = _check_series(x, m)
    T, d = x.shape
    xc = x - x.mean(axis=0)
    G0 = _lagged_cov(xc, 0)
    svals = np.linalg.svd(G0, compute_uv=False)
    if svals[0] <= 0.0 or svals[-1] <= 1e-10 * svals[0]:
        raise SingularCovariance(
            "lag-zero covariance is numerically singular; reduce the dimension"
        )
    G0_inv = np.linalg.inv(G0)
    Q = 0.0
    for k in range(1, m + 1):
        Gk = _lagged_cov(xc, k)
        Q += float(np.sum((G0_inv @ Gk) * (Gk @ G0_inv))) / (T - k)
    Q *= T * T
    dof = d * d * m
    p_value = float(stats.chi2.sf(Q, dof))
    return TestOutcome(
        method="ljung_box",
        statistic=float(Q),
        reject=bool(p_value < alpha),
        p_value=p_value,
        dim=d,
        n_lags=m,
    )


def max_abs_normal_quantile(N: int, alpha: float, form: str = "exact") -> float:
    """Level ``1 - alpha`` quantile for the maximum of ``N`` absolute normals.

    ``exact`` solves ``(2 Phi(x) - 1)^N = 1 - alpha`` directly.  ``asymptotic``
    uses the Gumbel normalization ``b_N + a_N * g_{1-alpha}`` with
    ``a_N = (2 ln N)^{-1/2}`` and
    ``b_N = (2 ln N)^{1/2} - (ln(4 pi) + ln ln N) / (2 (2 ln N)^{1/2})``,
    which converges slowly and sits below the exact quantile at practical
    ``N``.
    """
    if N < 2:
        raise InvalidInput("N must be >= 2")
    if not (0.0 < alpha < 1.0):
        raise InvalidInput("alpha must lie in (0, 1)")
    if form == "exact":
        per_tail = (1.0 - (1.0 - alpha) ** (1.0 / N)) / 2.0
        return float(ndtri(1.0 - per_tail))
    if form == "asymptotic":
        ln = math.log(N)
        a = 1.0 / math.sqrt(2.0 * ln)
        b = math.sqrt(2.0 * ln) - (math.log(4.0 * math.pi) + math.log(ln)) / (
            2.0 * math.sqrt(2.0 * ln)
        )
        g = -math.log(-math.log(1.0 - alpha))
        return float(b + a * g)
    raise InvalidInput(f"unknown threshold form: {form!r}")


def _standardized_ranks(x: np.ndarray) -> np.ndarray:
    """Columnwise ranks mapped to zero mean and (tie-free) unit variance."""
    T = x.shape[0]
    ranks = stats.rankdata(x, axis=0)
    center = 0.5 * (T + 1)
    scale = math.sqrt((T * T - 1.0) / 12.0)
    return (ranks - center) / scale


def tsay_rank_test(
    x: np.ndarray,
    m: int,
    alpha: float = 0.05,
    threshold_form: str = "exact",
    early_stop: bool = False,
) -> TestOutcome:
    """Rank-based maximum autocorrelation test for high-dimensional whiteness.

    The series is orthogonalized by principal components, each component is
    replaced by its standardized ranks, and the statistic is the largest
    ``sqrt(T) |rho|`` over all ``d^2`` entries of the first ``m`` lagged rank
    correlation matrices.  The threshold is the extreme-value quantile over
    ``N = d^2 m`` entries.  With ``early_stop`` the scan stops at the first
    lag that already exceeds the threshold; the reported statistic is then
    the maximum over the scanned lags only.
    """
    x = _check_series(x, m, min_extra=2)
    T, d = x.shape
    if d >= T:
        raise InsufficientData(
            f"orthogonalization needs d < T, got d={d}, T={T}; reduce the block"
        )
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / T
    _, vectors = np.linalg.eigh(cov)
    scores = xc @ vectors
    U = _standardized_ranks(scores)
    N = d * d * m
    threshold = max_abs_normal_quantile(N, alpha, threshold_form)
    sqrt_T = math.sqrt(T)
    stat = 0.0
    lags_used = 0
    for k in range(1, m + 1):
        Gk = U[k:].T @ U[:-k] / T
        stat = max(stat, sqrt_T * float(np.max(np.abs(Gk))))
        lags_used = k
        if early_stop and stat > threshold:
            break
    return TestOutcome(
        method="tsay_rank",
        statistic=stat,
        reject=bool(stat > threshold),
        threshold=threshold,
        dim=d,
        n_lags=lags_used,
    )


def cyz_max_test(
    x: np.ndarray,
    m: int,
    alpha: float = 0.05,
    n_boot: int = 500,
    seed: int = 0,
) -> TestOutcome:
    """Maximum cross-correlation test with a multiplier-bootstrap threshold.

    The statistic is ``max_{k<=m} max_{i,j} sqrt(T) |rho_ij(k)|`` on the
    standardized components.  Its null quantile is approximated by the
    Gaussian-multiplier block bootstrap: blocks of length ``ceil(T^(1/3))``
    share one standard normal multiplier and the ``1 - alpha`` empirical
    quantile of the bootstrapped maxima is used as the threshold.  Intended
    for small cross-sections; the memory needed grows like ``T d^2 m``.
    """
    x = _check_series(x, m, min_extra=2)
    T, d = x.shape
    if n_boot < 1:
        raise InvalidInput("n_boot must be >= 1")
    if T * d * d * m > 50_000_000:
        raise InvalidInput(
            "cross-section too large for the multiplier bootstrap; "
            "use the rank test instead"
        )
    sd = x.std(axis=0)
    sd_floor = np.max(sd) * math.sqrt(DEGENERATE_VARIANCE_RATIO)
    if np.any(sd <= sd_floor):
        raise DegenerateComponent("a component series has zero variance")
    u = (x - x.mean(axis=0)) / sd
    D = d * d * m
    # f[t] holds vec(u_t u_{t-k}') for each lag, zero where the lag reaches
    # before the start of the sample
    f = np.zeros((T, D))
    for k in range(1, m + 1):
        block = (u[k:, :, None] * u[:-k, None, :]).reshape(T - k, d * d)
        f[k:, (k - 1) * d * d : k * d * d] = block
    # the sum over t of f divided by T is exactly the vector of lagged
    # correlations, so the statistic is sqrt(T) times its max norm
    mean_f = f.mean(axis=0)
    stat = math.sqrt(T) * float(np.max(np.abs(mean_f)))
    block_len = int(math.ceil(T ** (1.0 / 3.0)))
    n_blocks = int(math.ceil(T / block_len))
    centered = f - mean_f
    block_sums = np.add.reduceat(centered, np.arange(0, T, block_len), axis=0)
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.standard_normal((n_boot, n_blocks))
    W = np.max(np.abs(g @ block_sums), axis=1) / math.sqrt(T)
    threshold = float(np.quantile(W, 1.0 - alpha))
    return TestOutcome(
        method="cyz_max",
        statistic=stat,
        reject=bool(stat > threshold),
        threshold=threshold,
        dim=d,
        n_lags=m,
    )


def _vec_blocks(block: np.ndarray) -> np.ndarray:
    """Stack each ``a x b`` matrix into a vector, columns first."""
    T = block.shape[0]
    return block.transpose(0, 2, 1).reshape(T, -1)


def _reduce_block(block: np.ndarray, epsilon: float) -> np.ndarray:
    """Cap the block at its top-left square when its vec dimension reaches T."""
    T, a, b = block.shape
    if a * b < T:
        return block
    cap = max(1, int(math.floor(math.sqrt(epsilon * T))))
    return block[:, : min(a, cap), : min(b, cap)]


def _run_block_test(
    block: np.ndarray,
    method: str,
    config: EstimationConfig,
    var_floor: float,
    early_stop: bool,
) -> TestOutcome:
    """Vectorize a block, drop numerically dead components, run the test."""
    block = _reduce_block(block, config.epsilon)
    x = _vec_blocks(block)
    live = x.var(axis=0) > var_floor
    n_live = int(np.count_nonzero(live))
    if n_live == 0:
        # the block is floating-point residue relative to the panel scale
        return TestOutcome(
            method=method,
            statistic=0.0,
            reject=False,
            dim=0,
            n_lags=config.m,
        )
    x = x[:, live]
    if method == "ljung_box":
        return ljung_box(x, config.m, config.alpha)
    if method == "tsay_rank":
        return tsay_rank_test(
            x, config.m, config.alpha, config.threshold_form, early_stop=early_stop
        )
    if method == "cyz_max":
        return cyz_max_test(x, config.m, config.alpha, config.n_boot, config.seed)
    raise InvalidInput(f"unknown test: {method!r}")


def diagonal_path_order(
    panel: np.ndarray,
    gamma1: np.ndarray,
    gamma2: np.ndarray,
    config: EstimationConfig | None = None,
) -> WhitenessReport:
    """Estimate the pair of factor orders by testing blocks of ``G1' Y_t G2``.

    Walk ``l = 1, 2, ...`` testing the lower-right block starting at
    ``(l, l)`` until the first acceptance at ``l*``; the factors then occupy
    at most ``min(r1, r2) = l* - 1`` rows and columns.  Rows are back-tested
    by fixing the column start at ``l* - 1`` and moving the row start down
    until acceptance at ``i*``, giving ``r1 = l* + i* - 2``; columns
    symmetrically give ``r2 = l* + j* - 2``.  With
    ``config.column_stop == "reject"`` the column search instead stops at its
    first rejection.  If every diagonal block rejects, the smaller dimension
    is exhausted: its order is set to ``min(p1, p2)`` and the remaining
    dimension is scanned along the last row (or column).  Blocks whose
    entries are all numerically zero relative to the rotated panel's scale
    are treated as white.
    """
    if config is None:
        config = EstimationConfig()
    panel = np.asarray(panel, dtype=float)
    if panel.ndim != 3:
        raise InvalidInput(f"panel must have shape (T, p1, p2), got {panel.shape}")
    T, p1, p2 = panel.shape
    gamma1 = np.asarray(gamma1, dtype=float)
    gamma2 = np.asarray(gamma2, dtype=float)
    if gamma1.shape != (p1, p1) or gamma2.shape != (p2, p2):
        raise InvalidInput("gamma1 and gamma2 must be full square bases")
    N = np.einsum("ia,tij,jb->tab", gamma1, panel, gamma2, optimize=True)
    var_floor = float(np.max(N.var(axis=0))) * DEGENERATE_VARIANCE_RATIO
    method = resolve_test(config.test, p1, p2, T)
    trace: list[TraceStep] = []

    def run(stage: str, row_start: int, col_start: int) -> TestOutcome:
        # early_stop only skips lags once rejection is certain, so the
        # reject decision is unaffected; accepted blocks scan every lag
        block = N[:, row_start - 1 :, col_start - 1 :]
        outcome = _run_block_test(block, method, config, var_floor, early_stop=True)
        trace.append(TraceStep(stage, row_start, col_start, outcome))
        return outcome

    def report(r1, r2, l_star, i_star, j_star, order_zero=False, boundary=False):
        return WhitenessReport(
            r1=r1,
            r2=r2,
            l_star=l_star,
            i_star=i_star,
            j_star=j_star,
            order_zero=order_zero,
            boundary=boundary,
            test=method,
            trace=tuple(trace),
        )

    l_max = min(p1, p2)
    l_star = l_max
    rejected_at_end = False
    for l in range(1, l_max + 1):
        outcome = run("diagonal", l, l)
        if not outcome.reject:
            l_star = l
            break
        if l == l_max:
            rejected_at_end = True

    if rejected_at_end:
        # every diagonal block rejected: the smaller dimension is saturated
        if p1 <= p2:
            r1 = p1
            j = 1
            while p1 + j <= p2:
                outcome = run("escalation", p1, p1 + j)
                if not outcome.reject:
                    return report(r1, p1 + j - 1, l_star, None, j)
                j += 1
            return report(r1, p2, l_star, None, None, boundary=True)
        r2 = p2
        i = 1
        while p2 + i <= p1:
            outcome = run("escalation", p2 + i, p2)
            if not outcome.reject:
                return report(p2 + i - 1, r2, l_star, i, None)
            i += 1
        return report(p1, r2, l_star, None, None, boundary=True)

    if l_star == 1:
        return report(0, 0, 1, None, None, order_zero=True)

    # row back-search: fix columns at l* - 1, move the row start down
    i_star = None
    boundary = False
    i = 1
    while l_star - 1 + i <= p1:
        outcome = run("row", l_star - 1 + i, l_star - 1)
        if not outcome.reject:
            i_star = i
            break
        i += 1
    if i_star is None:
        i_star = p1 - l_star + 2
        boundary = True
    r1 = l_star + i_star - 2

    # column back-search: fix rows at the estimated r1
    j_star = None
    stop_on_reject = config.column_stop == "reject"
    j = 1
    while l_star - 1 + j <= p2:
        outcome = run("column", r1, l_star - 1 + j)
        if outcome.reject == stop_on_reject:
            j_star = j
            break
        j += 1
    if j_star is None:
        j_star = p2 - l_star + 2
        boundary = True
    r2 = l_star + j_star - 2
    return report(r1, r2, l_star, i_star, j_star, boundary=boundary)
