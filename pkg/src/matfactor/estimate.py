"""Loading-space estimation for matrix factor models with spiked noise.

The front and back loading spaces of ``Y_t = A1 X_t P1' + E_t`` are
estimated from accumulated lagged autocovariances.  ``build_m1`` forms

``M1 = sum_{k=1}^{k0} sum_{i,j} S_ij(k) S_ij(k)'``

with ``S_ij(k) = (1/T) sum_{t=k+1}^T y_{i,t} y_{j,t-k}'`` built from the
column series of the panel; the top eigenvectors of ``M1`` span the front
loading space when the serially dependent part of the panel is the common
component.  ``iterate_loadings`` sharpens both spaces by alternating
one-sided projections, ``build_s1``/``build_s2`` recover the spiked noise
directions by projected PCA of lag-zero covariances, and ``recover_factors``
inverts the model on the subspaces least contaminated by noise.  ``fit``
strings all stages together, including order selection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .config import EstimationConfig
from .errors import InvalidInput, OrderZero, SingularBracket, DegenerateSubspace
from .subspace import EigenDecomposition, orthonormal_distance, random_orthonormal, sym_eigen
from .wntest import WhitenessReport, diagonal_path_order


def _check_panel(panel: np.ndarray) -> np.ndarray:
    panel = np.asarray(panel, dtype=float)
    if panel.ndim != 3:
        raise InvalidInput(f"panel must have shape (T, p1, p2), got {panel.shape}")
    if min(panel.shape) < 1:
        raise InvalidInput(f"panel has an empty axis: {panel.shape}")
    if not np.all(np.isfinite(panel)):
        raise InvalidInput("panel contains non-finite entries")
    return panel


def col_autocov(panel: np.ndarray, i: int, j: int, k: int) -> np.ndarray:
    """Lag-``k`` autocovariance ``(1/T) sum_{t=k+1}^T y_{i,t} y_{j,t-k}'``.

    ``y_{i,t}`` is column ``i`` (0-based) of ``Y_t``; the divisor is ``T``
    regardless of the lag and no mean is removed.  Returns ``p1 x p1``.
    """
    panel = _check_panel(panel)
    T, p1, p2 = panel.shape
    if not (0 <= i < p2 and 0 <= j < p2):
        raise InvalidInput(f"column indices out of range for p2={p2}")
    if not (0 <= k < T):
        raise InvalidInput(f"need 0 <= k < T, got k={k}, T={T}")
    lead = panel[k:, :, i]
    lag = panel[: T - k, :, j] if k > 0 else panel[:, :, j]
    return lead.T @ lag / T


def build_m1(panel: np.ndarray, k0: int) -> np.ndarray:
    """Accumulated outer products of all lagged column autocovariances.

    Equivalent to summing ``col_autocov(panel, i, j, k) @ its transpose``
    over all column pairs and lags ``1..k0``, computed through the stacked
    ``(p1 p2) x (p1 p2)`` lagged covariance for speed.  Symmetric PSD.
    """
    panel = _check_panel(panel)
    T, p1, p2 = panel.shape
    if not (1 <= k0 < T):
        raise InvalidInput(f"need 1 <= k0 < T, got k0={k0}, T={T}")
    # row t of V is vec(Y_t), columns stacked, so block (i, j) of V'V-type
    # products is the (i, j) column-pair autocovariance
    V = panel.transpose(0, 2, 1).reshape(T, p2 * p1)
    M = np.zeros((p1, p1))
    for k in range(1, k0 + 1):
        C = V[k:].T @ V[: T - k] / T
        R = C.reshape(p2, p1, p2, p1)
        M += np.einsum("iajb,icjb->ac", R, R, optimize=True)
    return 0.5 * (M + M.T)


def build_m2(panel: np.ndarray, k0: int) -> np.ndarray:
    """Same accumulation on the transposed panel; spans the back space."""
    return build_m1(np.ascontiguousarray(_check_panel(panel).transpose(0, 2, 1)), k0)


def build_m_star(panel: np.ndarray, P: np.ndarray, k0: int) -> np.ndarray:
    """Moment matrix of the projected series ``Z_t = Y_t P``.

    Projection onto an orthonormal ``P`` close to the back loading space
    shrinks the noise that enters the accumulation, which is what drives the
    faster rate of the iterated estimator.
    """
    panel = _check_panel(panel)
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != panel.shape[2]:
        raise InvalidInput(
            f"P must be (p2, r) with p2={panel.shape[2]}, got {P.shape}"
        )
    return build_m1(panel @ P, k0)


def ratio_min(values: np.ndarray, R: int) -> int:
    """1-based index minimizing the eigenvalue ratio ``values[j+1]/values[j]``.

    ``values`` must be in descending order.  Entries are floored at
    ``1e-12 * values[0]`` so trailing zeros do not produce 0/0; ties resolve
    to the smallest index.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise InvalidInput("need a 1-d array of at least two eigenvalues")
    if np.any(values[:-1] < values[1:] - 1e-12 * max(abs(values[0]), 1.0)):
        raise InvalidInput("eigenvalues must be sorted in descending order")
    if not (1 <= R <= values.size - 1):
        raise InvalidInput(f"need 1 <= R <= {values.size - 1}, got R={R}")
    floor = 1e-12 * max(values[0], 0.0)
    vals = np.maximum(values, max(floor, np.finfo(float).tiny))
    ratios = vals[1 : R + 1] / vals[:R]
    return int(np.argmin(ratios)) + 1


@dataclass(frozen=True)
class IterationResult:
    """Estimates after the alternating projection refinement."""

    A: np.ndarray
    P: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    first_A: np.ndarray
    first_P: np.ndarray
    n_iterations: int
    converged: bool


def iterate_loadings(
    panel: np.ndarray,
    r1: int,
    r2: int,
    P_init: np.ndarray,
    k0: int = 2,
    eta: float = 1e-4,
    s0: int = 2,
) -> IterationResult:
    """Alternate one-sided projections until the estimated spans settle.

    Pass ``i`` builds the moment matrix of ``Y_t P_i`` whose top ``r1``
    eigenvectors give ``A_i``, then the moment matrix of ``Y_t' A_i`` whose
    top ``r2`` eigenvectors give ``P_{i+1}``.  The loop stops once both
    consecutive subspace distances drop below ``eta``, or after pass ``s0``;
    ``s0 = 0`` returns the estimate built from ``P_init`` alone.  The
    returned ``gamma1``/``gamma2`` are the full eigenvector bases of the
    final pass, and ``first_A``/``first_P`` keep the non-iterated pass-0
    estimates for baseline comparisons.
    """
    panel = _check_panel(panel)
    T, p1, p2 = panel.shape
    if not (1 <= r1 <= p1 and 1 <= r2 <= p2):
        raise InvalidInput(f"orders out of range: r1={r1}, r2={r2}")
    P_cur = np.asarray(P_init, dtype=float)
    if P_cur.ndim != 2 or P_cur.shape[0] != p2 or P_cur.shape[1] < 1:
        raise InvalidInput(f"P_init must be (p2, r), got {P_cur.shape}")
    panel_t = np.ascontiguousarray(panel.transpose(0, 2, 1))
    A_prev = None
    first_A = first_P = None
    i = 0
    while True:
        eig1 = sym_eigen(build_m_star(panel, P_cur, k0))
        A_cur = eig1.vectors[:, :r1]
        eig2 = sym_eigen(build_m_star(panel_t, A_cur, k0))
        P_next = eig2.vectors[:, :r2]
        if i == 0:
            first_A, first_P = A_cur, P_next
        converged = (
            A_prev is not None
            and orthonormal_distance(A_cur, A_prev) < eta
            and P_cur.shape == P_next.shape
            and orthonormal_distance(P_next, P_cur) < eta
        )
        if converged or i >= s0:
            return IterationResult(
                A=A_cur,
                P=P_next,
                gamma1=eig1.vectors,
                gamma2=eig2.vectors,
                first_A=first_A,
                first_P=first_P,
                n_iterations=i,
                converged=bool(converged),
            )
        A_prev, P_cur = A_cur, P_next
        i += 1


def build_s1(panel: np.ndarray, B1: np.ndarray, Q1: np.ndarray) -> np.ndarray:
    """Projected lag-zero PCA matrix exposing the spiked row-noise space.

    For each column series ``y_{i,t}`` the cross-moment
    ``Omega_i = (1/T) sum_t y_{i,t} vec(B1' Y_t Q1)'`` is formed, where
    ``B1`` and ``Q1`` are orthonormal complements of the estimated loading
    spaces; ``S1 = sum_i Omega_i Omega_i'``.  Moments are uncentered, so the
    panel should already have mean zero.  Returns ``p1 x p1`` symmetric PSD.
    """
    panel = _check_panel(panel)
    T, p1, p2 = panel.shape
    B1 = np.asarray(B1, dtype=float)
    Q1 = np.asarray(Q1, dtype=float)
    if B1.ndim != 2 or B1.shape[0] != p1:
        raise InvalidInput(f"B1 must be (p1, v1), got {B1.shape}")
    if Q1.ndim != 2 or Q1.shape[0] != p2:
        raise InvalidInput(f"Q1 must be (p2, v2), got {Q1.shape}")
    if B1.shape[1] < 1 or Q1.shape[1] < 1:
        raise InvalidInput("complement bases must have at least one column")
    # vec(B1' Y_t Q1) for all t, columns stacked
    proj = np.einsum("ab,tbc,cd->tad", B1.T, panel, Q1, optimize=True)
    n = proj.transpose(0, 2, 1).reshape(T, -1)
    omega = np.einsum("tai,tn->ian", panel, n, optimize=True) / T
    S = np.einsum("ian,ibn->ab", omega, omega, optimize=True)
    return 0.5 * (S + S.T)


def build_s2(panel: np.ndarray, B1: np.ndarray, Q1: np.ndarray) -> np.ndarray:
    """Mirror of ``build_s1`` on the transposed panel (column-noise space)."""
    panel = _check_panel(panel)
    return build_s1(np.ascontiguousarray(panel.transpose(0, 2, 1)), Q1, B1)


def select_mitigation_subspace(B2: np.ndarray, A1: np.ndarray, r: int) -> np.ndarray:
    """Rotate the noise-complement basis towards the loading space.

    Returns ``B2 C`` where ``C`` holds the top ``r`` eigenvectors of
    ``B2' A1 A1' B2``; among all ``r``-column rotations of ``B2`` this one
    maximizes the smallest singular value of the recovery bracket
    ``(B2 C)' A1``.
    """
    B2 = np.asarray(B2, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    if B2.ndim != 2 or A1.ndim != 2 or B2.shape[0] != A1.shape[0]:
        raise InvalidInput("B2 and A1 must share their row dimension")
    if not (1 <= r <= B2.shape[1]):
        raise InvalidInput(f"need 1 <= r <= {B2.shape[1]}, got r={r}")
    cross = B2.T @ A1
    eig = sym_eigen(cross @ cross.T)
    if eig.values[0] <= 1e-12:
        raise DegenerateSubspace(
            "the noise complement is orthogonal to the loading space"
        )
    return B2 @ eig.vectors[:, :r]


def recover_factors(
    panel: np.ndarray,
    A1: np.ndarray,
    P1: np.ndarray,
    B2_star: np.ndarray,
    Q2_star: np.ndarray,
) -> np.ndarray:
    """Extract the factor series through the noise-mitigating subspaces.

    ``X_t = (B2*' A1)^{-1} B2*' Y_t Q2* (P1' Q2*)^{-1}``; exact when the
    panel is noiseless and the brackets are invertible.  Returns
    ``(T, r1, r2)``.
    """
    panel = _check_panel(panel)
    T, p1, p2 = panel.shape
    A1 = np.asarray(A1, dtype=float)
    P1 = np.asarray(P1, dtype=float)
    B2_star = np.asarray(B2_star, dtype=float)
    Q2_star = np.asarray(Q2_star, dtype=float)
    if A1.shape[0] != p1 or B2_star.shape != A1.shape:
        raise InvalidInput("A1 and B2_star must both be (p1, r1)")
    if P1.shape[0] != p2 or Q2_star.shape != P1.shape:
        raise InvalidInput("P1 and Q2_star must both be (p2, r2)")
    left_bracket = B2_star.T @ A1
    right_bracket = P1.T @ Q2_star
    for name, bracket in (("B2*'A1", left_bracket), ("P1'Q2*", right_bracket)):
        svals = np.linalg.svd(bracket, compute_uv=False)
        if svals[-1] <= 1e-8:
            raise SingularBracket(f"bracket {name} is numerically singular")
    left = np.linalg.solve(left_bracket, B2_star.T)
    right = Q2_star @ np.linalg.inv(right_bracket)
    return np.einsum("ap,tpq,qb->tab", left, panel, right, optimize=True)


@dataclass(frozen=True)
class FactorFit:
    """Everything estimated by ``fit``.

    Loading bases carry the selected numbers of columns; ``mean`` is the
    entrywise time average removed from the panel before estimation, and
    ``X`` holds the recovered factor series of the centered panel.
    """

    config: EstimationConfig
    mean: np.ndarray
    A1: np.ndarray
    P1: np.ndarray
    B1: np.ndarray
    Q1: np.ndarray
    B2_star: np.ndarray
    Q2_star: np.ndarray
    X: np.ndarray
    r1: int
    r2: int
    k1: int
    k2: int
    r1_initial: int
    r2_initial: int
    A1_initial: np.ndarray
    P1_initial: np.ndarray
    A1_first_pass: np.ndarray
    P1_first_pass: np.ndarray
    n_iterations: int
    converged: bool
    m1_eigenvalues: np.ndarray
    m2_eigenvalues: np.ndarray
    s1_eigenvalues: np.ndarray
    s2_eigenvalues: np.ndarray
    order_report_initial: WhitenessReport | None
    order_report_final: WhitenessReport | None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A1.shape[0], self.P1.shape[0]

    def common_component(self) -> np.ndarray:
        """Fitted common part ``mean + A1 X_t P1'`` for every ``t``."""
        return self.mean + np.einsum(
            "ia,tab,jb->tij", self.A1, self.X, self.P1, optimize=True
        )

    _ARRAY_FIELDS = (
        "mean",
        "A1",
        "P1",
        "B1",
        "Q1",
        "B2_star",
        "Q2_star",
        "X",
        "A1_initial",
        "P1_initial",
        "A1_first_pass",
        "P1_first_pass",
        "m1_eigenvalues",
        "m2_eigenvalues",
        "s1_eigenvalues",
        "s2_eigenvalues",
    )
    _INT_FIELDS = (
        "r1",
        "r2",
        "k1",
        "k2",
        "r1_initial",
        "r2_initial",
        "n_iterations",
    )

    def to_dict(self) -> dict:
        out: dict = {"config": self.config.to_dict()}
        for name in self._ARRAY_FIELDS:
            out[name] = getattr(self, name).tolist()
        for name in self._INT_FIELDS:
            out[name] = int(getattr(self, name))
        out["converged"] = self.converged
        for name in ("order_report_initial", "order_report_final"):
            report = getattr(self, name)
            out[name] = None if report is None else report.to_dict()
        out["notes"] = list(self.notes)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FactorFit":
        kwargs: dict = {"config": EstimationConfig.from_dict(d["config"])}
        for name in cls._ARRAY_FIELDS:
            kwargs[name] = np.asarray(d[name], dtype=float)
        for name in cls._INT_FIELDS:
            kwargs[name] = int(d[name])
        kwargs["converged"] = bool(d["converged"])
        for name in ("order_report_initial", "order_report_final"):
            report = d.get(name)
            kwargs[name] = None if report is None else WhitenessReport.from_dict(report)
        kwargs["notes"] = tuple(d.get("notes", ()))
        return cls(**kwargs)


def _spike_count(
    values: np.ndarray, r: int, p: int, R_ratio: int | None = None
) -> int:
    """Ratio estimate of the number of diverging noise eigenvalues."""
    R = max(1, min(p - r - 1, p // 2)) if R_ratio is None else R_ratio
    R = max(1, min(R, values.size - 1))
    return ratio_min(values, R)


def fit(
    panel: np.ndarray,
    config: EstimationConfig | None = None,
    P_init: np.ndarray | None = None,
) -> FactorFit:
    """Run the full estimation pipeline on a matrix-valued series.

    Stages: entrywise mean removal; accumulation of the two moment matrices
    and a first order selection on their eigenbases; alternating projection
    refinement of the loading spaces; re-selection of the orders on the
    refined rotation; projected PCA of the noise and selection of the spiked
    directions; factor recovery through the mitigating subspaces.

    ``P_init`` optionally fixes the starting back basis of the refinement;
    it must have orthonormal columns of length ``p2`` and takes precedence
    over ``config.random_init_seed``.
    """
    if config is None:
        config = EstimationConfig()
    panel = _check_panel(panel)
    T, p1, p2 = panel.shape
    if min(p1, p2) < 2:
        raise InvalidInput("fit needs p1 >= 2 and p2 >= 2")
    if T <= config.k0 + config.m:
        raise InvalidInput(f"need T > k0 + m, got T={T}")
    notes: list[str] = []

    mean = panel.mean(axis=0)
    Y = panel - mean

    eig_m1 = sym_eigen(build_m1(Y, config.k0))
    eig_m2 = sym_eigen(build_m2(Y, config.k0))

    fixed_orders = config.r1 is not None and config.r2 is not None
    report_initial: WhitenessReport | None = None
    if fixed_orders:
        r1_init, r2_init = int(config.r1), int(config.r2)
        if r1_init > p1 or r2_init > p2:
            raise InvalidInput("fixed orders exceed panel dimensions")
    else:
        report_initial = diagonal_path_order(Y, eig_m1.vectors, eig_m2.vectors, config)
        r1_init, r2_init = _effective_orders(report_initial, config, notes, "initial")

    A1_initial = eig_m1.vectors[:, :r1_init]
    P1_initial = eig_m2.vectors[:, :r2_init]

    if P_init is not None:
        P_init = np.asarray(P_init, dtype=float)
        if P_init.ndim != 2 or P_init.shape[0] != p2:
            raise InvalidInput(f"P_init must be (p2, r), got {P_init.shape}")
        gram = P_init.T @ P_init
        if not np.allclose(gram, np.eye(P_init.shape[1]), atol=1e-8):
            raise InvalidInput("P_init columns must be orthonormal")
    elif config.random_init_seed is not None:
        P_init = random_orthonormal(p2, r2_init, config.random_init_seed)
    else:
        P_init = P1_initial
    iteration = iterate_loadings(
        Y, r1_init, r2_init, P_init, config.k0, config.eta, config.s0
    )

    report_final: WhitenessReport | None = None
    if fixed_orders:
        r1_hat, r2_hat = r1_init, r2_init
    else:
        report_final = diagonal_path_order(
            Y, iteration.gamma1, iteration.gamma2, config
        )
        r1_hat, r2_hat = _effective_orders(report_final, config, notes, "final")

    # repartition the refined bases at the re-estimated orders; the orders
    # are capped so that at least one complement direction remains
    r1_hat = min(r1_hat, p1 - 1)
    r2_hat = min(r2_hat, p2 - 1)
    A1 = iteration.gamma1[:, :r1_hat]
    B1 = iteration.gamma1[:, r1_hat:]
    P1 = iteration.gamma2[:, :r2_hat]
    Q1 = iteration.gamma2[:, r2_hat:]

    eig_s1 = sym_eigen(build_s1(Y, B1, Q1))
    eig_s2 = sym_eigen(build_s2(Y, B1, Q1))
    if config.k1 is not None:
        k1_hat = int(config.k1)
    else:
        k1_hat = _spike_count(eig_s1.values, r1_hat, p1, config.R_ratio)
    if config.k2 is not None:
        k2_hat = int(config.k2)
    else:
        k2_hat = _spike_count(eig_s2.values, r2_hat, p2, config.R_ratio)
    if p1 - k1_hat < r1_hat or p2 - k2_hat < r2_hat:
        raise InvalidInput(
            "spiked noise counts leave too few complement directions: "
            f"k1={k1_hat}, k2={k2_hat} against orders ({r1_hat}, {r2_hat})"
        )

    B2 = eig_s1.vectors[:, k1_hat:]
    Q2 = eig_s2.vectors[:, k2_hat:]
    B2_star = select_mitigation_subspace(B2, A1, r1_hat)
    Q2_star = select_mitigation_subspace(Q2, P1, r2_hat)
    X = recover_factors(Y, A1, P1, B2_star, Q2_star)

    return FactorFit(
        config=config,
        mean=mean,
        A1=A1,
        P1=P1,
        B1=B1,
        Q1=Q1,
        B2_star=B2_star,
        Q2_star=Q2_star,
        X=X,
        r1=r1_hat,
        r2=r2_hat,
        k1=k1_hat,
        k2=k2_hat,
        r1_initial=r1_init,
        r2_initial=r2_init,
        A1_initial=A1_initial,
        P1_initial=P1_initial,
        A1_first_pass=iteration.first_A,
        P1_first_pass=iteration.first_P,
        n_iterations=iteration.n_iterations,
        converged=iteration.converged,
        m1_eigenvalues=eig_m1.values,
        m2_eigenvalues=eig_m2.values,
        s1_eigenvalues=eig_s1.values,
        s2_eigenvalues=eig_s2.values,
        order_report_initial=report_initial,
        order_report_final=report_final,
        notes=tuple(notes),
    )


def _effective_orders(
    report: WhitenessReport,
    config: EstimationConfig,
    notes: list[str],
    stage: str,
) -> tuple[int, int]:
    """Apply the zero-order fallback policy to a selection report."""
    r1, r2 = report.r1, report.r2
    if r1 >= 1 and r2 >= 1:
        return r1, r2
    if not config.order_zero_fallback:
        raise OrderZero(
            f"{stage} order selection returned ({r1}, {r2}); "
            "set order_zero_fallback to proceed with one factor"
        )
    message = (
        f"{stage} order selection returned ({r1}, {r2}); "
        "falling back to one factor along the degenerate dimension"
    )
    warnings.warn(message)
    notes.append(message)
    return max(r1, 1), max(r2, 1)


def ratio_orders(fit_result: FactorFit) -> tuple[int, int]:
    """Eigenvalue-ratio order estimates from the unprojected moment matrices.

    The classical comparator: ``argmin`` of consecutive eigenvalue ratios of
    ``M1`` and ``M2`` over the first half of the spectrum.  It breaks down
    under strong spiked noise, which is what the test-based search repairs.
    """
    p1 = fit_result.m1_eigenvalues.size
    p2 = fit_result.m2_eigenvalues.size
    cap = fit_result.config.R_ratio
    R1 = max(1, p1 // 2) if cap is None else max(1, min(cap, p1 - 1))
    R2 = max(1, p2 // 2) if cap is None else max(1, min(cap, p2 - 1))
    r1 = ratio_min(fit_result.m1_eigenvalues, R1)
    r2 = ratio_min(fit_result.m2_eigenvalues, R2)
    return r1, r2
