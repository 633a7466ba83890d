"""Factor forecasting and rolling out-of-sample evaluation.

Each recovered factor entry is modeled as a univariate AR(1) fitted by least
squares; multi-step forecasts chain the recursion in closed form.  Panel
forecasts map the forecast factor matrix back through the estimated loading
bases.  ``rolling_evaluate`` walks an expanding window over the sample,
refitting the whole pipeline at each origin, and averages Frobenius and
spectral forecast errors scaled by ``sqrt(p1 p2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EstimationConfig
from .errors import DegenerateSeries, InsufficientData, InvalidInput
from .estimate import FactorFit, fit

METHODS = ("proposed", "initial_only")


@dataclass(frozen=True)
class Ar1Coefficients:
    """Least-squares intercept and slope of ``x_t = c + phi x_{t-1} + e_t``."""

    intercept: float
    phi: float


def fit_ar1(x: np.ndarray) -> Ar1Coefficients:
    """Least-squares AR(1) fit of a scalar series.

    Regresses ``x_t`` on ``(1, x_{t-1})`` over ``t = 2..T``.  The lagged
    regressor must not be constant.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 3:
        raise InsufficientData(f"need at least 3 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("series contains non-finite entries")
    lag = x[:-1]
    lead = x[1:]
    lag_c = lag - lag.mean()
    denom = float(lag_c @ lag_c)
    scale = float(lag @ lag) + 1.0
    if denom <= 1e-28 * scale:
        raise DegenerateSeries("lagged regressor is constant")
    phi = float(lag_c @ (lead - lead.mean())) / denom
    intercept = float(lead.mean() - phi * lag.mean())
    if not (np.isfinite(phi) and np.isfinite(intercept)):
        raise DegenerateSeries("AR(1) coefficients are not finite")
    return Ar1Coefficients(intercept=intercept, phi=phi)


def chain_ar1(coef: Ar1Coefficients, x_last: float, h: int) -> float:
    """``h``-step-ahead point forecast from the final observation.

    ``x_{T+h|T} = c * sum_{s=0}^{h-1} phi^s + phi^h * x_T``; applying the
    one-step map ``h`` times gives the same value.
    """
    if h < 1:
        raise InvalidInput(f"h must be >= 1, got {h}")
    phi, c = coef.phi, coef.intercept
    geo = float(sum(phi**s for s in range(h)))
    return c * geo + phi**h * float(x_last)


def forecast_factors(X: np.ndarray, h: int) -> np.ndarray:
    """Forecast every factor entry ``h`` steps ahead, entry by entry."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise InvalidInput(f"X must have shape (T, r1, r2), got {X.shape}")
    T, r1, r2 = X.shape
    out = np.empty((r1, r2))
    for a in range(r1):
        for b in range(r2):
            coef = fit_ar1(X[:, a, b])
            out[a, b] = chain_ar1(coef, X[-1, a, b], h)
    return out


def forecast_panel(fit_result: FactorFit, h: int) -> np.ndarray:
    """Map the ``h``-step factor forecast back to panel space.

    Returns ``mean + A1 X_{T+h|T} P1'`` where ``mean`` is the entrywise
    average that was removed before estimation.
    """
    Xf = forecast_factors(fit_result.X, h)
    return fit_result.mean + fit_result.A1 @ Xf @ fit_result.P1.T


@dataclass(frozen=True)
class ForecastRow:
    """Average forecast errors for one method at one horizon."""

    method: str
    horizon: int
    fe_frobenius: float
    fe_spectral: float
    n_windows: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "horizon": self.horizon,
            "fe_frobenius": self.fe_frobenius,
            "fe_spectral": self.fe_spectral,
            "n_windows": self.n_windows,
        }


def rolling_evaluate(
    panel: np.ndarray,
    config: EstimationConfig | None = None,
    horizons: tuple[int, ...] = (1,),
    tau_start: int | None = None,
    tau_end: int | None = None,
    methods: tuple[str, ...] = ("proposed",),
    freeze_orders: bool = False,
) -> list[ForecastRow]:
    """Expanding-window out-of-sample forecast errors.

    For each origin ``tau`` the model is fitted on the first ``tau``
    observations and ``Y_{tau+h}`` is predicted, accumulating

    ``FE_F(h) = mean_tau ||Yhat - Y||_F / sqrt(p1 p2)``

    and the same average with the spectral norm.  Forecast targets run from
    ``tau_start + h`` up to ``tau_end`` (default ``T``), so horizon ``h``
    uses origins ``tau_start .. tau_end - h`` and contributes
    ``tau_end - h - tau_start + 1`` windows.  Methods: ``proposed`` runs the
    configured pipeline, ``initial_only`` forces ``s0 = 0`` so only the
    non-iterated estimate is used.  With ``freeze_orders`` the orders
    selected at the first origin are reused for all later ones.
    """
    if config is None:
        config = EstimationConfig()
    panel = np.asarray(panel, dtype=float)
    if panel.ndim != 3:
        raise InvalidInput(f"panel must have shape (T, p1, p2), got {panel.shape}")
    T, p1, p2 = panel.shape
    if not horizons or any(h < 1 for h in horizons):
        raise InvalidInput("horizons must be positive integers")
    if len(set(horizons)) != len(horizons):
        raise InvalidInput("horizons must be distinct")
    for method in methods:
        if method not in METHODS:
            raise InvalidInput(f"unknown method {method!r}, expected one of {METHODS}")
    h_max = max(horizons)
    if tau_end is None:
        tau_end = T
    if tau_start is None:
        tau_start = max(tau_end // 2, 20)
    if tau_end > T:
        raise InvalidInput(f"tau_end={tau_end} exceeds the sample length {T}")
    if not (1 <= tau_start <= tau_end - h_max):
        raise InvalidInput(
            f"need 1 <= tau_start <= tau_end - max(h), got "
            f"[{tau_start}, {tau_end}] with max(h)={h_max}"
        )
    scale = np.sqrt(p1 * p2)
    rows: list[ForecastRow] = []
    for method in methods:
        cfg = config if method == "proposed" else config.with_overrides(s0=0)
        sums_f = {h: 0.0 for h in horizons}
        sums_s = {h: 0.0 for h in horizons}
        counts = {h: 0 for h in horizons}
        frozen_cfg = None
        for tau in range(tau_start, tau_end):
            live = [h for h in horizons if tau + h <= tau_end]
            if not live:
                break
            window_cfg = frozen_cfg if frozen_cfg is not None else cfg
            fitted = fit(panel[:tau], window_cfg)
            if freeze_orders and frozen_cfg is None:
                frozen_cfg = cfg.with_overrides(r1=fitted.r1, r2=fitted.r2)
            for h in live:
                pred = forecast_panel(fitted, h)
                err = pred - panel[tau + h - 1]
                sums_f[h] += float(np.linalg.norm(err, "fro")) / scale
                sums_s[h] += float(np.linalg.norm(err, 2)) / scale
                counts[h] += 1
        for h in horizons:
            rows.append(
                ForecastRow(
                    method=method,
                    horizon=h,
                    fe_frobenius=sums_f[h] / counts[h],
                    fe_spectral=sums_s[h] / counts[h],
                    n_windows=counts[h],
                )
            )
    return rows
