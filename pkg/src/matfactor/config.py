"""Estimation settings shared by the estimators, tests and the CLI."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .errors import InvalidInput

TESTS = ("auto", "ljung_box", "tsay_rank", "cyz_max")
THRESHOLD_FORMS = ("exact", "asymptotic")
COLUMN_STOPS = ("accept", "reject")


@dataclass(frozen=True)
class EstimationConfig:
    """Tuning constants for order selection and loading estimation.

    ``k0``
        number of autocovariance lags accumulated in the moment matrices.
    ``m``
        number of lags examined by the white-noise tests.
    ``alpha``
        nominal level of each white-noise test.
    ``eta``
        subspace-distance tolerance for stopping the projection iteration.
    ``s0``
        maximum number of refinement passes; ``0`` keeps the estimate from
        the initial projection only.
    ``epsilon``
        when a vectorized block has dimension ``d >= T`` it is reduced to its
        top-left ``min(p, floor(sqrt(epsilon * T)))`` square before testing.
    ``test``
        which white-noise test drives order selection.  ``auto`` picks
        ``ljung_box`` when ``p1 * p2 <= 36`` and ``T >= 4 * p1 * p2`` and the
        rank-based max test otherwise.
    ``threshold_form``
        how the extreme-value threshold of the rank test is evaluated:
        ``exact`` solves the limiting max-of-|N(0,1)| quantile, while
        ``asymptotic`` uses the first-order Gumbel normalizing constants.
    ``column_stop``
        stopping rule of the column back-search in order selection: stop at
        the first acceptance (``accept``, symmetric with the row search) or
        at the first rejection (``reject``).
    ``n_boot`` / ``seed``
        multiplier-bootstrap settings for the max-correlation test.
    ``R_ratio``
        cap on the index range searched by the eigenvalue-ratio estimators;
        ``None`` uses ``floor(p / 2)`` for factor orders and ``p - r - 1``
        capped at ``floor(p / 2)`` for the spiked noise counts.
    ``r1`` / ``r2``
        optional fixed factor orders; both set skips order selection.
    ``k1`` / ``k2``
        optional fixed spiked noise counts; when set they replace the
        eigenvalue-ratio estimates, mirroring scree-plot choices on real
        data.
    ``order_zero_fallback``
        when order selection returns zero factors along a dimension, fall
        back to one factor with a warning instead of raising.
    ``random_init_seed``
        if set, the projection iteration starts from a seeded random
        orthonormal basis instead of the data-driven initial estimate.
    """

    k0: int = 2
    m: int = 10
    alpha: float = 0.05
    eta: float = 1e-4
    s0: int = 2
    epsilon: float = 0.9
    test: str = "auto"
    threshold_form: str = "exact"
    column_stop: str = "accept"
    n_boot: int = 500
    seed: int = 0
    R_ratio: int | None = None
    r1: int | None = None
    r2: int | None = None
    k1: int | None = None
    k2: int | None = None
    order_zero_fallback: bool = True
    random_init_seed: int | None = None

    def __post_init__(self) -> None:
        if self.k0 < 1:
            raise InvalidInput("k0 must be >= 1")
        if self.m < 1:
            raise InvalidInput("m must be >= 1")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidInput("alpha must lie in (0, 1)")
        if not (self.eta > 0.0):
            raise InvalidInput("eta must be positive")
        if self.s0 < 0:
            raise InvalidInput("s0 must be >= 0")
        if not (0.0 < self.epsilon < 1.0):
            raise InvalidInput("epsilon must lie in (0, 1)")
        if self.test not in TESTS:
            raise InvalidInput(f"test must be one of {TESTS}")
        if self.threshold_form not in THRESHOLD_FORMS:
            raise InvalidInput(f"threshold_form must be one of {THRESHOLD_FORMS}")
        if self.column_stop not in COLUMN_STOPS:
            raise InvalidInput(f"column_stop must be one of {COLUMN_STOPS}")
        if self.n_boot < 1:
            raise InvalidInput("n_boot must be >= 1")
        if self.R_ratio is not None and self.R_ratio < 1:
            raise InvalidInput("R_ratio must be >= 1 when set")
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise InvalidInput(f"{name} must be >= 1 when fixed")
        for name in ("k1", "k2"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InvalidInput(f"{name} must be >= 0 when fixed")

    def with_overrides(self, **kwargs) -> "EstimationConfig":
        unknown = set(kwargs) - set(self.__dataclass_fields__)
        if unknown:
            raise InvalidInput(f"unknown config fields: {sorted(unknown)}")
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimationConfig":
        return cls().with_overrides(**d)


KNOWN_TESTS = ("ljung_box", "tsay_rank", "cyz_max")


def resolve_test(test: str, p1: int, p2: int, T: int) -> str:
    """Map the ``auto`` test choice to a concrete test for a given panel."""
    if test != "auto":
        if test not in KNOWN_TESTS:
            raise InvalidInput(f"unknown test: {test!r}")
        return test
    if p1 * p2 <= 36 and T >= 4 * p1 * p2:
        return "ljung_box"
    return "tsay_rank"
