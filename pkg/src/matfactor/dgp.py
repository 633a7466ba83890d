"""Simulation of matrix-valued time series with spiked Kronecker noise.

Panels are generated as ``Y_t = L1 F_t R1' + E_t`` where the factor matrix
``F_t`` follows a diagonal matrix autoregression and the noise is
``E_t = L2 xi_t R2'`` with iid standard normal ``xi_t``, so that
``Cov(vec(E_t)) = (R2 R2') kron (L2 L2')``.  The first ``k1`` (``k2``)
columns of the noise mixers carry stronger scaling than the rest, producing
``k1`` and ``k2`` diverging eigenvalues in the row and column noise
covariances.

All randomness flows through counter-based Philox generators.  The design
matrices (L1, R1, L2, R2 and the diagonals of Phi and Psi, drawn in that
order) come from a stream keyed by ``(seed, 0)`` and are therefore shared
by every replication of a scenario; the time paths (factor innovations,
then noise innovations) come from a stream keyed by ``(seed, 1 +
replication)``.  Arrays fill in C order, so a scenario reproduces the same
panel bit for bit on any platform with the same numpy generator version.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInput

DEFAULT_BURN_IN = 100


@dataclass(frozen=True)
class SimScenario:
    """Complete description of one simulated panel."""

    p1: int
    p2: int
    r1: int
    r2: int
    k1: int
    k2: int
    delta1: float
    delta2: float
    T: int
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 1234

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "r1", "r2", "T"):
            if getattr(self, name) < 1:
                raise InvalidInput(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.r1 > self.p1 or self.r2 > self.p2:
            raise InvalidInput("factor orders cannot exceed panel dimensions")
        if not (0 <= self.k1 <= self.p1 and 0 <= self.k2 <= self.p2):
            raise InvalidInput("spike counts must lie in [0, p]")
        for name in ("delta1", "delta2"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or not np.isfinite(v):
                raise InvalidInput(f"{name} must lie in [0, 1], got {v}")
        if self.burn_in < 0:
            raise InvalidInput("burn_in must be >= 0")
        if self.seed < 0:
            raise InvalidInput("seed must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidInput(f"unknown scenario fields: {sorted(extra)}")
        missing = {f for f in known if f not in d and f not in ("burn_in", "seed")}
        if missing:
            raise InvalidInput(f"missing scenario fields: {sorted(missing)}")
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    """Everything drawn while simulating a panel, kept for evaluation."""

    L1: np.ndarray
    R1: np.ndarray
    L2: np.ndarray
    R2: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    F: np.ndarray


def make_loading(p: int, r: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a ``p x r`` loading matrix with factor strength ``p^(1-delta)``.

    Entries are uniform on ``[-2, 2]`` divided by ``p**(delta/2)``; with
    ``delta = 0`` the factors are pervasive, larger values weaken them.
    """
    if p < 1 or r < 1:
        raise InvalidInput(f"need p >= 1 and r >= 1, got p={p}, r={r}")
    return rng.uniform(-2.0, 2.0, size=(p, r)) / p ** (delta / 2.0)


def make_noise_mixer(p: int, k: int, delta2: float, rng: np.random.Generator) -> np.ndarray:
    """Draw a ``p x p`` noise mixing matrix with ``k`` spiked columns.

    All entries start uniform on ``[-2, 2]``; the first ``k`` columns are
    divided by ``p**(delta2/2)`` and the remaining columns by ``p``, so the
    implied covariance has ``k`` eigenvalues of order ``p**(1-delta2)`` and a
    bounded bulk.
    """
    if p < 1:
        raise InvalidInput(f"need p >= 1, got p={p}")
    if not (0 <= k <= p):
        raise InvalidInput(f"need 0 <= k <= p, got k={k}")
    M = rng.uniform(-2.0, 2.0, size=(p, p))
    M[:, :k] /= p ** (delta2 / 2.0)
    M[:, k:] /= float(p)
    return M


def simulate_factor_var(
    r1: int,
    r2: int,
    T: int,
    burn_in: int,
    rng: np.random.Generator,
    phi: np.ndarray | None = None,
    psi: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate the factor recursion ``F_t = Phi F_{t-1} Psi' + N_t``.

    ``Phi`` and ``Psi`` are diagonal with entries uniform on ``[0.5, 0.9]``
    unless explicit diagonals are supplied, and the innovations ``N_t`` have
    iid standard normal entries.  The chain starts from zero and the first
    ``burn_in`` steps are discarded.  Returns ``(F, phi, psi)`` where ``F``
    has shape ``(T, r1, r2)``.
    """
    if r1 < 1 or r2 < 1 or T < 1:
        raise InvalidInput("r1, r2 and T must all be >= 1")
    if phi is None:
        phi = rng.uniform(0.5, 0.9, size=r1)
    else:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (r1,):
            raise InvalidInput(f"phi must have shape ({r1},)")
    if psi is None:
        psi = rng.uniform(0.5, 0.9, size=r2)
    else:
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (r2,):
            raise InvalidInput(f"psi must have shape ({r2},)")
    innov = rng.standard_normal((burn_in + T, r1, r2))
    F = np.zeros((T, r1, r2))
    # diagonal Phi, Psi: the recursion acts entrywise as phi_i * psi_j
    decay = np.outer(phi, psi)
    state = np.zeros((r1, r2))
    for t in range(burn_in + T):
        state = decay * state + innov[t]
        if t >= burn_in:
            F[t - burn_in] = state
    return F, phi, psi


def _stream(seed: int, substream: int) -> np.random.Generator:
    """Philox stream for one ``(seed, substream)`` pair."""
    key = np.array([seed, substream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_panel(
    scenario: SimScenario,
    replication: int = 0,
    zero_noise: bool = False,
    zero_common: bool = False,
) -> tuple[np.ndarray, GroundTruth]:
    """Generate a panel ``(T, p1, p2)`` together with its ground truth.

    The loadings, mixers and autoregressive diagonals are drawn once per
    scenario (stream ``(seed, 0)``); ``replication`` selects an independent
    stream ``(seed, 1 + replication)`` for the factor and noise innovations,
    so repeated calls share the design but not the time paths.
    ``zero_noise`` and ``zero_common`` zero out the corresponding component
    after all random draws are made, so the remaining component is identical
    to the one embedded in the full panel for the same arguments.
    """
    s = scenario
    if replication < 0:
        raise InvalidInput("replication must be >= 0")
    design = _stream(s.seed, 0)
    L1 = make_loading(s.p1, s.r1, s.delta1, design)
    R1 = make_loading(s.p2, s.r2, s.delta1, design)
    L2 = make_noise_mixer(s.p1, s.k1, s.delta2, design)
    R2 = make_noise_mixer(s.p2, s.k2, s.delta2, design)
    phi = design.uniform(0.5, 0.9, size=s.r1)
    psi = design.uniform(0.5, 0.9, size=s.r2)
    paths = _stream(s.seed, 1 + replication)
    F, phi, psi = simulate_factor_var(s.r1, s.r2, s.T, s.burn_in, paths, phi, psi)
    xi = paths.standard_normal((s.T, s.p1, s.p2))
    if zero_noise:
        L2 = np.zeros_like(L2)
        R2 = np.zeros_like(R2)
    if zero_common:
        L1 = np.zeros_like(L1)
        R1 = np.zeros_like(R1)
    common = np.einsum("ia,tab,jb->tij", L1, F, R1, optimize=True)
    noise = np.einsum("ia,tab,jb->tij", L2, xi, R2, optimize=True)
    Y = common + noise
    truth = GroundTruth(L1=L1, R1=R1, L2=L2, R2=R2, phi=phi, psi=psi, F=F)
    return Y, truth


def common_component(truth: GroundTruth) -> np.ndarray:
    """The signal part ``L1 F_t R1'`` for every ``t``, shape ``(T, p1, p2)``."""
    return np.einsum("ia,tab,jb->tij", truth.L1, truth.F, truth.R1, optimize=True)


def noise_covariance(truth: GroundTruth) -> np.ndarray:
    """Population covariance of ``vec(E_t)`` (column-major), as a Kronecker product."""
    sigma_r = truth.L2 @ truth.L2.T
    sigma_c = truth.R2 @ truth.R2.T
    return np.kron(sigma_c, sigma_r)
