"""Reading and writing panels, scenarios, fits and reports.

Panels travel as long-format CSV with the exact header ``t,row,col,value``
and 1-based integer indices.  Values are written with 17 significant digits
so a write/read round trip reproduces every float bit for bit.  Missing
``(t, row, col)`` triples (and explicit NaN values) are filled by
exponential-smoothing imputation along each entry's time series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EstimationConfig
from .dgp import GroundTruth, SimScenario
from .errors import AllMissing, DuplicateEntry, InvalidInput, ParseError

PANEL_HEADER = "t,row,col,value"
SMOOTHING_ALPHA = 0.3


def impute_es(x: np.ndarray, alpha: float = SMOOTHING_ALPHA) -> np.ndarray:
    """Fill NaN gaps with an exponentially smoothed level.

    The level follows ``l_t = alpha * x_t + (1 - alpha) * l_{t-1}`` across
    observed points; each gap takes the level reached at the last observed
    point, and leading gaps take the first observed value.
    """
    x = np.asarray(x, dtype=float).ravel().copy()
    if not (0.0 < alpha <= 1.0):
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha}")
    observed = ~np.isnan(x)
    if not observed.any():
        raise AllMissing("series contains no observed values")
    first = int(np.argmax(observed))
    x[:first] = x[first]
    level = x[first]
    for t in range(first, x.size):
        if np.isnan(x[t]):
            x[t] = level
        else:
            level = alpha * x[t] + (1.0 - alpha) * level
    return x


@dataclass(frozen=True)
class LoadedPanel:
    """A panel read from disk plus how many entries had to be imputed."""

    panel: np.ndarray
    n_imputed: int


def write_panel(panel: np.ndarray, path: str | Path) -> None:
    """Write a ``(T, p1, p2)`` array as long-format CSV, 1-based indices."""
    panel = np.asarray(panel, dtype=float)
    if panel.ndim != 3:
        raise InvalidInput(f"panel must have shape (T, p1, p2), got {panel.shape}")
    T, p1, p2 = panel.shape
    lines = [PANEL_HEADER]
    for t in range(T):
        for i in range(p1):
            for j in range(p2):
                lines.append(f"{t + 1},{i + 1},{j + 1},{panel[t, i, j]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_panel(path: str | Path) -> LoadedPanel:
    """Parse a long-format CSV panel, imputing missing entries.

    Dimensions are inferred from the largest indices seen.  Triples absent
    from the file, or present with a NaN value, count as missing and are
    imputed; repeated triples raise ``DuplicateEntry`` and malformed lines
    raise ``ParseError`` with their line number.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != PANEL_HEADER:
        raise ParseError(f"expected header {PANEL_HEADER!r}")
    records: dict[tuple[int, int, int], float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            t, i, j = int(parts[0]), int(parts[1]), int(parts[2])
            value = float(parts[3])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if t < 1 or i < 1 or j < 1:
            raise ParseError(f"line {lineno}: indices must be >= 1")
        key = (t, i, j)
        if key in records:
            raise DuplicateEntry(f"line {lineno}: duplicate triple {key}")
        records[key] = value
    if not records:
        raise ParseError("panel file contains no data rows")
    T = max(k[0] for k in records)
    p1 = max(k[1] for k in records)
    p2 = max(k[2] for k in records)
    panel = np.full((T, p1, p2), np.nan)
    for (t, i, j), value in records.items():
        panel[t - 1, i - 1, j - 1] = value
    n_missing = int(np.isnan(panel).sum())
    if n_missing:
        for i in range(p1):
            for j in range(p2):
                series = panel[:, i, j]
                if np.isnan(series).any():
                    panel[:, i, j] = impute_es(series)
    return LoadedPanel(panel=panel, n_imputed=n_missing)


def read_scenario(path: str | Path) -> SimScenario:
    """Load a simulation scenario from a JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid scenario JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("scenario JSON must be an object")
    return SimScenario.from_dict(data)


def write_scenario(scenario: SimScenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2) + "\n")


def read_config(path: str | Path) -> EstimationConfig:
    """Load estimation-config overrides from a JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid config JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("config JSON must be an object")
    return EstimationConfig.from_dict(data)


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    """Serialize simulation ground truth (loadings, mixers, factor paths)."""
    payload = {
        "L1": truth.L1.tolist(),
        "R1": truth.R1.tolist(),
        "L2": truth.L2.tolist(),
        "R2": truth.R2.tolist(),
        "phi": truth.phi.tolist(),
        "psi": truth.psi.tolist(),
        "F": truth.F.tolist(),
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def read_truth(path: str | Path) -> GroundTruth:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid truth JSON: {exc}") from exc
    try:
        return GroundTruth(
            L1=np.asarray(data["L1"], dtype=float),
            R1=np.asarray(data["R1"], dtype=float),
            L2=np.asarray(data["L2"], dtype=float),
            R2=np.asarray(data["R2"], dtype=float),
            phi=np.asarray(data["phi"], dtype=float),
            psi=np.asarray(data["psi"], dtype=float),
            F=np.asarray(data["F"], dtype=float),
        )
    except KeyError as exc:
        raise ParseError(f"truth JSON missing field {exc}") from exc


FACTORS_HEADER = "t,i,j,value"


def write_factors_csv(X: np.ndarray, path: str | Path) -> None:
    """Write a factor series ``(T, r1, r2)`` as long-format CSV."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise InvalidInput(f"factor series must have shape (T, r1, r2), got {X.shape}")
    T, r1, r2 = X.shape
    lines = [FACTORS_HEADER]
    for t in range(T):
        for a in range(r1):
            for b in range(r2):
                lines.append(f"{t + 1},{a + 1},{b + 1},{X[t, a, b]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")
