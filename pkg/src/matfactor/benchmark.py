"""Monte-Carlo harness: repeat simulate-and-fit over scenario grids.

Every replication keeps the scenario's design draw fixed and simulates
fresh innovations, then runs two estimation chains.  The selection chain is
fully data driven: order search on the raw moment eigenbases, projection
refinement started from the true back space, and a re-search on the refined
bases; it scores the order hits together with the eigenvalue-ratio
comparator.  The accuracy chain runs at the true orders with the same
oracle start, so subspace distances and the common-component error isolate
estimation accuracy from selection mistakes.  Results aggregate to
``(scenario, T, metric, mean, sd)`` rows, with the standard deviation taken
across replications.

Replications can be distributed over a thread pool; every replication owns
a deterministic seed, so results do not depend on the worker count.  The
``MATFACTOR_THREADS`` environment variable caps the pool.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EstimationConfig
from .dgp import SimScenario, common_component, simulate_panel
from .errors import InvalidInput, ParseError
from .estimate import (
    build_m1,
    build_m2,
    build_s1,
    build_s2,
    iterate_loadings,
    ratio_min,
    recover_factors,
    select_mitigation_subspace,
)
from .subspace import projection_distance, sym_eigen
from .wntest import diagonal_path_order

METRICS = (
    "order_hit_refined",
    "order_hit_initial",
    "order_hit_ratio",
    "space_rows_refined",
    "space_rows_initial",
    "space_rows_first_pass",
    "space_cols_refined",
    "space_cols_initial",
    "space_cols_first_pass",
    "common_dx",
    "spike_hit_rows",
    "spike_hit_cols",
)

# Default settings of the harness.  One order search accepts on the order
# of a hundred block tests, so the per-test level sits far below the
# library default to keep the family-wise acceptance rate of a correct
# search high (at 0.05 the search caps out near 0.86 even when every
# block is truly white).
HARNESS_CONFIG = EstimationConfig(alpha=0.005)


@dataclass(frozen=True)
class BenchmarkRow:
    """One aggregated metric for one scenario."""

    scenario: str
    T: int
    metric: str
    mean: float
    sd: float

    def to_csv_line(self) -> str:
        return f"{self.scenario},{self.T},{self.metric},{self.mean:.17g},{self.sd:.17g}"


def resolve_threads(requested: int | None = None) -> int:
    """Worker count: requested (or cpu count), capped by MATFACTOR_THREADS."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("MATFACTOR_THREADS")
    if cap is not None:
        try:
            cap_n = int(cap)
        except ValueError as exc:
            raise InvalidInput(f"MATFACTOR_THREADS must be an integer: {cap!r}") from exc
        if cap_n < 1:
            raise InvalidInput("MATFACTOR_THREADS must be >= 1")
        n = min(n, cap_n)
    return max(1, n)


def _replicate(scenario: SimScenario, rep: int, config: EstimationConfig) -> dict:
    """Run one replication: selection chain, accuracy chain, all metrics."""
    scen = scenario
    panel, truth = simulate_panel(scen, replication=rep)
    Y = panel - panel.mean(axis=0)
    T, p1, p2 = Y.shape
    true_orders = (scen.r1, scen.r2)
    P_true = np.linalg.svd(truth.R1, full_matrices=False)[0]

    eig_m1 = sym_eigen(build_m1(Y, config.k0))
    eig_m2 = sym_eigen(build_m2(Y, config.k0))

    # selection chain: data-driven search, refinement at the selected
    # orders, re-search on the refined bases
    report_initial = diagonal_path_order(Y, eig_m1.vectors, eig_m2.vectors, config)
    initial_orders = (report_initial.r1, report_initial.r2)
    search = iterate_loadings(
        Y,
        max(initial_orders[0], 1),
        max(initial_orders[1], 1),
        P_true,
        config.k0,
        config.eta,
        config.s0,
    )
    report_final = diagonal_path_order(Y, search.gamma1, search.gamma2, config)
    refined_orders = (report_final.r1, report_final.r2)
    ratio_hit = (
        ratio_min(eig_m1.values, max(1, p1 // 2)),
        ratio_min(eig_m2.values, max(1, p2 // 2)),
    ) == true_orders

    # accuracy chain: estimation at the true orders
    est = iterate_loadings(
        Y, scen.r1, scen.r2, P_true, config.k0, config.eta, config.s0
    )
    B1 = est.gamma1[:, scen.r1 :]
    Q1 = est.gamma2[:, scen.r2 :]
    eig_s1 = sym_eigen(build_s1(Y, B1, Q1))
    eig_s2 = sym_eigen(build_s2(Y, B1, Q1))
    k1_hat = ratio_min(eig_s1.values, max(1, min(p1 - scen.r1 - 1, p1 // 2)))
    k2_hat = ratio_min(eig_s2.values, max(1, min(p2 - scen.r2 - 1, p2 // 2)))

    # factor recovery behind the true spike counts
    B2_star = select_mitigation_subspace(eig_s1.vectors[:, scen.k1 :], est.A, scen.r1)
    Q2_star = select_mitigation_subspace(eig_s2.vectors[:, scen.k2 :], est.P, scen.r2)
    X = recover_factors(Y, est.A, est.P, B2_star, Q2_star)
    recon = np.einsum("ia,tab,jb->tij", est.A, X, est.P, optimize=True)
    common = common_component(truth)
    target = common - common.mean(axis=0)
    scale = np.sqrt(scen.p1 * scen.p2)
    dx = float(
        sum(np.linalg.norm(recon[t] - target[t], 2) for t in range(T)) / (T * scale)
    )
    return {
        "order_hit_refined": float(refined_orders == true_orders),
        "order_hit_initial": float(initial_orders == true_orders),
        "order_hit_ratio": float(ratio_hit),
        "space_rows_refined": projection_distance(est.A, truth.L1),
        "space_rows_initial": projection_distance(
            eig_m1.vectors[:, : scen.r1], truth.L1
        ),
        "space_rows_first_pass": projection_distance(est.first_A, truth.L1),
        "space_cols_refined": projection_distance(est.P, truth.R1),
        "space_cols_initial": projection_distance(
            eig_m2.vectors[:, : scen.r2], truth.R1
        ),
        "space_cols_first_pass": projection_distance(est.first_P, truth.R1),
        "common_dx": dx,
        "spike_hit_rows": float(k1_hat == scen.k1),
        "spike_hit_cols": float(k2_hat == scen.k2),
    }


def run_scenario(
    scenario: SimScenario,
    name: str,
    replications: int,
    config: EstimationConfig | None = None,
    threads: int | None = None,
) -> list[BenchmarkRow]:
    """All replications of one scenario, aggregated per metric."""
    if replications < 1:
        raise InvalidInput("replications must be >= 1")
    if config is None:
        config = HARNESS_CONFIG
    n_workers = resolve_threads(threads)
    results: list[dict | None] = [None] * replications
    if n_workers == 1:
        for rep in range(replications):
            results[rep] = _replicate(scenario, rep, config)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = {
                pool.submit(_replicate, scenario, rep, config): rep
                for rep in range(replications)
            }
            for future, rep in futures.items():
                results[rep] = future.result()
    rows = []
    for metric in METRICS:
        values = np.array([res[metric] for res in results])
        sd = float(values.std(ddof=1)) if replications > 1 else 0.0
        rows.append(
            BenchmarkRow(
                scenario=name,
                T=scenario.T,
                metric=metric,
                mean=float(values.mean()),
                sd=sd,
            )
        )
    return rows


def run_grid(
    grid: list[tuple[str, SimScenario]],
    replications: int,
    config: EstimationConfig | None = None,
    threads: int | None = None,
) -> list[BenchmarkRow]:
    """Run every named scenario in order and concatenate the rows."""
    rows: list[BenchmarkRow] = []
    for name, scenario in grid:
        rows.extend(run_scenario(scenario, name, replications, config, threads))
    return rows


def read_grid(path: str | Path) -> tuple[list[tuple[str, SimScenario]], int | None]:
    """Parse a grid JSON file: scenario list plus optional replication count.

    Format: ``{"replications": 100, "scenarios": [{...}, ...]}`` where each
    scenario object holds ``SimScenario`` fields and an optional ``name``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid grid JSON: {exc}") from exc
    if not isinstance(data, dict) or "scenarios" not in data:
        raise ParseError('grid JSON must be an object with a "scenarios" list')
    entries = data["scenarios"]
    if not isinstance(entries, list) or not entries:
        raise ParseError('"scenarios" must be a non-empty list')
    grid: list[tuple[str, SimScenario]] = []
    for idx, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ParseError(f"scenario {idx} must be an object")
        entry = dict(entry)
        name = entry.pop("name", None)
        scenario = SimScenario.from_dict(entry)
        if name is None:
            name = (
                f"p{scenario.p1}x{scenario.p2}"
                f"_d{scenario.delta1:g}-{scenario.delta2:g}_T{scenario.T}"
            )
        grid.append((str(name), scenario))
    replications = data.get("replications")
    if replications is not None and (
        not isinstance(replications, int) or replications < 1
    ):
        raise ParseError('"replications" must be a positive integer')
    return grid, replications


def write_rows(rows: list[BenchmarkRow], path: str | Path) -> None:
    lines = ["scenario,T,metric,mean,sd"]
    lines.extend(row.to_csv_line() for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")
