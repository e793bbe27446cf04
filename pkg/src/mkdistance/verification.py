"""
Self checks of the transport solver: the golden translation example, agreement with the exhaustive oracle
on random small problems, and the metric axioms of the L2 Wasserstein distance.

The solver is injected, so a deliberately broken solver can be checked to fail.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mkdistance.measures import BalancedPair
from mkdistance.measures import DiscreteMeasure
from mkdistance.measures import make_balanced_pair
from mkdistance.oracle import oracle_solve
from mkdistance.transport import PivotRule
from mkdistance.transport import SolverOptions
from mkdistance.transport import SolverStatus
from mkdistance.transport import build_cost_matrix
from mkdistance.transport import solve_transport
from mkdistance.transport import verify_optimality

BAKERS = ((3, 2), (1, 5), (4, 6))
BAKER_OFFSET = (2, 1)
BAKER_COST = 15.0
TOLERANCE = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def baker_pair() -> BalancedPair:
    """
    Three unit loaves at the bakers, each wanted at a cafe two right and one down of its baker
    """
    bakers = np.array(BAKERS, dtype=np.float64)
    source = DiscreteMeasure(bakers, np.ones(len(bakers)))
    target = DiscreteMeasure(bakers + np.array(BAKER_OFFSET), np.ones(len(bakers)))
    return BalancedPair(source, target)


def random_instance(rng: np.random.Generator, max_points: int = 4, grid: int = 5) -> BalancedPair:
    """
    Random balanced pair of at most max_points points per side on a grid x grid lattice.
    Masses are small integers (zeros allowed) scaled to unit total, so degenerate problems are common.
    """
    m = int(rng.integers(1, max_points + 1))
    n = int(rng.integers(1, max_points + 1))
    supplies = rng.integers(0, 6, size=m).astype(np.float64)
    supplies[rng.integers(m)] += 1
    total = int(supplies.sum())
    cuts = np.sort(rng.integers(0, total + 1, size=n - 1))
    demands = np.diff(np.concatenate([[0], cuts, [total]])).astype(np.float64)
    source = DiscreteMeasure(_lattice_points(rng, m, grid), supplies)
    target = DiscreteMeasure(_lattice_points(rng, n, grid), demands)
    return make_balanced_pair(source, target)


def random_grid_measure(rng: np.random.Generator, grid: int = 5, max_points: int = 6) -> DiscreteMeasure:
    size = int(rng.integers(1, max_points + 1))
    masses = rng.random(size) + 0.05
    return DiscreteMeasure(_lattice_points(rng, size, grid), masses / masses.sum())


def check_baker(solver: Callable = solve_transport) -> CheckResult:
    plan = solver(baker_pair(), SolverOptions())
    passed = plan.status is SolverStatus.OPTIMAL and abs(plan.objective - BAKER_COST) <= TOLERANCE
    return CheckResult('baker', passed, f"objective {plan.objective!r}, expected {BAKER_COST}")


def check_oracle_equivalence(rng: np.random.Generator, instances: int = 500,
                             solver: Callable = solve_transport) -> CheckResult:
    """
    Solves random small problems with both pivot rules and compares against the exhaustive optimum.
    Bland's rule must finish within 10 * (m + n)^2 pivots and every plan must carry a passing certificate.
    """
    failures = []
    for number in range(instances):
        pair = random_instance(rng)
        m, n = len(pair.source), len(pair.target)
        expected = oracle_solve(pair)
        cost = build_cost_matrix(pair)
        for opts in (SolverOptions(), SolverOptions(PivotRule.BLAND, max_iterations=10 * (m + n) ** 2)):
            plan = solver(pair, opts)
            report = verify_optimality(plan, cost)
            if plan.status is not SolverStatus.OPTIMAL or abs(plan.objective - expected) > TOLERANCE \
                    or not report.passed:
                failures.append(f"instance {number} ({m}x{n}, {opts.pivot_rule.value}): objective "
                                f"{plan.objective!r}, oracle {expected!r}, status {plan.status.value}")
    return _result('oracle equivalence', instances, failures)


def check_metric_axioms(rng: np.random.Generator, triples: int = 200,
                        solver: Callable = solve_transport) -> CheckResult:
    """
    Identity, symmetry and the triangle inequality of the L2 Wasserstein distance on random measures
    """
    def distance(a, b):
        return math.sqrt(max(solver(make_balanced_pair(a, b), SolverOptions()).objective, 0.0))

    failures = []
    for number in range(triples):
        a, b, c = (random_grid_measure(rng) for _ in range(3))
        d_aa, d_ab, d_ba = distance(a, a), distance(a, b), distance(b, a)
        d_bc, d_ac = distance(b, c), distance(a, c)
        if d_aa > TOLERANCE:
            failures.append(f"triple {number}: d(a, a) = {d_aa!r}")
        if abs(d_ab - d_ba) > TOLERANCE:
            failures.append(f"triple {number}: d(a, b) = {d_ab!r} but d(b, a) = {d_ba!r}")
        if d_ac > d_ab + d_bc + TOLERANCE:
            failures.append(f"triple {number}: d(a, c) = {d_ac!r} > {d_ab!r} + {d_bc!r}")
    return _result('metric axioms', triples, failures)


def run_verification(seed: int = 0, instances: int = 500, triples: int = 200,
                     solver: Callable = solve_transport) -> list:
    """
    Runs all checks with a generator seeded by `seed`
    :return: one CheckResult per check
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    results = [
        check_baker(solver),
        check_oracle_equivalence(rng, instances, solver),
        check_metric_axioms(rng, triples, solver),
    ]
    for result in results:
        if result.passed:
            logging.info(f"{result.name}: passed ({result.detail})")
        else:
            logging.error(f"{result.name}: FAILED ({result.detail})")
    return results


def _result(name: str, total: int, failures: list) -> CheckResult:
    if failures:
        return CheckResult(name, False, f"{len(failures)} failure(s) over {total} cases, first: {failures[0]}")
    return CheckResult(name, True, f"{total} cases")


def _lattice_points(rng: np.random.Generator, count: int, grid: int) -> np.ndarray:
    cells = rng.choice(grid * grid, size=count, replace=False)
    return np.column_stack([cells % grid, cells // grid]).astype(np.float64)
