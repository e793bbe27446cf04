"""
Balanced transportation problem solved with the transportation simplex (MODI method).

The constraint matrix of the linear program is never built. A basis is a spanning tree of the bipartite
graph whose nodes are the m sources (node i) and the n targets (node m + j), and whose edges are the
basic cells (i, j). Duals are read off the tree with the root dual u_0 fixed at 0, reduced costs
c_ij - u_i - v_j select the entering cell, and the unique cycle it closes in the tree gives the pivot.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from mkdistance.exceptions import MKDistanceError
from mkdistance.measures import BalancedPair
from mkdistance.measures import check_balanced


class PivotRule(Enum):
    MOST_NEGATIVE = 'most_negative'
    BLAND = 'bland'


class SolverStatus(Enum):
    OPTIMAL = 'optimal'
    ITERATION_LIMIT = 'iteration_limit'


@dataclass(frozen=True)
class SolverOptions:
    """
    pivot_rule: entering cell selection. MOST_NEGATIVE falls back to BLAND after a long run of degenerate pivots
    max_iterations: pivot cap, None means 50 * (m + n) * max(m, n)
    dual_tol: reduced costs above -dual_tol count as nonnegative
    marginal_tol: absolute tolerance on row and column sums in the certificate
    """
    pivot_rule: PivotRule = PivotRule.MOST_NEGATIVE
    max_iterations: Optional[int] = None
    dual_tol: float = 1e-9
    marginal_tol: float = 1e-9

    def __post_init__(self):
        if not isinstance(self.pivot_rule, PivotRule):
            object.__setattr__(self, 'pivot_rule', PivotRule(self.pivot_rule))
        if self.max_iterations is not None and self.max_iterations < 1:
            raise MKDistanceError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if not (self.dual_tol > 0 and self.marginal_tol > 0):
            raise MKDistanceError("Solver tolerances must be positive.")

    def iteration_cap(self, m: int, n: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return 50 * (m + n) * max(m, n)


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Squared euclidean distances, entries[i, j] between source point i and target point j."""
    entries: np.ndarray

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """
    flows holds (i, j, mass) for every cell with positive mass, sorted by (i, j).
    basis holds all basic cells, degenerate zero-flow cells included.
    """
    flows: tuple
    objective: float
    duals_u: np.ndarray
    duals_v: np.ndarray
    iterations: int
    status: SolverStatus
    supplies: np.ndarray
    demands: np.ndarray
    basis: tuple = ()

    @property
    def m(self) -> int:
        return len(self.supplies)

    @property
    def n(self) -> int:
        return len(self.demands)

    def dense(self) -> np.ndarray:
        pi = np.zeros((self.m, self.n))
        for i, j, mass in self.flows:
            pi[i, j] = mass
        return pi


@dataclass(frozen=True)
class CertificateReport:
    max_dual_violation: float
    max_slackness_residual: float
    max_marginal_residual: float
    duality_gap: float
    min_reduced_cost: float
    passed: bool


def build_cost_matrix(pair: BalancedPair) -> CostMatrix:
    """
    Squared distances between every source and every target support point
    """
    diff = pair.source.coords[:, None, :] - pair.target.coords[None, :, :]
    entries = np.sum(diff * diff, axis=2)
    entries.setflags(write=False)
    return CostMatrix(entries)


def northwest_corner(supplies, demands) -> dict:
    """
    Initial basic feasible solution by the northwest corner rule.
    When a row and a column are exhausted at the same step the rule moves down only, so the next cell is
    entered with zero flow and the basis keeps exactly m + n - 1 cells.
    :param supplies: row masses
    :param demands: column masses
    :return: dict (i, j) -> flow over the basic cells, in the order they were filled
    """
    supplies = [float(s) for s in supplies]
    demands = [float(d) for d in demands]
    check_balanced(math.fsum(supplies), math.fsum(demands))
    m, n = len(supplies), len(demands)
    basis = {}
    i = j = 0
    while True:
        row_done = supplies[i] <= demands[j]
        flow = min(supplies[i], demands[j])
        basis[(i, j)] = flow
        supplies[i] -= flow
        demands[j] -= flow
        if i == m - 1 and j == n - 1:
            break
        if i < m - 1 and (row_done or j == n - 1):
            i += 1
        else:
            j += 1
    return basis


def duals_from_basis(basis, cost: np.ndarray, m: int, n: int, adjacency: Optional[list] = None):
    """
    Solves u_i + v_j = c_ij over the basic cells with u_0 = 0
    :param adjacency: the basis tree as built by _adjacency, rebuilt from basis when None
    :return: the pair of dual vectors (u, v)
    """
    if adjacency is None:
        adjacency = _adjacency(basis, m, n)
    u = np.zeros(m)
    v = np.zeros(n)
    seen = [False] * (m + n)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adjacency[node]:
            if seen[other]:
                continue
            seen[other] = True
            if node < m:
                v[other - m] = cost[node, other - m] - u[node]
            else:
                u[other] = cost[other, node - m] - v[node - m]
            queue.append(other)
    if not all(seen):
        raise MKDistanceError("The basis does not span all sources and targets.")
    return u, v


def reduced_costs(cost: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return cost - u[:, None] - v[None, :]


def basic_plan(basis: dict, supplies, demands, cost: CostMatrix, iterations: int = 0,
               status: SolverStatus = SolverStatus.ITERATION_LIMIT, duals: Optional[tuple] = None) -> TransportPlan:
    """
    Wraps a basis and its flows into a TransportPlan.
    Duals are read off the basis tree unless the caller already holds them.
    """
    supplies = np.asarray(supplies, dtype=np.float64)
    demands = np.asarray(demands, dtype=np.float64)
    if duals is None:
        u, v = duals_from_basis(basis, cost.entries, len(supplies), len(demands))
    else:
        u, v = duals
    flows = tuple((i, j, flow) for (i, j), flow in sorted(basis.items()) if flow > 0)
    objective = math.fsum(cost.entries[i, j] * flow for i, j, flow in flows)
    return TransportPlan(flows=flows, objective=objective, duals_u=u, duals_v=v, iterations=iterations,
                         status=status, supplies=supplies, demands=demands, basis=tuple(sorted(basis)))


def solve_transport(pair: BalancedPair, opts: Optional[SolverOptions] = None) -> TransportPlan:
    """
    Minimizes sum c_ij pi_ij over nonnegative plans whose marginals are the source and target masses
    :param pair: the balanced source and target measures
    :param opts: solver options, defaults when None
    :return: the final plan. Its status is ITERATION_LIMIT, not an exception, when the pivot cap is hit
    """
    return solve_transport_problem(pair.source.masses, pair.target.masses, build_cost_matrix(pair), opts)


def solve_transport_problem(supplies, demands, cost: CostMatrix, opts: Optional[SolverOptions] = None) -> TransportPlan:
    """
    Transportation simplex on explicit supplies, demands and costs
    """
    opts = opts or SolverOptions()
    m, n = len(supplies), len(demands)
    entries = cost.entries
    basis = northwest_corner(supplies, demands)
    adjacency = _adjacency(basis, m, n)
    cap = opts.iteration_cap(m, n)
    rule = opts.pivot_rule
    degenerate_limit = 3 * (m + n)
    degenerate_run = 0
    iterations = 0
    status = SolverStatus.ITERATION_LIMIT
    u, v = duals_from_basis(basis, entries, m, n, adjacency)
    while True:
        reduced = reduced_costs(entries, u, v)
        entering = _entering_cell(reduced, basis, rule, opts.dual_tol)
        if entering is None:
            status = SolverStatus.OPTIMAL
            break
        if iterations >= cap:
            break
        theta = _pivot(basis, adjacency, entering, m)
        _update_duals(u, v, adjacency, entering, float(reduced[entering]), m)
        iterations += 1
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
        if rule is PivotRule.MOST_NEGATIVE and degenerate_run > degenerate_limit:
            logging.debug(f"{degenerate_run} consecutive degenerate pivots, switching to Bland's rule")
            rule = PivotRule.BLAND

    if status is SolverStatus.ITERATION_LIMIT:
        logging.warning(f"Transportation simplex stopped at the iteration cap ({cap}) on a {m}x{n} problem; "
                        f"the plan is feasible but not proven optimal.")
    return basic_plan(basis, supplies, demands, cost, iterations, status, duals=(u, v))


def wasserstein2(pair: BalancedPair, opts: Optional[SolverOptions] = None) -> float:
    """
    L2 Wasserstein distance, the square root of the optimal squared-distance cost. Inputs should have unit mass.
    """
    return math.sqrt(max(solve_transport(pair, opts).objective, 0.0))


def verify_optimality(plan: TransportPlan, cost: CostMatrix, dual_tol: float = 1e-9,
                      marginal_tol: float = 1e-9) -> CertificateReport:
    """
    Checks a plan against the optimality conditions of the transportation problem.
    - dual feasibility: u_i + v_j <= c_ij everywhere
    - complementary slackness: c_ij = u_i + v_j wherever pi_ij > 0
    - primal feasibility: row and column sums match the supplies and demands
    - strong duality: objective = sum u_i f_i + sum v_j g_j
    :return: the residuals and whether all of them are within tolerance
    """
    entries = cost.entries
    u, v = plan.duals_u, plan.duals_v
    reduced = reduced_costs(entries, u, v)
    min_reduced = float(reduced.min())
    dual_violation = max(0.0, -min_reduced)

    slackness = max((abs(reduced[i, j]) for i, j, _ in plan.flows), default=0.0)

    pi = plan.dense()
    marginal = max(float(np.max(np.abs(pi.sum(axis=1) - plan.supplies))),
                   float(np.max(np.abs(pi.sum(axis=0) - plan.demands))))

    dual_objective = math.fsum(np.concatenate([u * plan.supplies, v * plan.demands]))
    gap = abs(plan.objective - dual_objective)

    passed = dual_violation <= dual_tol and slackness <= dual_tol and marginal <= marginal_tol and gap <= dual_tol
    return CertificateReport(max_dual_violation=dual_violation, max_slackness_residual=float(slackness),
                             max_marginal_residual=marginal, duality_gap=gap, min_reduced_cost=min_reduced,
                             passed=passed)


def _adjacency(basis, m: int, n: int) -> list:
    adjacency = [set() for _ in range(m + n)]
    for i, j in basis:
        adjacency[i].add(m + j)
        adjacency[m + j].add(i)
    return adjacency


def _entering_cell(reduced: np.ndarray, basis: dict, rule: PivotRule, dual_tol: float):
    reduced = reduced.copy()
    for cell in basis:
        reduced[cell] = 0.0
    if rule is PivotRule.BLAND:
        candidates = np.flatnonzero(reduced.ravel() < -dual_tol)
        if len(candidates) == 0:
            return None
        flat = candidates[0]
    else:
        flat = int(np.argmin(reduced))
        if reduced.flat[flat] >= -dual_tol:
            return None
    i, j = np.unravel_index(flat, reduced.shape)
    return int(i), int(j)


def _tree_path(adjacency: list, start: int, goal: int) -> list:
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other in adjacency[node]:
            if other not in parent:
                parent[other] = node
                queue.append(other)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def _pivot(basis: dict, adjacency: list, entering: tuple, m: int) -> float:
    """
    Moves theta units around the cycle closed by the entering cell and swaps it with the leaving cell.
    The cycle edges alternate -, +, ..., - starting at the entering row, ties on the leaving cell go to the
    smallest (i, j).
    :return: theta, zero for a degenerate pivot
    """
    i, j = entering
    path = _tree_path(adjacency, i, m + j)
    cells = [(a, b - m) if a < m else (b, a - m) for a, b in zip(path, path[1:])]
    donors = cells[0::2]
    receivers = cells[1::2]
    theta = min(basis[cell] for cell in donors)
    leaving = min(cell for cell in donors if basis[cell] == theta)
    for cell in donors:
        basis[cell] -= theta
    for cell in receivers:
        basis[cell] += theta
    del basis[leaving]
    basis[entering] = theta
    adjacency[leaving[0]].discard(m + leaving[1])
    adjacency[m + leaving[1]].discard(leaving[0])
    adjacency[i].add(m + j)
    adjacency[m + j].add(i)
    return theta


def _update_duals(u: np.ndarray, v: np.ndarray, adjacency: list, entering: tuple, reduced_cost: float, m: int):
    """
    Restores u_i + v_j = c_ij on the tree after a pivot without solving it again.
    Only the side of the tree hanging off the entering target moves: its potentials shift by the entering
    reduced cost, which leaves every other basic cell tight and makes the entering cell tight.
    """
    i, j = entering
    side = np.array(_subtree(adjacency, m + j, i))
    rows = side[side < m]
    cols = side[side >= m] - m
    u[rows] -= reduced_cost
    v[cols] += reduced_cost
    shift = u[0]
    if shift != 0:
        u -= shift
        v += shift


def _subtree(adjacency: list, start: int, cut: int) -> list:
    """Nodes reachable from start without crossing its tree edge to cut."""
    seen = {start, cut}
    nodes = [start]
    stack = [start]
    while stack:
        node = stack.pop()
        for other in adjacency[node]:
            if other not in seen:
                seen.add(other)
                nodes.append(other)
                stack.append(other)
    return nodes
