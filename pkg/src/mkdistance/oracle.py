"""
Exhaustive solvers for tiny transportation problems, used to check the simplex.

Every vertex of the transportation polytope is the basic solution of some spanning tree of the bipartite
source/target graph, so enumerating all (m + n - 1)-subsets of cells that form a tree and keeping the
cheapest feasible one gives the exact optimum.
"""
import logging
import math
from itertools import combinations
from itertools import permutations

import numpy as np

from mkdistance.exceptions import OracleMismatch
from mkdistance.exceptions import TooLarge
from mkdistance.measures import BalancedPair
from mkdistance.measures import check_balanced
from mkdistance.transport import build_cost_matrix

MAX_CELLS = 20
FEASIBILITY_TOL = 1e-12
AGREEMENT_TOL = 1e-9


def oracle_solve(pair: BalancedPair) -> float:
    """
    Exact optimum by enumeration of spanning-tree bases. When both sides have n points of equal mass the result
    is cross-checked against the best permutation matching.
    :param pair: a balanced pair with m * n <= 20
    :return: the optimal objective
    """
    supplies, demands = pair.source.masses, pair.target.masses
    cost = build_cost_matrix(pair).entries
    objective = enumerate_bases(supplies, demands, cost)
    if _uniform(supplies, demands):
        matching = oracle_assignment(pair)
        if abs(matching - objective) > AGREEMENT_TOL:
            error_msg = f"Basis enumeration gives {objective!r} but permutation matching gives {matching!r}."
            logging.error(error_msg)
            raise OracleMismatch(error_msg)
    return objective


def oracle_assignment(pair: BalancedPair) -> float:
    """
    Cheapest of the n! one-to-one matchings, valid when all masses are equal and m = n
    """
    cost = build_cost_matrix(pair).entries
    n = cost.shape[0]
    _check_size(n, cost.shape[1])
    mass = pair.source.masses[0]
    rows = np.arange(n)
    return min(math.fsum(cost[rows, list(perm)] * mass) for perm in permutations(range(n)))


def enumerate_bases(supplies, demands, cost: np.ndarray) -> float:
    supplies = np.asarray(supplies, dtype=np.float64)
    demands = np.asarray(demands, dtype=np.float64)
    m, n = len(supplies), len(demands)
    _check_size(m, n)
    check_balanced(math.fsum(supplies), math.fsum(demands))
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = math.inf
    for tree in combinations(cells, m + n - 1):
        if not _is_spanning_tree(tree, m, n):
            continue
        flows = _tree_flows(tree, supplies, demands)
        if min(flows.values()) < -FEASIBILITY_TOL:
            continue
        best = min(best, math.fsum(cost[i, j] * max(flow, 0.0) for (i, j), flow in flows.items()))
    return best


def _check_size(m: int, n: int):
    if m * n > MAX_CELLS:
        error_msg = f"The oracle only handles m * n <= {MAX_CELLS}, got a {m}x{n} problem."
        logging.error(error_msg)
        raise TooLarge(error_msg)


def _uniform(supplies: np.ndarray, demands: np.ndarray) -> bool:
    if len(supplies) != len(demands):
        return False
    masses = np.concatenate([supplies, demands])
    return bool(np.all(np.abs(masses - masses[0]) <= 1e-12 * max(abs(masses[0]), 1.0)))


def _is_spanning_tree(tree, m: int, n: int) -> bool:
    parent = list(range(m + n))

    def find(node):
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    for i, j in tree:
        a, b = find(i), find(m + j)
        if a == b:
            return False
        parent[a] = b
    return True


def _tree_flows(tree, supplies: np.ndarray, demands: np.ndarray) -> dict:
    """
    The unique flow on a spanning tree meeting all marginals, found by peeling leaves
    """
    m = len(supplies)
    remaining = list(supplies) + list(demands)
    adjacency = {node: set() for node in range(len(remaining))}
    for i, j in tree:
        adjacency[i].add(m + j)
        adjacency[m + j].add(i)
    flows = {}
    leaves = [node for node, others in adjacency.items() if len(others) == 1]
    while leaves:
        leaf = leaves.pop()
        if len(adjacency[leaf]) != 1:
            continue
        other = adjacency[leaf].pop()
        adjacency[other].discard(leaf)
        cell = (leaf, other - m) if leaf < m else (other, leaf - m)
        flows[cell] = remaining[leaf]
        remaining[other] -= remaining[leaf]
        if len(adjacency[other]) == 1:
            leaves.append(other)
    return flows
