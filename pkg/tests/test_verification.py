import dataclasses

import numpy as np

from mkdistance.transport import solve_transport
from mkdistance.verification import BAKER_COST
from mkdistance.verification import baker_pair
from mkdistance.verification import check_baker
from mkdistance.verification import check_metric_axioms
from mkdistance.verification import check_oracle_equivalence
from mkdistance.verification import random_grid_measure
from mkdistance.verification import random_instance
from mkdistance.verification import run_verification


def stops_one_pivot_early(pair, opts):
    plan = solve_transport(pair, opts)
    if plan.iterations >= 2:
        return solve_transport(pair, dataclasses.replace(opts, max_iterations=plan.iterations - 1))
    return plan


def overcharges(pair, opts):
    plan = solve_transport(pair, opts)
    return dataclasses.replace(plan, objective=plan.objective + 1e-6)


def test_baker_pair():
    pair = baker_pair()
    assert len(pair.source) == len(pair.target) == 3
    assert pair.source.total_mass == 3
    assert BAKER_COST == 15


def test_random_instances_are_balanced_and_small():
    rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(50):
        pair = random_instance(rng)
        assert 1 <= len(pair.source) <= 4
        assert 1 <= len(pair.target) <= 4
        assert abs(pair.source.total_mass - 1) <= 1e-12
        assert np.all(pair.source.coords < 5) and np.all(pair.target.coords >= 0)


def test_random_grid_measures_have_unit_mass():
    rng = np.random.Generator(np.random.PCG64(1))
    for _ in range(20):
        assert abs(random_grid_measure(rng).total_mass - 1) <= 1e-12


def test_run_verification_passes():
    results = run_verification(seed=0, instances=60, triples=30)
    assert [result.name for result in results] == ['baker', 'oracle equivalence', 'metric axioms']
    assert all(result.passed for result in results), [result.detail for result in results]


def test_verification_is_deterministic():
    first = run_verification(seed=4, instances=10, triples=5)
    second = run_verification(seed=4, instances=10, triples=5)
    assert first == second


def test_a_solver_stopped_early_is_caught():
    rng = np.random.Generator(np.random.PCG64(0))
    result = check_oracle_equivalence(rng, instances=60, solver=stops_one_pivot_early)
    assert not result.passed
    assert 'iteration_limit' in result.detail


def test_a_solver_with_a_wrong_objective_is_caught():
    assert not check_baker(overcharges).passed
    rng = np.random.Generator(np.random.PCG64(0))
    assert not check_metric_axioms(rng, triples=5, solver=overcharges).passed
    results = run_verification(seed=0, instances=5, triples=5, solver=overcharges)
    assert not any(result.passed for result in results)


def test_full_size_oracle_and_axiom_checks():
    rng = np.random.Generator(np.random.PCG64(11))
    equivalence = check_oracle_equivalence(rng, instances=500)
    assert equivalence.passed, equivalence.detail
    assert equivalence.detail == '500 cases'
    axioms = check_metric_axioms(rng, triples=200)
    assert axioms.passed, axioms.detail
    assert axioms.detail == '200 cases'
