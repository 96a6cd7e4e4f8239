import numpy as np
import pytest

from jumpflow.measures import EmpiricalMeasure, Space
from jumpflow.otsolver import (
    CostFunction,
    brute_force_cost,
    power_cost,
    sample_plan,
    transport_cost,
    trunc_abs,
    trunc_abs_state,
    trunc_sum,
    trunc_weighted,
)

AGE = Space("age")


def cloud(points, space=AGE):
    return EmpiricalMeasure.from_points(space, np.asarray(points, float))


def random_cloud(rng, variant, n):
    if variant == "trunc_abs":
        return cloud(rng.uniform(0, 10, (n, 1)))
    if variant == "trunc_abs_state":
        pts = np.column_stack([rng.uniform(0, 10, n), rng.integers(1, 4, n).astype(float)])
        return cloud(pts, Space("age_state", n_states=3))
    if variant == "trunc_sum":
        return cloud(rng.uniform(0, 10, (n, 2)), Space("age_size"))
    if variant == "trunc_weighted":
        x1 = rng.uniform(0, 5, n)
        return cloud(np.column_stack([x1, x1 + rng.uniform(0.1, 5, n)]), Space("time_pair"))
    return cloud(rng.uniform(0, 10, (n, 2)), Space("trait", dim=2))


def make_cost(variant, a, p=1.0):
    if variant == "power":
        return power_cost(p)
    return CostFunction(variant, a)


VARIANTS = ("trunc_abs", "trunc_abs_state", "trunc_sum", "trunc_weighted", "power")


# ---------------------------------------------------------------------------
# cost functions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_cost_symmetry_zero_and_bound(variant):
    rng = np.random.default_rng(5)
    mu = random_cloud(rng, variant, 32)
    nu = random_cloud(rng, variant, 32)
    c = make_cost(variant, 1.5, p=2.0)
    xy = c.evaluate(mu.atoms, nu.atoms)
    yx = c.evaluate(nu.atoms, mu.atoms)
    assert np.array_equal(xy, yx)
    assert np.all(xy >= 0)
    assert np.all(c.evaluate(mu.atoms, mu.atoms) == 0.0)
    if variant != "power":
        assert np.all(xy <= 1.5 + 1e-15)
    assert np.allclose(c.pairwise(mu.atoms, nu.atoms)[np.arange(32), np.arange(32)], xy)


def test_cost_constructor_guards():
    with pytest.raises(ValueError):
        CostFunction("trunc_abs", np.inf)
    with pytest.raises(ValueError):
        CostFunction("power", 1.0)
    with pytest.raises(ValueError):
        power_cost(0.5)
    with pytest.raises(ValueError):
        CostFunction("nope", 1.0)


# ---------------------------------------------------------------------------
# exact solver: frozen desk values
# ---------------------------------------------------------------------------


def test_single_atom_truncated():
    plan = transport_cost(cloud([[0.0]]), cloud([[3.0]]), trunc_abs(1.0))
    assert plan.cost == pytest.approx(1.0, abs=1e-12)


def test_identical_measures_zero_cost_identity_plan():
    mu = cloud([[0.3], [2.0], [7.0]])
    plan = transport_cost(mu, mu, trunc_abs(1.0))
    assert plan.cost == 0.0
    assert np.array_equal(plan.src_idx, plan.dst_idx)


def test_two_atom_monotone_optimum():
    # brute force over both pairings: identity 0.5*0.5 + 0.5*0.1 = 0.3 beats 0.5*1 + 0.5*1
    plan = transport_cost(cloud([[0.0], [2.0]]), cloud([[0.5], [2.1]]), trunc_abs(1.0))
    assert plan.cost == pytest.approx(0.3, abs=1e-12)


def test_two_atom_anti_monotone_optimum():
    # truncation makes the crossing pairing cheaper: 0.5*2 + 0.5*0.1 < 0.5*0.9 + 0.5*2
    mu, nu = cloud([[0.0], [1.0]]), cloud([[0.9], [10.0]])
    plan = transport_cost(mu, nu, trunc_abs(2.0))
    assert plan.cost == pytest.approx(1.05, abs=1e-12)
    assert plan.cost < 1.45
    assert brute_force_cost(mu, nu, trunc_abs(2.0)) == pytest.approx(1.05, abs=1e-12)


def test_brute_force_trivial_cases():
    mu, nu = cloud([[1.0]]), cloud([[4.5]])
    assert brute_force_cost(mu, nu, trunc_abs(2.0)) == pytest.approx(2.0)
    mu4 = cloud([[0.0], [1.0], [2.0], [3.0]])
    assert brute_force_cost(mu4, mu4, trunc_abs(1.0)) == 0.0


def test_brute_force_guards():
    big = cloud(np.arange(9, dtype=float)[:, None])
    with pytest.raises(ValueError):
        brute_force_cost(big, big, trunc_abs(1.0))
    w = np.array([0.7, 0.3])
    uneven = EmpiricalMeasure(AGE, np.array([[0.0], [1.0]]), w)
    with pytest.raises(ValueError):
        brute_force_cost(uneven, cloud([[0.0], [1.0]]), trunc_abs(1.0))


@pytest.mark.parametrize("variant", VARIANTS)
def test_solver_matches_brute_force(variant):
    rng = np.random.default_rng(17)
    for _ in range(60):
        n = int(rng.integers(1, 9))
        mu = random_cloud(rng, variant, n)
        nu = random_cloud(rng, variant, n)
        a = float(rng.choice([0.5, 1.0, 2.0]))
        p = float(rng.choice([1.0, 2.0]))
        c = make_cost(variant, a, p)
        plan = transport_cost(mu, nu, c)
        assert abs(plan.cost - brute_force_cost(mu, nu, c)) <= 1e-10


def test_solver_symmetric_in_arguments():
    rng = np.random.default_rng(3)
    mu = random_cloud(rng, "trunc_abs", 12)
    nu = random_cloud(rng, "trunc_abs", 12)
    c = trunc_abs(1.0)
    assert transport_cost(mu, nu, c).cost == transport_cost(nu, mu, c).cost


def test_coupling_upper_bound_property():
    rng = np.random.default_rng(9)
    mu = random_cloud(rng, "trunc_abs", 20)
    nu = random_cloud(rng, "trunc_abs", 20)
    c = trunc_abs(1.0)
    opt = transport_cost(mu, nu, c).cost
    paired = float(c.evaluate(mu.atoms, nu.atoms).mean())
    matrix = c.pairwise(mu.atoms, nu.atoms)
    product = float(mu.weights @ matrix @ nu.weights)
    assert opt <= paired + 1e-12
    assert opt <= product + 1e-12


def test_untruncated_w1_equals_sorted_pairing():
    rng = np.random.default_rng(21)
    for _ in range(20):
        n = int(rng.integers(2, 30))
        mu = random_cloud(rng, "trunc_abs", n)
        nu = random_cloud(rng, "trunc_abs", n)
        opt = transport_cost(mu, nu, power_cost(1.0)).cost
        sorted_cost = float(np.mean(np.abs(np.sort(mu.atoms[:, 0]) - np.sort(nu.atoms[:, 0]))))
        assert opt == pytest.approx(sorted_cost, abs=1e-10)


def test_plan_invariants_and_order():
    rng = np.random.default_rng(30)
    mu = random_cloud(rng, "trunc_abs", 16)
    nu = random_cloud(rng, "trunc_abs", 16)
    plan = transport_cost(mu, nu, trunc_abs(0.5))
    row, col = plan.marginals(16, 16)
    assert np.max(np.abs(row - mu.weights)) <= 1e-10
    assert np.max(np.abs(col - nu.weights)) <= 1e-10
    pair_cost = trunc_abs(0.5).evaluate(plan.src_atoms[plan.src_idx], plan.dst_atoms[plan.dst_idx])
    assert float(pair_cost @ plan.mass) == pytest.approx(plan.cost, abs=1e-10)
    keys = list(zip(plan.src_idx.tolist(), plan.dst_idx.tolist()))
    assert keys == sorted(keys)


# ---------------------------------------------------------------------------
# general weights (LP backend)
# ---------------------------------------------------------------------------


def test_unequal_weights_forced_plan():
    mu = EmpiricalMeasure(AGE, np.array([[0.0]]), np.array([1.0]))
    nu = EmpiricalMeasure(AGE, np.array([[0.0], [3.0]]), np.array([0.5, 0.5]))
    plan = transport_cost(mu, nu, trunc_abs(1.0))
    assert plan.cost == pytest.approx(0.5, abs=1e-10)


def test_lp_backend_agrees_with_assignment_backend():
    from jumpflow.otsolver import _assignment_plan, _flow_plan

    rng = np.random.default_rng(8)
    for _ in range(10):
        n = int(rng.integers(2, 8))
        mu = random_cloud(rng, "trunc_abs", n)
        nu = random_cloud(rng, "trunc_abs", n)
        c = trunc_abs(1.0)
        assert _flow_plan(mu, nu, c).cost == pytest.approx(_assignment_plan(mu, nu, c).cost, abs=1e-9)


def test_unequal_weight_plans_are_feasible_and_below_product_coupling():
    rng = np.random.default_rng(8)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(2, 7))
        mu_w = rng.uniform(0.5, 1.5, n)
        nu_w = rng.uniform(0.5, 1.5, m)
        mu = EmpiricalMeasure(AGE, rng.uniform(0, 10, (n, 1)), mu_w / mu_w.sum())
        nu = EmpiricalMeasure(AGE, rng.uniform(0, 10, (m, 1)), nu_w / nu_w.sum())
        plan = transport_cost(mu, nu, trunc_abs(1.0))
        row, col = plan.marginals(n, m)
        assert np.max(np.abs(row - mu.weights)) <= 1e-10
        assert np.max(np.abs(col - nu.weights)) <= 1e-10
        product = float(mu.weights @ trunc_abs(1.0).pairwise(mu.atoms, nu.atoms) @ nu.weights)
        assert plan.cost <= product + 1e-10


def test_cap_and_space_mismatch_errors():
    mu = cloud([[0.0]])
    nu = cloud([[1.0, 2.0]], Space("age_size"))
    with pytest.raises(ValueError):
        transport_cost(mu, nu, trunc_abs(1.0))
    big = cloud(np.arange(40, dtype=float)[:, None])
    with pytest.raises(ValueError):
        transport_cost(big, big, trunc_abs(1.0), cap=30)


# ---------------------------------------------------------------------------
# plan sampling
# ---------------------------------------------------------------------------


def test_sample_plan_identity():
    rng = np.random.default_rng(0)
    mu = cloud([[0.5], [2.0]])
    plan = transport_cost(mu, mu, trunc_abs(1.0))
    first, second = sample_plan(plan, 50, rng)
    assert np.array_equal(first, second)


def test_sample_plan_dirac_pair():
    rng = np.random.default_rng(0)
    plan = transport_cost(cloud([[0.0]]), cloud([[3.0]]), trunc_abs(1.0))
    first, second = sample_plan(plan, 10, rng)
    assert np.all(first == 0.0) and np.all(second == 3.0)


def test_sample_plan_frequency_band():
    rng = np.random.default_rng(4)
    plan = transport_cost(cloud([[0.0], [2.0]]), cloud([[0.5], [2.1]]), trunc_abs(1.0))
    first, second = sample_plan(plan, 100_000, rng)
    freq = np.mean((first[:, 0] == 0.0) & (second[:, 0] == 0.5))
    assert abs(freq - 0.5) < 0.01
