import numpy as np
import pytest
from scipy.stats import kstest

from jumpflow.laws import AtomLaw, UniformLaw
from jumpflow.measures import (
    BirthLaw,
    EmpiricalMeasure,
    FragmentRatio,
    MatingMix,
    RateFunction,
    SpatialNoise,
    affine_power_rate,
    constant_growth,
    constant_rate,
)
from jumpflow.models import (
    age_size_model,
    growth_fragmentation_model,
    renewal_model,
    renewal_system_model,
    sexual_model,
    space_age_model,
    two_time_model,
)
from jumpflow.pdmp import (
    EnvelopeViolation,
    SimConfig,
    coupled_experiment,
    simulate_coupled,
    simulate_population,
    thinning_next_event,
)


def renewal_const(lam=1.0, a=1.0):
    return renewal_model(constant_growth(1.0), constant_rate(lam), BirthLaw(AtomLaw([0.0])), a)


def delta0(model):
    return EmpiricalMeasure.from_points(model.space, np.zeros((1, model.space.ncols)))


ALL_FACTORIES = {
    "renewal": lambda: renewal_model(
        constant_growth(1.0), affine_power_rate(1.0, [1.0], [1.0]), BirthLaw(AtomLaw([0.0])), 0.9
    ),
    "renewal_system": lambda: renewal_system_model(
        [constant_growth(1.0)] * 3,
        [affine_power_rate(alpha, [1.0], [1.0]) for alpha in (1.0, 1.5, 2.0)],
        0.9,
    ),
    "space_age": lambda: space_age_model(
        affine_power_rate(1.0, [1.0], [1.0]), SpatialNoise(UniformLaw(-1, 1), 0.5), 1, 0.9
    ),
    "two_time": lambda: two_time_model(affine_power_rate(1.0, [0.5, 0.5], [1.0, 1.0]), 0.9),
    "growth_fragmentation": lambda: growth_fragmentation_model(
        constant_growth(1.0), affine_power_rate(1.0, [1.0], [1.0]),
        FragmentRatio(UniformLaw(0, 1)), 0.45,
    ),
    "age_size": lambda: age_size_model(
        constant_growth(1.0), affine_power_rate(1.0, [0.5, 0.5], [1.0, 1.0]),
        FragmentRatio(UniformLaw(0, 1)), 0.9,
    ),
}


def test_sim_config_validation():
    model = renewal_const()
    with pytest.raises(ValueError):
        SimConfig(model, 10, 1.0, (2.0,), 0)
    with pytest.raises(ValueError):
        SimConfig(model, 10, 1.0, (0.8, 0.2), 0)
    with pytest.raises(ValueError):
        SimConfig(model, 0, 1.0, (1.0,), 0)
    sx = sexual_model(MatingMix(UniformLaw(0, 1)), dim=1)
    with pytest.raises(ValueError):
        SimConfig(sx, 1, 1.0, (1.0,), 0)
    with pytest.raises(ValueError):
        SimConfig(model, 10, 1.0, (1.0,), 0, lookahead=0.0)


# ---------------------------------------------------------------------------
# thinning law
# ---------------------------------------------------------------------------


def first_event_time(model, start, rng, window=1.0):
    t = 0.0
    state = np.asarray(start, float)
    while True:
        hit = thinning_next_event(model, state, t, window, rng)
        if hit is not None:
            return hit[0]
        state = model.flow(state[None, :], window)[0]
        t += window


def test_thinning_constant_rate_exponential_law():
    model = renewal_const(lam=1.0)
    rng = np.random.default_rng(0)
    draws = np.array([first_event_time(model, [0.0], rng) for _ in range(100_000)])
    assert kstest(draws, "expon").pvalue > 1e-3


def test_thinning_affine_rate_time_change_law():
    # d(x) = 1 + x, unit aging from zero age: survival exp(-t - t^2/2)
    model = renewal_model(
        constant_growth(1.0), affine_power_rate(1.0, [1.0], [1.0]), BirthLaw(AtomLaw([0.0])), 1.0
    )
    rng = np.random.default_rng(1)
    draws = np.array([first_event_time(model, [0.0], rng) for _ in range(100_000)])
    cdf = lambda t: 1.0 - np.exp(-np.asarray(t) - 0.5 * np.asarray(t) ** 2)
    assert kstest(draws, cdf).pvalue > 1e-3


def test_thinning_zero_rate_never_fires():
    model = renewal_const(lam=0.0)
    rng = np.random.default_rng(2)
    assert thinning_next_event(model, np.array([0.0]), 0.0, 50.0, rng) is None


def test_thinning_pair_mode_classifies():
    model = ALL_FACTORIES["renewal"]()
    rng = np.random.default_rng(3)
    classes = set()
    for _ in range(200):
        hit = thinning_next_event(model, (np.array([0.0]), np.array([4.0])), 0.0, 5.0, rng)
        assert hit is not None
        classes.add(hit[1])
    assert classes == {"common", "solo_second"}  # d(0) < d(4): no solo_first events


def test_envelope_violation_aborts():
    bogus = RateFunction(lambda pts: 1.0 + pts[:, 0], bound_fn=lambda p, q: 0.5 * (1.0 + p[:, 0]))
    model = renewal_model(constant_growth(1.0), bogus, BirthLaw(AtomLaw([0.0])), 1.0)
    cfg = SimConfig(model, 200, 2.0, (2.0,), 0)
    with pytest.raises(EnvelopeViolation):
        simulate_population(cfg, delta0(model))


# ---------------------------------------------------------------------------
# population engine
# ---------------------------------------------------------------------------


def test_backward_recurrence_tail():
    model = renewal_const(lam=1.0)
    cfg = SimConfig(model, 30_000, 5.0, (5.0,), 11)
    res = simulate_population(cfg, delta0(model))
    ages = res.measures[0].atoms[:, 0]
    p = np.mean(ages > 1.0)
    target = np.exp(-1.0)
    assert abs(p - target) <= 3.0 * np.sqrt(target * (1 - target) / 30_000)


def test_pure_flow_without_events():
    model = growth_fragmentation_model(
        constant_growth(1.0), constant_rate(0.0), FragmentRatio(UniformLaw(0, 1)), 0.5
    )
    init = EmpiricalMeasure.from_points(model.space, np.array([[1.0], [2.0]]))
    res = simulate_population(SimConfig(model, 50, 3.0, (1.5, 3.0), 4), init)
    assert res.event_counts.sum() == 0
    assert set(np.round(res.measures[1].atoms[:, 0], 12)) == {4.0, 5.0}


def test_population_checkpoints_and_conservation():
    model = ALL_FACTORIES["age_size"]()
    init = EmpiricalMeasure.from_points(model.space, np.array([[0.0, 1.0], [1.0, 2.0]]))
    cfg = SimConfig(model, 1_000, 2.0, (0.0, 1.0, 2.0), 5)
    res = simulate_population(cfg, init)
    assert len(res.measures) == 3
    for m in res.measures:
        assert len(m) == 1_000  # particle count conserved, states validated on build


def test_population_path_integral_pure_transport():
    # d = 0, unit flow from zero: integral of f(x, t) = x * t equals T^3 / 3
    model = renewal_const(lam=0.0)
    cfg = SimConfig(model, 8, 2.0, (2.0,), 1)
    res = simulate_population(cfg, delta0(model), integrand=lambda pts, tt: pts[:, 0] * tt)
    assert np.allclose(res.integrals, 8.0 / 3.0, atol=1e-10)


def test_sexual_population_mean_preserved():
    model = sexual_model(MatingMix(UniformLaw(0, 1), power=1.0), dim=1)
    init = EmpiricalMeasure.from_points(model.space, np.linspace(-2, 2, 101)[:, None])
    cfg = SimConfig(model, 20_000, 2.0, (2.0,), 6)
    res = simulate_population(cfg, init)
    assert abs(res.measures[0].atoms.mean()) < 0.04
    assert res.event_counts.sum() > 0


# ---------------------------------------------------------------------------
# coupled engine
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(ALL_FACTORIES))
def test_diagonal_is_absorbing(name):
    model = ALL_FACTORIES[name]()
    rng = np.random.default_rng(7)
    cols = model.space.ncols
    x = rng.uniform(0.2, 3.0, (500, cols))
    if model.space.kind == "age_state":
        x[:, 1] = rng.integers(1, 4, 500)
    if model.space.kind == "time_pair":
        x[:, 1] += x[:, 0]
    cfg = SimConfig(model, 500, 1.5, (1.5,), 8)
    res = simulate_coupled(cfg, x, x.copy())
    assert np.array_equal(res.firsts[-1], res.seconds[-1])
    assert res.mean_cost[-1] == 0.0
    assert res.solo_events[-1] == 0  # equal rates: only common events


def test_merge_time_law_gives_exponential_cost_decay():
    model = renewal_const(lam=1.0, a=1.0)
    n = 20_000
    x = np.zeros((n, 1))
    y = np.full((n, 1), 3.0)
    cfg = SimConfig(model, n, 1.0, (1.0,), 9)
    res = simulate_coupled(cfg, x, y)
    target = np.exp(-1.0)
    assert abs(res.mean_cost[0] - target) <= 3.0 * np.sqrt(target * (1 - target) / n)


def test_coupled_counters_match_per_pair_totals():
    model = ALL_FACTORIES["renewal"]()
    rng = np.random.default_rng(10)
    x = rng.uniform(0, 2, (300, 1))
    y = rng.uniform(0, 2, (300, 1))
    cfg = SimConfig(model, 300, 1.0, (0.5, 1.0), 10)
    res = simulate_coupled(cfg, x, y)
    assert res.common_events[-1] + res.solo_events[-1] == res.event_counts.sum()
    assert np.all(np.diff(res.common_events) >= 0)
    assert res.fraction_with_event[-1] == np.mean(res.event_counts > 0)
    for clouds in (res.firsts, res.seconds):
        for arr in clouds:
            model.space.validate(arr)  # no state ever exits its space


def test_sexual_parallel_displacements_keep_cost_constant():
    # dirac mixing with identical displacement vectors: the per-event
    # contraction factor is exactly one, so the mean cost never moves
    model = sexual_model(MatingMix(AtomLaw([0.4]), power=1.0), dim=2)
    rng = np.random.default_rng(21)
    x = rng.uniform(-1, 1, (2_000, 2))
    y = x + np.array([0.7, -0.2])
    cfg = SimConfig(model, 2_000, 2.0, (0.5, 1.0, 2.0), 22)
    res = simulate_coupled(cfg, x, y)
    assert np.allclose(res.mean_cost, res.mean_cost[0], atol=1e-12)


def test_bit_reproducibility_and_seed_sensitivity():
    model = ALL_FACTORIES["growth_fragmentation"]()
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 2, (400, 1))
    y = rng.uniform(0, 2, (400, 1))
    cfg = SimConfig(model, 400, 2.0, (1.0, 2.0), 13)
    r1 = simulate_coupled(cfg, x, y)
    r2 = simulate_coupled(cfg, x, y)
    assert np.array_equal(r1.firsts[-1], r2.firsts[-1])
    assert np.array_equal(r1.seconds[-1], r2.seconds[-1])
    assert np.array_equal(r1.mean_cost, r2.mean_cost)
    cfg2 = SimConfig(model, 400, 2.0, (1.0, 2.0), 14)
    r3 = simulate_coupled(cfg2, x, y)
    assert not np.array_equal(r1.firsts[-1], r3.firsts[-1])


def test_population_reproducibility():
    model = ALL_FACTORIES["space_age"]()
    init = EmpiricalMeasure.from_points(model.space, np.array([[0.0, 0.0], [1.0, 1.0]]))
    cfg = SimConfig(model, 500, 1.0, (1.0,), 15)
    a = simulate_population(cfg, init)
    b = simulate_population(cfg, init)
    assert np.array_equal(a.measures[-1].atoms, b.measures[-1].atoms)
    assert np.array_equal(a.event_counts, b.event_counts)


def test_replicated_experiment_splits_and_errors():
    model = sexual_model(MatingMix(UniformLaw(0, 1), power=2.0), dim=2)
    rng = np.random.default_rng(16)
    x = rng.uniform(-1, 1, (400, 2))
    y = rng.uniform(0, 2, (400, 2))
    cfg = SimConfig(model, 400, 1.0, (0.5, 1.0), 17)
    res = coupled_experiment(cfg, x, y, replicas=4)
    assert res.firsts[-1].shape == (400, 2)
    assert np.all(np.isfinite(res.stderr))
    with pytest.raises(ValueError):
        coupled_experiment(cfg, x, y, replicas=3)


def test_coupled_marginal_smoke():
    # one model, desk scale: coupled first marginal vs population, same start
    model = ALL_FACTORIES["renewal"]()
    rng = np.random.default_rng(18)
    cloud = EmpiricalMeasure.from_points(model.space, rng.uniform(0, 2, (256, 1)))
    x0 = cloud.sample(20_000, rng)
    y0 = cloud.sample(20_000, rng)
    cfg = SimConfig(model, 20_000, 1.0, (1.0,), 19)
    coup = simulate_coupled(cfg, x0, y0)
    pop = simulate_population(SimConfig(model, 20_000, 1.0, (1.0,), 20), cloud)
    from scipy.stats import ks_2samp

    assert ks_2samp(coup.firsts[-1][:, 0], pop.measures[-1].atoms[:, 0]).pvalue > 1e-4
