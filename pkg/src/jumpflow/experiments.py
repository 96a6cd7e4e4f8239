"""End-to-end experiment pipelines behind the CLI subcommands.

The contraction experiment follows one fixed recipe: sample both initial
clouds, solve the exact transport problem between them, start the coupled
pairs from the optimal plan, simulate, and at each checkpoint record the mean
coupled cost next to an exact transport cost computed on a paired subsample
of the live pairs.  The exact cost can never exceed the mean cost of the same
subsampled pairs (any coupling is an upper bound), which is asserted at
1e-10; the mean-cost trend is asserted to be non-increasing within three
combined standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .config import (
    ConfigError,
    build_growth,
    build_initial_cloud,
    build_law,
    build_rate,
    check_keys,
    expand_preset,
    preset_model_config,
    resolve_truncation,
)
from .dual import CrosscheckResult, DualProblem, bump_source, duality_crosscheck, solve_dual
from .laws import AtomLaw
from .measures import BirthLaw, EmpiricalMeasure, GridSpec
from .otsolver import sample_plan, transport_cost
from .pdmp import SimConfig, coupled_experiment

__all__ = [
    "ContractResult",
    "SweepRow",
    "run_contract",
    "run_sweep",
    "run_dual_check",
    "run_validate",
    "SWEEP_SAMPLERS",
]

STRUCT_TOL = 1e-10


def _child_seeds(seed: int, n: int):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint64)]


@dataclass
class ContractResult:
    model_name: str
    truncation: float
    times: np.ndarray
    exact_ot: np.ndarray
    mean_cost: np.ndarray
    stderr: np.ndarray
    ot_pairs_mean: np.ndarray
    n_pairs: int
    common_events: np.ndarray
    solo_events: np.ndarray
    fraction_with_event: np.ndarray
    initial_cost: float
    structural_ok: bool = field(init=False)
    monotone_ok: bool = field(init=False)

    def __post_init__(self):
        self.structural_ok = bool(np.all(self.exact_ot <= self.ot_pairs_mean + STRUCT_TOL))
        combined = 3.0 * np.sqrt(self.stderr[:-1] ** 2 + self.stderr[1:] ** 2)
        self.monotone_ok = bool(np.all(np.diff(self.mean_cost) <= combined))

    @property
    def passed(self) -> bool:
        return self.structural_ok and self.monotone_ok


def _checkpoint_times(sim: dict) -> tuple:
    horizon = float(sim["horizon"])
    cps = sim.get("checkpoints", 10)
    if isinstance(cps, int):
        times = np.linspace(0.0, horizon, cps + 1)
    else:
        times = np.concatenate([[0.0], np.asarray(cps, float)])
        times = np.unique(times)
    return tuple(float(t) for t in times)


def run_contract(cfg: dict) -> ContractResult:
    cfg = expand_preset(cfg)
    check_keys(cfg, ("model", "truncation", "initial", "sim"), ("admissibility",), "contract config")
    sim = dict(cfg["sim"])
    check_keys(
        sim, ("n_pairs", "horizon", "seed"),
        ("checkpoints", "lookahead", "replicas", "ot_subsample"), "sim",
    )
    model, level, report = resolve_truncation(cfg["model"], cfg["truncation"], cfg.get("admissibility"))
    if report is not None and not report.valid:
        raise AssertionError(f"truncation level not admissible: {report}")
    check_keys(cfg["initial"], ("first", "second"), (), "initial")

    n_pairs = int(sim["n_pairs"])
    replicas = int(sim.get("replicas", 32 if model.interacting else 1))
    m_ot = min(int(sim.get("ot_subsample", 1024)), n_pairs)
    seeds = _child_seeds(int(sim["seed"]), 4)
    rng_init = np.random.default_rng(seeds[0])
    rng_plan = np.random.default_rng(seeds[1])
    rng_ot = np.random.default_rng(seeds[2])

    cloud1 = build_initial_cloud(cfg["initial"]["first"], model, m_ot, rng_init)
    cloud2 = build_initial_cloud(cfg["initial"]["second"], model, m_ot, rng_init)
    plan0 = transport_cost(cloud1, cloud2, model.cost)
    first0, second0 = sample_plan(plan0, n_pairs, rng_plan)

    times = _checkpoint_times(sim)
    sim_cfg = SimConfig(
        model, n_pairs, float(sim["horizon"]), times, seeds[3],
        lookahead=float(sim.get("lookahead", 0.1)),
    )
    coupled = coupled_experiment(sim_cfg, first0, second0, replicas=replicas)

    exact, sub_mean = [], []
    for x, y in zip(coupled.firsts, coupled.seconds):
        idx = rng_ot.choice(n_pairs, size=m_ot, replace=False) if n_pairs > m_ot else np.arange(n_pairs)
        mu = EmpiricalMeasure.from_points(model.space, x[idx])
        nu = EmpiricalMeasure.from_points(model.space, y[idx])
        exact.append(transport_cost(mu, nu, model.cost).cost)
        sub_mean.append(float(model.cost.evaluate(x[idx], y[idx]).mean()))

    return ContractResult(
        model.name, level, np.asarray(times), np.asarray(exact),
        coupled.mean_cost, coupled.stderr, np.asarray(sub_mean), n_pairs,
        coupled.common_events, coupled.solo_events, coupled.fraction_with_event,
        float(plan0.cost),
    )


# ---------------------------------------------------------------------------
# randomized inequality sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    model_name: str
    inequality: str
    samples: int
    worst_margin: float
    mean_margin: float
    exact_integrals: bool
    truncation: float
    witness: tuple | None

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -1e-10


def _preset_model(name: str):
    cfg = preset_model_config(name)
    model, level, report = resolve_truncation(cfg["model"], cfg["truncation"], cfg.get("admissibility"))
    if report is not None and not report.valid:
        raise AssertionError(f"preset truncation invalid for {name}: {report}")
    return model, level


def _sweep_renewal(model, n, rng):
    x = rng.uniform(0.0, 10.0, n)
    y = rng.uniform(0.0, 10.0, n)
    return M.check_I_inequality(model, x, y), (x, y)


def _sweep_renewal_system(model, n, rng):
    i = rng.integers(1, model.torus_size + 1, n)
    x = rng.uniform(0.0, 10.0, n)
    y = rng.uniform(0.0, 10.0, n)
    return M.check_delta_sign(model, i, x, y), (i, x, y)


def _sweep_space_age(model, n, rng):
    x = rng.uniform(0.0, 10.0, n)
    y = rng.uniform(0.0, 10.0, n)
    dim = model.space.dim
    z = rng.uniform(-5.0, 5.0, (n, dim))
    r = rng.uniform(-5.0, 5.0, (n, dim))
    return M.check_delta_sign(model, x, z, y, r), (x, z, y, r)


def _sweep_two_time(model, n, rng):
    x1 = rng.uniform(0.0, 5.0, n)
    x2 = x1 + rng.uniform(1e-2, 5.0, n)
    t1 = rng.uniform(0.0, 5.0, n)
    t2 = t1 + rng.uniform(1e-2, 5.0, n)
    return M.check_delta_sign(model, x1, x2, t1, t2), (x1, x2, t1, t2)


def _sweep_growth_fragmentation(model, n, rng):
    x = rng.uniform(0.0, 10.0, n)
    y = rng.uniform(0.0, 10.0, n)
    return M.check_delta_sign(model, x, y), (x, y)


def _sweep_age_size(model, n, rng):
    x = rng.uniform(0.0, 10.0, n)
    z = rng.uniform(0.0, 10.0, n)
    t = rng.uniform(0.0, 10.0, n)
    s = rng.uniform(0.0, 10.0, n)
    return M.check_delta_sign(model, x, z, t, s), (x, z, t, s)


def _sweep_sexual(model, n, rng):
    dim = model.space.dim
    pts = [rng.uniform(-3.0, 3.0, (n, dim)) for _ in range(4)]
    return M.check_sexual_convexity(model.mix, *pts), tuple(pts)


SWEEP_SAMPLERS = {
    "renewal": _sweep_renewal,
    "renewal_system": _sweep_renewal_system,
    "space_age": _sweep_space_age,
    "two_time": _sweep_two_time,
    "growth_fragmentation": _sweep_growth_fragmentation,
    "age_size": _sweep_age_size,
    "sexual": _sweep_sexual,
}

_INEQUALITY_LABEL = {
    "renewal": "solo-relocation bound",
    "renewal_system": "per-state jump balance",
    "space_age": "shared-noise jump balance",
    "two_time": "reset jump balance",
    "growth_fragmentation": "shared-ratio jump balance",
    "age_size": "reset-ratio jump balance",
    "sexual": "mixing convexity",
}


def run_sweep(cfg: dict) -> list[SweepRow]:
    check_keys(cfg, (), ("samples", "seed", "models"), "sweep config")
    n = int(cfg.get("samples", 100_000))
    seed = int(cfg.get("seed", 0))
    names = cfg.get("models", list(M.MODEL_NAMES))
    rows = []
    for name, child in zip(names, _child_seeds(seed, max(len(names), 1))):
        if name not in SWEEP_SAMPLERS:
            raise ConfigError(f"unknown sweep model {name!r}")
        model, level = _preset_model(name)
        rng = np.random.default_rng(child)
        outcome, draws = SWEEP_SAMPLERS[name](model, n, rng)
        margins = outcome.values * outcome.expected_sign
        worst = int(np.argmin(margins))
        witness = None
        if margins[worst] < -1e-10:
            witness = tuple(np.asarray(d)[worst].tolist() for d in draws)
        rows.append(
            SweepRow(
                name, _INEQUALITY_LABEL[name], n, float(margins[worst]),
                float(margins.mean()), outcome.exact, level, witness,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# dual cross-check and truncation certificate
# ---------------------------------------------------------------------------


@dataclass
class DualCheckResult:
    crosscheck: CrosscheckResult
    t_grid: np.ndarray
    psi0: np.ndarray
    support_radius: float
    sup_ratio: float

    @property
    def passed(self) -> bool:
        return self.crosscheck.passed


def run_dual_check(cfg: dict) -> DualCheckResult:
    check_keys(
        cfg, ("growth", "rate", "horizon", "source"),
        ("time_step", "n_particles", "seed"), "dual-check config",
    )
    src = cfg["source"]
    check_keys(src, ("amplitude", "x_center", "x_width", "t_center", "t_width"), (), "source")
    growth = build_growth(cfg["growth"])
    rate = build_rate(cfg["rate"])
    horizon = float(cfg["horizon"])
    source, support = bump_source(
        float(src["amplitude"]), float(src["x_center"]), float(src["x_width"]),
        float(src["t_center"]), float(src["t_width"]),
    )
    model = M.renewal_model(growth, rate, BirthLaw(AtomLaw([0.0])), truncation=1.0)
    u0 = EmpiricalMeasure.from_points(model.space, np.array([[0.0]]))
    step = float(cfg.get("time_step", 0.005))
    result = duality_crosscheck(
        model, u0, source, support, horizon,
        int(cfg.get("n_particles", 100_000)), step, int(cfg.get("seed", 0)),
    )
    problem = DualProblem(growth, rate, source, horizon, support)
    sol = solve_dual(problem, step)
    return DualCheckResult(result, sol.t_grid, sol.psi0, sol.support_radius, sol.sup_ratio)


def run_validate(cfg: dict):
    # accepts a full experiment config; only the model, truncation, and
    # admissibility sections matter here
    cfg = expand_preset(cfg)
    check_keys(cfg, ("model", "truncation"), ("admissibility", "initial", "sim", "seed"), "validate config")
    model, level, report = resolve_truncation(cfg["model"], cfg["truncation"], cfg.get("admissibility"))
    return model, level, report
