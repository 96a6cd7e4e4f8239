"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line.  Tolerances are pinned here, not calibrated elsewhere."""

import json
import time

import numpy as np
import pytest

from jumpflow.cli import main as cli_main
from jumpflow.config import build_initial_cloud, preset_model_config, resolve_truncation
from jumpflow.dual import DualProblem, bump_source, duality_crosscheck, smooth_bump, solve_volterra
from jumpflow.laws import AtomLaw
from jumpflow.measures import BirthLaw, EmpiricalMeasure, Space, constant_growth, constant_rate
from jumpflow.models import MODEL_NAMES, renewal_model
from jumpflow.otsolver import (
    CostFunction,
    brute_force_cost,
    power_cost,
    sample_plan,
    transport_cost,
)
from jumpflow.pdmp import SimConfig, coupled_experiment, simulate_coupled, simulate_population
from jumpflow.experiments import run_contract, run_sweep
from jumpflow.stats import two_sample_pvalue

STRUCT_TOL = 1e-10


def report(criterion, ok, detail):
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# ---------------------------------------------------------------------------
# 1. exact solver equals the permutation oracle
# ---------------------------------------------------------------------------


def random_instance(rng, variant, n):
    if variant == "trunc_abs":
        return Space("age"), rng.uniform(0, 10, (n, 1)), rng.uniform(0, 10, (n, 1))
    if variant == "trunc_abs_state":
        sp = Space("age_state", n_states=3)
        mk = lambda: np.column_stack([rng.uniform(0, 10, n), rng.integers(1, 4, n).astype(float)])
        return sp, mk(), mk()
    if variant == "trunc_sum":
        return Space("age_size"), rng.uniform(0, 10, (n, 2)), rng.uniform(0, 10, (n, 2))
    if variant == "trunc_weighted":
        sp = Space("time_pair")
        mk = lambda: (lambda x1: np.column_stack([x1, x1 + rng.uniform(0.1, 5, n)]))(rng.uniform(0, 5, n))
        return sp, mk(), mk()
    return Space("trait", dim=2), rng.uniform(0, 10, (n, 2)), rng.uniform(0, 10, (n, 2))


def test_criterion_1_ot_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.time()
    worst = 0.0
    total = 0
    for variant in ("trunc_abs", "trunc_abs_state", "trunc_sum", "trunc_weighted", "power"):
        for i in range(500):
            n = int(rng.integers(1, 9))
            sp, xa, ya = random_instance(rng, variant, n)
            mu = EmpiricalMeasure.from_points(sp, xa)
            nu = EmpiricalMeasure.from_points(sp, ya)
            if variant == "power":
                cost = power_cost(float(rng.choice([1.0, 2.0])))
            else:
                cost = CostFunction(variant, float(rng.choice([0.5, 1.0, 2.0])))
            gap = abs(transport_cost(mu, nu, cost).cost - brute_force_cost(mu, nu, cost))
            worst = max(worst, gap)
            total += 1
    elapsed = time.time() - t0
    report(
        1,
        worst <= 1e-10 and elapsed < 60.0,
        f"{total} instances, worst |solver - oracle| {worst:.2e}, {elapsed:.1f}s (< 60s)",
    )


# ---------------------------------------------------------------------------
# 2. concave-cost anti-monotone witness
# ---------------------------------------------------------------------------


def test_criterion_2_concave_cost_witness():
    sp = Space("age")
    mu = EmpiricalMeasure.from_points(sp, np.array([[0.0], [1.0]]))
    nu = EmpiricalMeasure.from_points(sp, np.array([[0.9], [10.0]]))
    plan = transport_cost(mu, nu, CostFunction("trunc_abs", 2.0))
    ok = abs(plan.cost - 1.05) <= 1e-12 and plan.cost < 1.45
    report(2, ok, f"anti-monotone optimum {plan.cost!r} (monotone pairing costs 1.45)")


# ---------------------------------------------------------------------------
# 3. proof-inequality sweeps
# ---------------------------------------------------------------------------


def test_criterion_3_inequality_sweeps():
    t0 = time.time()
    rows = run_sweep({"samples": 100_000, "seed": 31})
    elapsed = time.time() - t0
    worst = min(r.worst_margin for r in rows)
    ok = all(r.passed for r in rows) and len(rows) == 7 and elapsed < 120.0
    detail = ", ".join(f"{r.model_name} {r.worst_margin:+.1e}" for r in rows)
    report(3, ok, f"worst margins: {detail}; {elapsed:.1f}s (< 120s); floor -1e-10, min {worst:+.2e}")


# ---------------------------------------------------------------------------
# 4. contraction for all seven models
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_criterion_4_contraction(name):
    cfg = preset_model_config(name)
    cfg["sim"]["seed"] = 404
    cfg["sim"]["ot_subsample"] = 2048
    cfg["sim"]["n_pairs"] = 96_000 if name == "sexual" else 100_000
    if name == "sexual":
        cfg["sim"]["replicas"] = 32  # 32 replicas of 3000 pairs
    t0 = time.time()
    res = run_contract(cfg)
    elapsed = time.time() - t0
    frac = float(res.fraction_with_event[-1])
    ok = (
        res.structural_ok
        and res.monotone_ok
        and frac >= 0.8
        and elapsed < 600.0
    )
    report(
        4,
        ok,
        f"{name}: n={res.n_pairs}, mean {res.mean_cost[0]:.4f}->{res.mean_cost[-1]:.4f}, "
        f"exact<=paired+1e-10 {res.structural_ok}, monotone(3sigma) {res.monotone_ok}, "
        f"events {frac:.2f} (>=0.8), {elapsed:.0f}s (< 600s)",
    )


# ---------------------------------------------------------------------------
# 5. closed-form checks
# ---------------------------------------------------------------------------


def test_criterion_5_closed_forms():
    model = renewal_model(constant_growth(1.0), constant_rate(1.0), BirthLaw(AtomLaw([0.0])), 1.0)
    n = 100_000
    cfg = SimConfig(model, n, 2.0, (0.5, 1.0, 2.0), seed=55)
    res = simulate_coupled(cfg, np.zeros((n, 1)), np.full((n, 1), 3.0))
    lines = []
    ok = True
    for t, m in zip(res.times, res.mean_cost):
        target = np.exp(-t)
        band = 3.0 * np.sqrt(target * (1 - target) / n)
        ok &= abs(m - target) <= band
        lines.append(f"t={t}: {m:.4f} vs e^-t {target:.4f} (3sig {band:.4f})")
    pop = simulate_population(
        SimConfig(model, n, 5.0, (5.0,), seed=56),
        EmpiricalMeasure.from_points(model.space, np.array([[0.0]])),
    )
    tail = float(np.mean(pop.measures[0].atoms[:, 0] > 1.0))
    target = np.exp(-1.0)
    band = 3.0 * np.sqrt(target * (1 - target) / n)
    ok &= abs(tail - target) <= band
    lines.append(f"recurrence tail {tail:.4f} vs {target:.4f} (3sig {band:.4f})")
    report(5, ok, "; ".join(lines))


# ---------------------------------------------------------------------------
# 6. marginal consistency
# ---------------------------------------------------------------------------


def _pooled_population(model, init, n, horizon, seed, replicas):
    if replicas == 1:
        res = simulate_population(SimConfig(model, n, horizon, (horizon,), seed), init)
        return res.measures[-1].atoms
    block = n // replicas
    seeds = np.random.SeedSequence(seed).spawn(replicas)
    parts = []
    for r in range(replicas):
        rng = np.random.default_rng(seeds[r])
        res = simulate_population(SimConfig(model, block, horizon, (horizon,), 0), init, rng=rng)
        parts.append(res.measures[-1].atoms)
    return np.vstack(parts)


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_criterion_6_marginal_consistency(name):
    cfg = preset_model_config(name)
    model, level, _ = resolve_truncation(cfg["model"], cfg["truncation"], None)
    horizon = cfg["sim"]["horizon"]
    n = 100_000
    replicas = 10 if model.interacting else 1
    t0 = time.time()
    passes = 0
    pvals = []
    for run in range(10):
        seeds = [int(s) for s in np.random.SeedSequence(6000 + run).generate_state(6, dtype=np.uint64)]
        rng = np.random.default_rng(seeds[0])
        c1 = build_initial_cloud(cfg["initial"]["first"], model, 1024, rng)
        c2 = build_initial_cloud(cfg["initial"]["second"], model, 1024, rng)
        plan = transport_cost(c1, c2, model.cost)
        x0, y0 = sample_plan(plan, n, np.random.default_rng(seeds[1]))
        coup = coupled_experiment(
            SimConfig(model, n, horizon, (horizon,), seeds[2]), x0, y0, replicas=replicas
        )
        pop1 = _pooled_population(model, c1, n, horizon, seeds[3], replicas)
        pop2 = _pooled_population(model, c2, n, horizon, seeds[4], replicas)
        rng_t = np.random.default_rng(seeds[5])
        p1 = two_sample_pvalue(coup.firsts[-1], pop1, rng_t)
        p2 = two_sample_pvalue(coup.seconds[-1], pop2, rng_t)
        pvals.append((p1, p2))
        if p1 > 0.001 and p2 > 0.001:
            passes += 1
    elapsed = time.time() - t0
    worst = min(min(p) for p in pvals)
    report(
        6,
        passes >= 9,
        f"{name}: {passes}/10 runs non-rejecting at 0.001 (need >= 9), "
        f"worst p {worst:.4f}, n={n}, {elapsed:.0f}s",
    )


# ---------------------------------------------------------------------------
# 7. dual solver
# ---------------------------------------------------------------------------


def test_criterion_7_dual_solver():
    t0 = time.time()
    horizon, length = 2.0, 3.0
    w = smooth_bump(0.0, length)

    def wprime(x):
        x = np.asarray(x, float)
        u = x / length
        inside = np.abs(u) < 1
        usq = np.where(inside, u * u, 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            v = np.exp(1 - 1 / np.maximum(1 - usq, 1e-300)) * (-2 * u / length) / np.maximum(
                (1 - usq) ** 2, 1e-300
            )
        return np.where(inside, v, 0.0)

    rate_fn = lambda x: 1.0 + 0.5 * np.asarray(x)
    target = lambda x, t: (horizon - t) ** 2 * w(x)

    def source(x, t):
        x = np.asarray(x, float)
        t = np.asarray(t, float)
        return (
            2 * (horizon - t) * w(x)
            - (horizon - t) ** 2 * wprime(x)
            + rate_fn(x) * (horizon - t) ** 2 * w(x)
            - (horizon - t) ** 2 * w(0.0) * rate_fn(x)
        )

    errs = []
    for h in (0.02, 0.01, 0.005):
        prob = DualProblem(constant_growth(1.0), rate_fn, source, horizon, length)
        t_grid, psi0 = solve_volterra(prob, h)
        errs.append(float(np.max(np.abs(psi0 - target(0.0, t_grid)))))
    order = float(np.log2(errs[-2] / errs[-1]))

    zero = lambda x, t: np.zeros(np.broadcast(np.asarray(x), np.asarray(t)).shape)
    prob0 = DualProblem(constant_growth(1.0), constant_rate(1.0), zero, horizon, 1.0)
    _, psi0_zero = solve_volterra(prob0, 0.01)

    model = renewal_model(constant_growth(1.0), constant_rate(1.0), BirthLaw(AtomLaw([0.0])), 1.0)
    u0 = EmpiricalMeasure.from_points(model.space, np.array([[0.0]]))
    src, supp = bump_source(1.0, 1.0, 0.8, 1.0, 0.8)
    cc = duality_crosscheck(model, u0, src, supp, horizon, 100_000, 0.01, seed=7)
    elapsed = time.time() - t0
    ok = (
        1.7 <= order <= 2.3
        and np.all(psi0_zero == 0.0)
        and cc.passed
        and elapsed < 120.0
    )
    report(
        7,
        ok,
        f"observed order {order:.2f} in [1.7, 2.3]; zero source -> zero trace; "
        f"cross-check |{cc.lhs:.5f} - {cc.rhs:.5f}| <= {cc.tolerance:.5f}; {elapsed:.0f}s (< 120s)",
    )


# ---------------------------------------------------------------------------
# 8. byte-identical reproducibility
# ---------------------------------------------------------------------------


def test_criterion_8_reproducibility(tmp_path):
    contract_cfg = {
        "model": {
            "name": "growth_fragmentation",
            "growth": {"kind": "constant", "value": 1.0},
            "rate": {"kind": "affine_power", "intercept": 1.0, "slopes": [1.0], "powers": [1.0]},
            "fragment_law": {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        },
        "truncation": "auto",
        "initial": {
            "first": {"kind": "atoms", "points": [1.0]},
            "second": {"kind": "uniform", "lo": 0.0, "hi": 2.0},
        },
        "sim": {"n_pairs": 2000, "horizon": 2.0, "checkpoints": 5, "seed": 88, "ot_subsample": 256},
    }
    sweep_cfg = {"samples": 3000, "seed": 9, "models": ["renewal", "growth_fragmentation"]}
    dual_cfg = {
        "growth": {"kind": "constant", "value": 1.0},
        "rate": {"kind": "constant", "value": 1.0},
        "horizon": 2.0,
        "time_step": 0.02,
        "n_particles": 4000,
        "seed": 12,
        "source": {"amplitude": 1.0, "x_center": 1.0, "x_width": 0.8, "t_center": 1.0, "t_width": 0.8},
    }
    jobs = [
        ("contract", contract_cfg, ("contract.csv", "contract_summary.json")),
        ("sweep", sweep_cfg, ("sweep.csv", "sweep_summary.json")),
        ("dual-check", dual_cfg, ("dual_psi0.csv", "dual_check.csv", "dual_check_summary.json")),
    ]
    identical = True
    checked = []
    for cmd, cfg, outputs in jobs:
        cfg_path = tmp_path / f"{cmd}.json"
        cfg_path.write_text(json.dumps(cfg))
        payloads = []
        for rep in ("x", "y"):
            out = tmp_path / f"{cmd}_{rep}"
            code = cli_main([cmd, "--config", str(cfg_path), "--out", str(out), "--no-plots"])
            assert code == 0
            payloads.append(b"".join((out / f).read_bytes() for f in outputs))
        identical &= payloads[0] == payloads[1]
        checked.extend(outputs)
    report(8, identical, f"two seeded runs byte-identical across {checked}")
