"""Model catalog: deterministic flow, jump rate, marginal jump kernel, the
coupled common/solo jump kernels with shared randomness, the cost function,
and the inequality checkers behind each contraction argument.

Catalog (flow / rate / marginal jump / coupled common jump):

renewal               x' = g(x);           d(x);    x <- Z ~ b;        both get the same Z
renewal_system        x' = g_i(x), i torus d_i(x);  (x,i) <- (0,i+1);  both reset (only fires when i == j)
space_age             x' = 1/eps^2, z holds eps^-2 d(x); (x,z) <- (0, z - eps*eta); shared eta
two_time              x1' = x2' = 1;       d(x1,x2); (x1,x2) <- (0,x1); both reset
growth_fragmentation  x' = g(x);           d(x);    x <- r x, r ~ beta; shared r
age_size              x' = 1, z' = g(z);   d(x,z);  (x,z) <- (0, r z);  shared r
sexual                no flow;             1;       replace by sigma x + (1-sigma) partner; shared sigma and coupled partner pair

Solo jumps always redraw fresh randomness for the jumping component only.
In the misaligned regime of renewal_system (different torus states) both
components jump independently at their full rates.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .laws import AtomLaw, UniformLaw, gauss_legendre_01
from .measures import (
    AdmissibilityResult,
    BirthLaw,
    FragmentRatio,
    GridSpec,
    GrowthFunction,
    MatingMix,
    RateFunction,
    Space,
    SpatialNoise,
    admissible_a,
    constant_rate,
    suggest_a,
)
from .otsolver import CostFunction, power_cost, trunc_abs, trunc_abs_state, trunc_sum, trunc_weighted

__all__ = [
    "ModelSpec",
    "renewal_model",
    "renewal_system_model",
    "space_age_model",
    "two_time_model",
    "growth_fragmentation_model",
    "age_size_model",
    "sexual_model",
    "event_rates",
    "coupled_jump",
    "marginal_jump",
    "check_I_inequality",
    "check_delta_sign",
    "check_sexual_convexity",
    "validate_truncation",
    "suggest_truncation",
    "scalar_flow",
    "CheckOutcome",
]

MODEL_NAMES = (
    "renewal",
    "renewal_system",
    "space_age",
    "two_time",
    "growth_fragmentation",
    "age_size",
    "sexual",
)

_FLOW_STEP = 0.01  # fixed substep of the one-step integrator for custom growth


def scalar_flow(g: GrowthFunction) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Vectorized flow map for dx/dt = g(x); exact for constant and affine g,
    classical 4th-order one-step integration otherwise."""
    if g.kind == "constant":
        c = g.c0

        def flow_const(vals, dt):
            return vals + c * np.asarray(dt, float)

        return flow_const
    if g.kind == "affine":
        c0, c1 = g.c0, g.c1
        if c1 == 0.0:
            return scalar_flow(GrowthFunction(g.fn, g.is_nonincreasing, "constant", c0=c0))
        xstar = -c0 / c1

        def flow_affine(vals, dt):
            return xstar + (vals - xstar) * np.exp(c1 * np.asarray(dt, float))

        return flow_affine

    def flow_rk4(vals, dt):
        dt = np.asarray(dt, float)
        dmax = float(np.max(dt)) if dt.size else float(dt)
        if dmax <= 0.0:
            return vals + 0.0
        nsteps = max(1, int(np.ceil(dmax / _FLOW_STEP)))
        h = dt / nsteps
        x = np.array(vals, float, copy=True)
        for _ in range(nsteps):
            k1 = g.evaluate(x)
            k2 = g.evaluate(x + 0.5 * h * k1)
            k3 = g.evaluate(x + 0.5 * h * k2)
            k4 = g.evaluate(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(x < -1e-9):
            raise ValueError("flow integration left [0, inf); g(0) >= 0 violated?")
        return np.maximum(x, 0.0)

    return flow_rk4


@dataclass(frozen=True)
class _AdmissibilityHooks:
    """How to run the truncation certificate for one model: per-state rate
    callables over the check box, the separation metric, the kernel factor."""

    rate_ofs: tuple
    metric: str
    factor: float
    wedge: bool
    box_ncols: int
    default_box: tuple


@dataclass(frozen=True)
class ModelSpec:
    name: str
    space: Space
    cost: CostFunction
    rate: RateFunction
    flow: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jump: Callable | None
    common_jump: Callable | None
    aligned: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kernels: dict
    admissibility: _AdmissibilityHooks | None
    clock: float = 1.0
    time_scale: float = 1.0
    torus_size: int = 0
    interacting: bool = False
    mix: MatingMix | None = None


def _all_aligned(x, y):
    return np.ones(np.atleast_2d(x).shape[0], dtype=bool)


def _rows(points):
    return np.atleast_2d(np.asarray(points, float))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def renewal_model(growth: GrowthFunction, rate: RateFunction, birth: BirthLaw, truncation: float) -> ModelSpec:
    space = Space("age")
    fl = scalar_flow(growth)

    def flow(points, dt):
        out = _rows(points).copy()
        out[:, 0] = fl(out[:, 0], dt)
        return out

    def jump(points, rng):
        out = _rows(points).copy()
        out[:, 0] = birth.law.sample(out.shape[0], rng)
        return out

    def common(x, y, rng):
        x, y = _rows(x).copy(), _rows(y).copy()
        z = birth.law.sample(x.shape[0], rng)
        x[:, 0] = z
        y[:, 0] = z
        return x, y

    hooks = _AdmissibilityHooks(
        (lambda pts: rate.evaluate(pts),), "abs", 1.0, False, 1, ((0.0, 10.0),)
    )
    return ModelSpec(
        "renewal", space, trunc_abs(truncation), rate, flow, jump, common,
        _all_aligned, {"birth": birth, "growth": growth}, hooks,
    )


def renewal_system_model(
    growths: Sequence[GrowthFunction], rates: Sequence[RateFunction], truncation: float
) -> ModelSpec:
    n_states = len(rates)
    if len(growths) != n_states or n_states < 1:
        raise ValueError("need one growth and one rate per torus state")
    space = Space("age_state", n_states=n_states)
    flows = [scalar_flow(g) for g in growths]

    def flow(points, dt):
        out = _rows(points).copy()
        dt = np.broadcast_to(np.asarray(dt, float), (out.shape[0],))
        states = np.round(out[:, 1]).astype(int)
        for i in range(1, n_states + 1):
            m = states == i
            if np.any(m):
                out[m, 0] = flows[i - 1](out[m, 0], dt[m])
        return out

    def rate_fn(points):
        pts = _rows(points)
        states = np.round(pts[:, 1]).astype(int)
        vals = np.empty(pts.shape[0])
        for i in range(1, n_states + 1):
            m = states == i
            if np.any(m):
                vals[m] = rates[i - 1].evaluate(pts[m, 0][:, None])
        return vals

    def jump(points, rng):
        out = _rows(points).copy()
        states = np.round(out[:, 1]).astype(int)
        out[:, 0] = 0.0
        out[:, 1] = (states % n_states) + 1
        return out

    def common(x, y, rng):
        return jump(x, rng), jump(y, rng)

    def aligned(x, y):
        return np.round(_rows(x)[:, 1]) == np.round(_rows(y)[:, 1])

    def per_state(i):
        return lambda pts: rates[i].evaluate(pts)

    hooks = _AdmissibilityHooks(
        tuple(per_state(i) for i in range(n_states)), "abs", 1.0, False, 1, ((0.0, 10.0),)
    )
    return ModelSpec(
        "renewal_system", space, trunc_abs_state(truncation), RateFunction(rate_fn),
        flow, jump, common, aligned, {"growths": tuple(growths), "rates": tuple(rates)},
        hooks, torus_size=n_states,
    )


def space_age_model(rate: RateFunction, noise: SpatialNoise, dim: int, truncation: float) -> ModelSpec:
    space = Space("age_position", dim=dim)
    if noise.law.dim != dim:
        raise ValueError(f"noise law lives in dimension {noise.law.dim}, model in {dim}")
    eps = noise.scale
    clock = eps ** -2.0

    def flow(points, dt):
        out = _rows(points).copy()
        out[:, 0] = out[:, 0] + clock * np.asarray(dt, float)
        return out

    def age_rate(points):
        return rate.evaluate(_rows(points)[:, 0][:, None])

    def _noise(m, rng):
        eta = noise.law.sample(m, rng)
        return eta[:, None] if eta.ndim == 1 else eta

    def jump(points, rng):
        out = _rows(points).copy()
        out[:, 1:] -= eps * _noise(out.shape[0], rng)
        out[:, 0] = 0.0
        return out

    def common(x, y, rng):
        x, y = _rows(x).copy(), _rows(y).copy()
        eta = _noise(x.shape[0], rng)
        x[:, 1:] -= eps * eta
        y[:, 1:] -= eps * eta
        x[:, 0] = 0.0
        y[:, 0] = 0.0
        return x, y

    hooks = _AdmissibilityHooks(
        (lambda pts: rate.evaluate(pts),), "abs", 1.0, False, 1, ((0.0, 10.0),)
    )
    rate_full = RateFunction(age_rate, rate.monotone, None if rate.bound_fn is None else (
        lambda p, q: rate.bound_fn(_rows(p)[:, 0][:, None], _rows(q)[:, 0][:, None])
    ))
    return ModelSpec(
        "space_age", space, trunc_sum(truncation), rate_full, flow, jump, common,
        _all_aligned, {"noise": noise}, hooks, clock=clock, time_scale=eps,
    )


def two_time_model(rate: RateFunction, truncation: float) -> ModelSpec:
    space = Space("time_pair")

    def flow(points, dt):
        out = _rows(points).copy()
        dt = np.asarray(dt, float)
        out[:, 0] = out[:, 0] + dt
        out[:, 1] = out[:, 1] + dt
        return out

    def jump(points, rng):
        out = _rows(points).copy()
        out[:, 1] = out[:, 0]
        out[:, 0] = 0.0
        return out

    def common(x, y, rng):
        return jump(x, rng), jump(y, rng)

    hooks = _AdmissibilityHooks(
        (lambda pts: rate.evaluate(pts),), "weighted_pair", 1.0, True, 2,
        ((0.0, 10.0), (0.0, 10.0)),
    )
    return ModelSpec(
        "two_time", space, trunc_weighted(truncation), rate, flow, jump, common,
        _all_aligned, {}, hooks,
    )


def growth_fragmentation_model(
    growth: GrowthFunction, rate: RateFunction, fragment: FragmentRatio, truncation: float
) -> ModelSpec:
    space = Space("age")  # scalar size coordinate, same layout as age
    fl = scalar_flow(growth)

    def flow(points, dt):
        out = _rows(points).copy()
        out[:, 0] = fl(out[:, 0], dt)
        return out

    def jump(points, rng):
        out = _rows(points).copy()
        out[:, 0] *= fragment.law.sample(out.shape[0], rng)
        return out

    def common(x, y, rng):
        x, y = _rows(x).copy(), _rows(y).copy()
        r = fragment.law.sample(x.shape[0], rng)
        x[:, 0] *= r
        y[:, 0] *= r
        return x, y

    hooks = _AdmissibilityHooks(
        (lambda pts: rate.evaluate(pts),), "abs", 1.0 - fragment.mean_r, False, 1, ((0.0, 10.0),)
    )
    return ModelSpec(
        "growth_fragmentation", space, trunc_abs(truncation), rate, flow, jump, common,
        _all_aligned, {"fragment": fragment, "growth": growth}, hooks,
    )


def age_size_model(
    growth: GrowthFunction, rate: RateFunction, fragment: FragmentRatio, truncation: float
) -> ModelSpec:
    space = Space("age_size")
    fl = scalar_flow(growth)

    def flow(points, dt):
        out = _rows(points).copy()
        dt = np.asarray(dt, float)
        out[:, 0] = out[:, 0] + dt
        out[:, 1] = fl(out[:, 1], dt)
        return out

    def jump(points, rng):
        out = _rows(points).copy()
        out[:, 1] *= fragment.law.sample(out.shape[0], rng)
        out[:, 0] = 0.0
        return out

    def common(x, y, rng):
        x, y = _rows(x).copy(), _rows(y).copy()
        r = fragment.law.sample(x.shape[0], rng)
        x[:, 1] *= r
        y[:, 1] *= r
        x[:, 0] = 0.0
        y[:, 0] = 0.0
        return x, y

    hooks = _AdmissibilityHooks(
        (lambda pts: rate.evaluate(pts),), "sum_pair", 1.0 - fragment.mean_r, False, 2,
        ((0.0, 10.0), (0.0, 10.0)),
    )
    return ModelSpec(
        "age_size", space, trunc_sum(truncation), rate, flow, jump, common,
        _all_aligned, {"fragment": fragment, "growth": growth}, hooks,
    )


def sexual_model(mix: MatingMix, dim: int) -> ModelSpec:
    space = Space("trait", dim=dim)

    def flow(points, dt):
        return _rows(points).copy()

    return ModelSpec(
        "sexual", space, power_cost(mix.power), constant_rate(1.0), flow,
        None, None, _all_aligned, {"mix": mix}, None, interacting=True, mix=mix,
    )


# ---------------------------------------------------------------------------
# event rates and jump dispatch
# ---------------------------------------------------------------------------


def event_rates(model: ModelSpec, first, second):
    """Intensity triple (common, solo_first, solo_second) of the coupled
    generator at a pair.  Aligned regime: min / positive parts, summing to the
    max of the two rates.  Misaligned regime (torus states differ): both
    components jump independently at full rate."""
    x, y = _rows(first), _rows(second)
    dx = model.clock * model.rate.evaluate(x)
    dy = model.clock * model.rate.evaluate(y)
    mask = model.aligned(x, y)
    common = np.where(mask, np.minimum(dx, dy), 0.0)
    solo_first = np.where(mask, np.maximum(dx - dy, 0.0), dx)
    solo_second = np.where(mask, np.maximum(dy - dx, 0.0), dy)
    return common, solo_first, solo_second


def marginal_jump(model: ModelSpec, point, rng: np.random.Generator):
    """Post-jump state of a single particle (fresh randomness)."""
    if model.jump is None:
        raise ValueError("the interacting model has no single-particle jump kernel")
    return model.jump(_rows(point), rng)[0]


def coupled_jump(model: ModelSpec, pair, event_class: str, rng: np.random.Generator):
    """Post-jump pair under one coupled event.

    Common events share the jump randomness between the two components; solo
    events move one component with fresh randomness.
    """
    x, y = _rows(pair[0]), _rows(pair[1])
    if event_class == "common":
        nx, ny = model.common_jump(x, y, rng)
        return nx[0], ny[0]
    if event_class == "solo_first":
        return model.jump(x, rng)[0], y[0].copy()
    if event_class == "solo_second":
        return x[0].copy(), model.jump(y, rng)[0]
    raise ValueError(f"unknown event class {event_class!r}")


# ---------------------------------------------------------------------------
# inequality checkers
# ---------------------------------------------------------------------------

CheckOutcome = namedtuple("CheckOutcome", "values expected_sign exact")


def _as1d(*vals):
    arrs = np.broadcast_arrays(*[np.asarray(v, float) for v in vals])
    return [np.atleast_1d(a) for a in arrs]


def check_I_inequality(model: ModelSpec, x, y) -> CheckOutcome:
    """Signed margin rho(x, y) - I(x, y) for the renewal model; nonnegative
    under an admissible truncation.  I weights the solo-jump relocation cost
    by the normalized rate surplus; both rates zero makes it vacuous (I = 0).
    """
    if model.name != "renewal":
        raise ValueError("the I-inequality is specific to the renewal model")
    x, y = _as1d(x, y)
    a = model.cost.truncation
    birth = model.kernels["birth"].law
    dx = model.rate.evaluate(x[:, None])
    dy = model.rate.evaluate(y[:, None])
    dmax = np.maximum(dx, dy)
    relocate_y = np.atleast_1d(birth.expect_trunc(a, 0.0, 1.0, y))
    relocate_x = np.atleast_1d(birth.expect_trunc(a, 0.0, 1.0, x))
    num = np.maximum(dx - dy, 0.0) * relocate_y + np.maximum(dy - dx, 0.0) * relocate_x
    with np.errstate(invalid="ignore", divide="ignore"):
        i_val = np.where(dmax > 0.0, num / np.where(dmax > 0.0, dmax, 1.0), 0.0)
    rho = np.minimum(a, np.abs(x - y))
    return CheckOutcome(rho - i_val, +1, birth.exact_expectations)


def _delta_renewal_system(model, state, x, y):
    state = np.atleast_1d(np.asarray(state, int))
    x, y = _as1d(x, y)
    a = model.cost.truncation
    rates = model.kernels["rates"]
    dx = np.empty(x.shape[0])
    dy = np.empty(x.shape[0])
    for i in range(1, model.torus_size + 1):
        m = state == i
        if np.any(m):
            dx[m] = rates[i - 1].evaluate(x[m][:, None])
            dy[m] = rates[i - 1].evaluate(y[m][:, None])
    vals = np.maximum(dx, dy) * np.minimum(np.abs(x - y), a) - np.abs(dx - dy) * a
    return CheckOutcome(vals, +1, True)


def _delta_space_age(model, x, z, y, r):
    x, y = _as1d(x, y)
    z = np.atleast_2d(np.asarray(z, float))
    r = np.atleast_2d(np.asarray(r, float))
    a = model.cost.truncation
    noise = model.kernels["noise"]
    eps = noise.scale
    dx = model.rate.evaluate(np.column_stack([x, z]))
    dy = model.rate.evaluate(np.column_stack([y, r]))
    gap = np.linalg.norm(z - r, axis=1)
    rho = np.minimum(a, np.abs(x - y) + gap)
    if isinstance(noise.law, AtomLaw):
        eta = noise.law.points[:, None] if noise.law.points.ndim == 1 else noise.law.points
        w = noise.law.weights
        shift = (z - r)[:, None, :] - eps * eta[None, :, :]
        dist = np.linalg.norm(shift, axis=2)
        e_first = np.minimum(a, y[:, None] + dist) @ w
        shift2 = (z - r)[:, None, :] + eps * eta[None, :, :]
        e_second = np.minimum(a, x[:, None] + np.linalg.norm(shift2, axis=2)) @ w
        exact = True
    elif z.shape[1] == 1 and noise.law.dim == 1:
        gap1 = (z - r)[:, 0]
        e_first = np.atleast_1d(noise.law.expect_trunc(a, y, eps, gap1))
        e_second = np.atleast_1d(noise.law.expect_trunc(a, x, eps, -gap1))
        exact = noise.law.exact_expectations
    else:
        raise ValueError("multivariate noise integrals need an atom law")
    vals = (
        np.minimum(dx, dy) * (np.minimum(a, gap) - rho)
        + np.maximum(dx - dy, 0.0) * (e_first - rho)
        + np.maximum(dy - dx, 0.0) * (e_second - rho)
    )
    return CheckOutcome(vals, -1, exact)


def _delta_two_time(model, x1, x2, t1, t2):
    x1, x2, t1, t2 = _as1d(x1, x2, t1, t2)
    a = model.cost.truncation
    dx = model.rate.evaluate(np.column_stack([x1, x2]))
    dy = model.rate.evaluate(np.column_stack([t1, t2]))
    rho = np.minimum(a, 2.0 * np.abs(x1 - t1) + np.abs(x2 - t2))
    vals = (
        -np.maximum(dx, dy) * rho
        + np.minimum(dx, dy) * np.minimum(a, np.abs(x1 - t1))
        + np.maximum(dx - dy, 0.0) * np.minimum(a, 2.0 * np.abs(t1) + np.abs(x1 - t2))
        + np.maximum(dy - dx, 0.0) * np.minimum(a, 2.0 * np.abs(x1) + np.abs(t1 - x2))
    )
    return CheckOutcome(vals, -1, True)


def _delta_growth_fragmentation(model, x, y):
    x, y = _as1d(x, y)
    a = model.cost.truncation
    frag = model.kernels["fragment"].law
    dx = model.rate.evaluate(x[:, None])
    dy = model.rate.evaluate(y[:, None])
    rho = np.minimum(a, np.abs(x - y))
    e_common = np.atleast_1d(frag.expect_trunc(a, 0.0, np.abs(x - y), 0.0))
    e_first = np.atleast_1d(frag.expect_trunc(a, 0.0, x, y))
    e_second = np.atleast_1d(frag.expect_trunc(a, 0.0, y, x))
    vals = (
        -np.maximum(dx, dy) * rho
        + np.minimum(dx, dy) * e_common
        + np.maximum(dx - dy, 0.0) * e_first
        + np.maximum(dy - dx, 0.0) * e_second
    )
    return CheckOutcome(vals, -1, frag.exact_expectations)


def _margin_age_size(model, x, z, t, s):
    x, z, t, s = _as1d(x, z, t, s)
    a = model.cost.truncation
    frag = model.kernels["fragment"].law
    dx = model.rate.evaluate(np.column_stack([x, z]))
    dy = model.rate.evaluate(np.column_stack([t, s]))
    lhs = np.maximum(dx, dy) * np.minimum(a, np.abs(x - t) + np.abs(z - s))
    e_common = np.atleast_1d(frag.expect_trunc(a, 0.0, np.abs(z - s), 0.0))
    rhs = np.minimum(dx, dy) * e_common + a * np.abs(dx - dy)
    return CheckOutcome(lhs - rhs, +1, frag.exact_expectations)


def check_delta_sign(model: ModelSpec, *coords) -> CheckOutcome:
    """Per-model jump-balance quantity with its proof-expected sign.

    renewal_system        (state, x, y)          -> Delta_i, nonnegative
    space_age             (x, z, y, r)           -> Delta, nonpositive
    two_time              (x1, x2, y1, y2)       -> Delta, nonpositive
    growth_fragmentation  (x, y)                 -> Delta, nonpositive
    age_size              (x, z, y, r)           -> inequality margin, nonnegative
    """
    dispatch = {
        "renewal_system": _delta_renewal_system,
        "space_age": _delta_space_age,
        "two_time": _delta_two_time,
        "growth_fragmentation": _delta_growth_fragmentation,
        "age_size": _margin_age_size,
    }
    if model.name not in dispatch:
        raise ValueError(f"no jump-balance checker for model {model.name!r}")
    return dispatch[model.name](model, *coords)


def _mix_expect_power(law, A, B, C, p):
    """E_sigma[(A sigma^2 + B sigma + C)^(p/2)] for sigma ~ law on [0, 1].

    The integrand is smooth except possibly near the quadratic's minimum, so
    the range is split there with graded pieces; Gauss-Legendre per piece is
    then accurate to round-off.
    """
    if isinstance(law, AtomLaw):
        sig = law.points[None, :]
        q = A[:, None] * sig**2 + B[:, None] * sig + C[:, None]
        return np.maximum(q, 0.0) ** (p / 2.0) @ law.weights
    lo, hi = law.lo, law.hi
    n = A.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        sigstar = np.where(A > 0, -B / (2.0 * np.maximum(A, 1e-300)), lo)
        msq = np.maximum(C - B**2 / (4.0 * np.maximum(A, 1e-300)), 0.0)
        width = np.where(A > 0, np.sqrt(msq / np.maximum(A, 1e-300)), hi - lo)
    width = np.maximum(width, 1e-12)
    offsets = np.array([256.0, 64.0, 16.0, 4.0, 1.0, 0.0, 1.0, 4.0, 16.0, 64.0, 256.0])
    signs = np.array([-1.0] * 5 + [0.0] + [1.0] * 5)
    breaks = sigstar[:, None] + signs[None, :] * offsets[None, :] * width[:, None]
    breaks = np.clip(breaks, lo, hi)
    breaks = np.concatenate([np.full((n, 1), lo), breaks, np.full((n, 1), hi)], axis=1)
    breaks.sort(axis=1)
    nodes, wq = gauss_legendre_01(32)
    left = breaks[:, :-1, None]
    seg = np.diff(breaks, axis=1)[:, :, None]
    sig = left + seg * nodes[None, None, :]
    q = A[:, None, None] * sig**2 + B[:, None, None] * sig + C[:, None, None]
    f = np.maximum(q, 0.0) ** (p / 2.0)
    dens = law.density(sig)
    return np.sum(f * dens * wq[None, None, :] * seg, axis=(1, 2))


def check_sexual_convexity(mix: MatingMix, x1, x1_star, y1, y1_star) -> CheckOutcome:
    """Margin of the mixing convexity bound for one replacement event:
    theta |x'-y'|^p + (1-theta) |x'*-y'*|^p minus the sigma-average of
    |sigma (x'-y') + (1-sigma)(x'*-y'*)|^p.  Nonnegative for p >= 1."""
    u = np.atleast_2d(np.asarray(x1, float)) - np.atleast_2d(np.asarray(y1, float))
    w = np.atleast_2d(np.asarray(x1_star, float)) - np.atleast_2d(np.asarray(y1_star, float))
    p = mix.power
    theta = mix.mix_mean
    diff = u - w
    A = np.sum(diff * diff, axis=1)
    B = 2.0 * np.sum(w * diff, axis=1)
    C = np.sum(w * w, axis=1)
    integral = _mix_expect_power(mix.law, A, B, C, p)
    rhs = theta * np.linalg.norm(u, axis=1) ** p + (1.0 - theta) * np.linalg.norm(w, axis=1) ** p
    exact = isinstance(mix.law, AtomLaw) or p == 2.0
    return CheckOutcome(rhs - integral, +1, exact)


# ---------------------------------------------------------------------------
# truncation certificate wiring
# ---------------------------------------------------------------------------


def _grid_for(model: ModelSpec, grid: GridSpec | None) -> GridSpec:
    if grid is not None:
        return grid
    return GridSpec(model.admissibility.default_box)


def validate_truncation(model: ModelSpec, candidate_a: float, grid: GridSpec | None = None) -> AdmissibilityResult:
    """Run the admissibility certificate for the model's truncation level;
    for the torus system the worst state decides."""
    if model.admissibility is None:
        raise ValueError(f"model {model.name!r} carries no truncation condition")
    hooks = model.admissibility
    grid = _grid_for(model, grid)
    worst = None
    for rate_of in hooks.rate_ofs:
        res = admissible_a(rate_of, hooks.metric, candidate_a, grid, hooks.factor, hooks.wedge)
        if not res.valid:
            return res
        if worst is None or res.bound < worst.bound:
            worst = res
    return worst


def suggest_truncation(model: ModelSpec, grid: GridSpec | None = None) -> float:
    """Grid estimate min(a0, 1) with a 0.9 safety factor, worst state for the
    torus system."""
    if model.admissibility is None:
        raise ValueError(f"model {model.name!r} carries no truncation condition")
    hooks = model.admissibility
    grid = _grid_for(model, grid)
    return min(
        suggest_a(rate_of, hooks.metric, grid, hooks.factor, hooks.wedge)
        for rate_of in hooks.rate_ofs
    )
