"""Simulation engine: single-population jump-flow processes, coupled pair
processes, and the interacting replacement system.

Event generation is thinning against an interval envelope: within a lookahead
window, candidate times arrive at the envelope rate computed from the rate's
interval bound along the flow, and are accepted with probability
rate / envelope at the flowed state.  An envelope that the sampled rate
exceeds is a hard error, never a clamp; clamping would bias the jump law.

The coupled process drives both components with one clock and simultaneous
flow, classifies accepted events as common / solo by the rate triple, and
applies shared jump randomness on common events.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .laws import gauss_legendre_01
from .measures import EmpiricalMeasure
from .models import ModelSpec, event_rates

__all__ = [
    "SimConfig",
    "CoupledPair",
    "PopulationResult",
    "CoupledResult",
    "EnvelopeViolation",
    "simulate_population",
    "simulate_coupled",
    "coupled_experiment",
    "thinning_next_event",
]

_RATE_SLACK = 1e-9  # relative slack before an envelope overrun is an error


class EnvelopeViolation(RuntimeError):
    """Sampled jump rate exceeded the thinning envelope; the rate's interval
    bound is wrong for this model."""

    def __init__(self, model_name, state, time, rate, bound):
        self.state = np.asarray(state)
        self.time = float(time)
        self.rate = float(rate)
        self.bound = float(bound)
        super().__init__(
            f"{model_name}: rate {rate:.6g} exceeds envelope {bound:.6g} "
            f"at state {self.state.tolist()} (t={time:.6g})"
        )


@dataclass(frozen=True)
class SimConfig:
    model: ModelSpec
    n_particles: int
    horizon: float
    checkpoints: tuple
    seed: int
    lookahead: float = 0.1

    def __post_init__(self):
        cps = tuple(float(c) for c in self.checkpoints)
        if any(c < 0 or c > self.horizon + 1e-12 for c in cps):
            raise ValueError("checkpoints must lie in [0, horizon]")
        if any(b < a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be sorted")
        object.__setattr__(self, "checkpoints", cps)
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        if self.model.interacting and self.n_particles < 2:
            raise ValueError("the interacting model needs at least two particles")
        if self.lookahead <= 0:
            raise ValueError("lookahead must be positive")


@dataclass
class CoupledPair:
    """One pair of the coupled process with shared-randomness bookkeeping."""

    first: np.ndarray
    second: np.ndarray
    common_events: int = 0
    solo_first_events: int = 0
    solo_second_events: int = 0


@dataclass
class PopulationResult:
    times: np.ndarray
    measures: list
    event_counts: np.ndarray
    integrals: np.ndarray | None = None


@dataclass
class CoupledResult:
    times: np.ndarray
    firsts: list
    seconds: list
    mean_cost: np.ndarray
    stderr: np.ndarray
    common_events: np.ndarray
    solo_events: np.ndarray
    fraction_with_event: np.ndarray
    event_counts: np.ndarray = None


# ---------------------------------------------------------------------------
# window advance, independent particles
# ---------------------------------------------------------------------------


def _proposals(bound, trem, rng):
    waits = rng.exponential(size=bound.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        prop = np.where(bound > 0, waits / np.where(bound > 0, bound, 1.0), np.inf)
    return np.minimum(prop, trem), prop < trem


def _segment_integrals(model, start_pts, start_times, step, integrand):
    nodes, wq = gauss_legendre_01(8)
    vals = np.zeros(start_pts.shape[0])
    for xk, wk in zip(nodes, wq):
        state_k = model.flow(start_pts, xk * step)
        vals += wk * integrand(state_k, start_times + xk * step)
    return vals * step


def _advance_population(model, pts, t0, t1, rng, counts, lookahead, integrand, integrals):
    n = pts.shape[0]
    t = t0
    while t < t1 - 1e-12:
        w1 = min(t + lookahead, t1)
        tau = np.full(n, t)
        active = np.arange(n)
        while active.size:
            cur = pts[active]
            trem = w1 - tau[active]
            bound = model.clock * model.rate.interval_bound(cur, model.flow(cur, trem))
            step, hit = _proposals(bound, trem, rng)
            moved = model.flow(cur, step)
            if integrand is not None:
                integrals[active] += _segment_integrals(model, cur, tau[active], step, integrand)
            pts[active] = moved
            tau[active] += step
            hit_idx = active[hit]
            if hit_idx.size:
                rate_now = model.clock * model.rate.evaluate(pts[hit_idx])
                bhit = bound[hit]
                bad = rate_now > bhit * (1.0 + _RATE_SLACK) + 1e-12
                if np.any(bad):
                    k = int(np.flatnonzero(bad)[0])
                    raise EnvelopeViolation(
                        model.name, pts[hit_idx[k]], tau[hit_idx[k]], rate_now[k], bhit[k]
                    )
                u = rng.uniform(size=hit_idx.size)
                accepted = u * bhit <= rate_now
                jidx = hit_idx[accepted]
                if jidx.size:
                    pts[jidx] = model.jump(pts[jidx], rng)
                    counts[jidx] += 1
            active = hit_idx
        t = w1


def _advance_coupled(model, x, y, t0, t1, rng, counters, lookahead):
    n = x.shape[0]
    t = t0
    while t < t1 - 1e-12:
        w1 = min(t + lookahead, t1)
        tau = np.full(n, t)
        active = np.arange(n)
        while active.size:
            cx, cy = x[active], y[active]
            trem = w1 - tau[active]
            bx = model.rate.interval_bound(cx, model.flow(cx, trem))
            by = model.rate.interval_bound(cy, model.flow(cy, trem))
            mask = model.aligned(cx, cy)
            bound = model.clock * np.where(mask, np.maximum(bx, by), bx + by)
            step, hit = _proposals(bound, trem, rng)
            x[active] = model.flow(cx, step)
            y[active] = model.flow(cy, step)
            tau[active] += step
            hit_idx = active[hit]
            if hit_idx.size:
                rc, r1, r2 = event_rates(model, x[hit_idx], y[hit_idx])
                total = rc + r1 + r2
                bhit = bound[hit]
                bad = total > bhit * (1.0 + _RATE_SLACK) + 1e-12
                if np.any(bad):
                    k = int(np.flatnonzero(bad)[0])
                    raise EnvelopeViolation(
                        model.name,
                        np.concatenate([x[hit_idx[k]], y[hit_idx[k]]]),
                        tau[hit_idx[k]],
                        total[k],
                        bhit[k],
                    )
                u = rng.uniform(size=hit_idx.size)
                accepted = u * bhit <= total
                aidx = hit_idx[accepted]
                if aidx.size:
                    pick = rng.uniform(size=aidx.size) * total[accepted]
                    rc_a = rc[accepted]
                    r1_a = r1[accepted]
                    is_common = pick < rc_a
                    is_solo1 = ~is_common & (pick < rc_a + r1_a)
                    is_solo2 = ~(is_common | is_solo1)
                    ci = aidx[is_common]
                    if ci.size:
                        nx, ny = model.common_jump(x[ci], y[ci], rng)
                        x[ci], y[ci] = nx, ny
                        counters["common"] += ci.size
                    s1 = aidx[is_solo1]
                    if s1.size:
                        x[s1] = model.jump(x[s1], rng)
                        counters["solo"] += s1.size
                    s2 = aidx[is_solo2]
                    if s2.size:
                        y[s2] = model.jump(y[s2], rng)
                        counters["solo"] += s2.size
                    counters["per_pair"][aidx] += 1
            active = hit_idx
        t = w1


# ---------------------------------------------------------------------------
# interacting replacement system
# ---------------------------------------------------------------------------


def _sexual_events(n, dt, rng, mix):
    n_events = rng.poisson(n * dt)
    if n_events == 0:
        return None
    ks = rng.integers(0, n, size=n_events)
    ms = rng.integers(0, n - 1, size=n_events)
    ms = ms + (ms >= ks)  # partner drawn uniformly among the other particles
    sig = mix.law.sample(n_events, rng)
    return ks, ms, sig


def _conflict_free_prefix(ks, ms):
    """Length of the longest event prefix whose particle indices are all
    distinct; such events commute and can be applied as one batch."""
    idx = np.empty(2 * ks.shape[0], dtype=np.int64)
    idx[0::2] = ks
    idx[1::2] = ms
    order = np.argsort(idx, kind="stable")
    srt = idx[order]
    dup = srt[1:] == srt[:-1]
    if not np.any(dup):
        return ks.shape[0]
    first_clash = int(np.min(order[1:][dup]))
    return max(1, first_clash // 2)


def _apply_replacements(arrays, ks, ms, sig, counts):
    """Apply sequential replacement events exactly, in conflict-free batches."""
    start = 0
    n_events = ks.shape[0]
    while start < n_events:
        width = _conflict_free_prefix(ks[start:], ms[start:])
        kb = ks[start : start + width]
        mb = ms[start : start + width]
        sb = sig[start : start + width, None]
        for arr in arrays:
            arr[kb] = sb * arr[kb] + (1.0 - sb) * arr[mb]
        counts[kb] += 1
        start += width


def _advance_sexual_population(mix, pts, t0, t1, rng, counts):
    ev = _sexual_events(pts.shape[0], t1 - t0, rng, mix)
    if ev is None:
        return
    _apply_replacements((pts,), *ev, counts)


def _advance_sexual_coupled(mix, x, y, t0, t1, rng, counters):
    ev = _sexual_events(x.shape[0], t1 - t0, rng, mix)
    if ev is None:
        return
    _apply_replacements((x, y), *ev, counters["per_pair"])
    counters["common"] += ev[0].shape[0]


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def simulate_population(
    cfg: SimConfig,
    init: EmpiricalMeasure,
    integrand=None,
    rng: np.random.Generator | None = None,
) -> PopulationResult:
    """Evolve n_particles independent trajectories (interacting for the
    replacement model) from i.i.d. draws of ``init``; returns the empirical
    cloud at each checkpoint.

    ``integrand(points, times)`` is accumulated pathwise along the flow with
    a fixed high-order rule per segment, giving each particle's time integral
    of the observable.  Bit-reproducible for a fixed seed.
    """
    model = cfg.model
    if init.space != model.space:
        raise ValueError("initial measure lives on the wrong space")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    pts = init.sample(cfg.n_particles, rng)
    counts = np.zeros(cfg.n_particles, dtype=int)
    integrals = np.zeros(cfg.n_particles) if integrand is not None else None
    measures = []
    t = 0.0
    for ck in cfg.checkpoints:
        if ck > t:
            if model.interacting:
                if integrand is not None:
                    raise ValueError("path integrals are not supported for the interacting model")
                _advance_sexual_population(model.mix, pts, t, ck, rng, counts)
            else:
                _advance_population(model, pts, t, ck, rng, counts, cfg.lookahead, integrand, integrals)
            t = ck
        measures.append(EmpiricalMeasure.from_points(model.space, pts.copy()))
    return PopulationResult(np.asarray(cfg.checkpoints), measures, counts, integrals)


def simulate_coupled(
    cfg: SimConfig,
    first0: np.ndarray,
    second0: np.ndarray,
    rng: np.random.Generator | None = None,
) -> CoupledResult:
    """Evolve initial pairs under the coupled generator with a shared flow
    clock; reports the paired clouds and the mean pair cost with its standard
    error at each checkpoint.

    The initial pairs should be drawn from a coupling of the two laws of
    interest, typically ``otsolver.sample_plan`` of the optimal initial plan.
    """
    model = cfg.model
    x = np.array(np.atleast_2d(first0), float, copy=True)
    y = np.array(np.atleast_2d(second0), float, copy=True)
    if x.shape != y.shape:
        raise ValueError("pair arrays must have identical shape")
    model.space.validate(x)
    model.space.validate(y)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n = x.shape[0]
    counters = {"common": 0, "solo": 0, "per_pair": np.zeros(n, dtype=int)}
    times = np.asarray(cfg.checkpoints)
    firsts, seconds, means, errs = [], [], [], []
    commons, solos, fracs = [], [], []
    t = 0.0
    for ck in cfg.checkpoints:
        if ck > t:
            if model.interacting:
                _advance_sexual_coupled(model.mix, x, y, t, ck, rng, counters)
            else:
                _advance_coupled(model, x, y, t, ck, rng, counters, cfg.lookahead)
            t = ck
        vals = model.cost.evaluate(x, y)
        firsts.append(x.copy())
        seconds.append(y.copy())
        means.append(float(vals.mean()))
        errs.append(float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan"))
        commons.append(counters["common"])
        solos.append(counters["solo"])
        fracs.append(float(np.mean(counters["per_pair"] > 0)))
    return CoupledResult(
        times, firsts, seconds, np.asarray(means), np.asarray(errs),
        np.asarray(commons), np.asarray(solos), np.asarray(fracs),
        counters["per_pair"],
    )


def coupled_experiment(
    cfg: SimConfig,
    first0: np.ndarray,
    second0: np.ndarray,
    replicas: int = 1,
) -> CoupledResult:
    """Replicated coupled run: pairs are split into equal blocks, each block
    simulated as an independent system from a spawned stream.

    For independent-pair models one replica suffices and the pairwise
    standard error applies; the interacting model needs several replicas,
    where the standard error of the mean cost comes from the spread of the
    replica means.
    """
    x = np.atleast_2d(np.asarray(first0, float))
    y = np.atleast_2d(np.asarray(second0, float))
    n = x.shape[0]
    if replicas <= 1:
        return simulate_coupled(cfg, x, y)
    if n % replicas != 0:
        raise ValueError("pair count must split evenly across replicas")
    block = n // replicas
    seeds = np.random.SeedSequence(cfg.seed).spawn(replicas)
    parts = []
    for r in range(replicas):
        sl = slice(r * block, (r + 1) * block)
        parts.append(
            simulate_coupled(cfg, x[sl], y[sl], rng=np.random.default_rng(seeds[r]))
        )
    k = len(cfg.checkpoints)
    block_means = np.array([p.mean_cost for p in parts])  # (replicas, k)
    mean = block_means.mean(axis=0)
    stderr = block_means.std(axis=0, ddof=1) / np.sqrt(replicas)
    firsts = [np.vstack([p.firsts[i] for p in parts]) for i in range(k)]
    seconds = [np.vstack([p.seconds[i] for p in parts]) for i in range(k)]
    commons = np.sum([p.common_events for p in parts], axis=0)
    solos = np.sum([p.solo_events for p in parts], axis=0)
    fracs = np.mean([p.fraction_with_event for p in parts], axis=0)
    counts = np.concatenate([p.event_counts for p in parts])
    return CoupledResult(
        np.asarray(cfg.checkpoints), firsts, seconds, mean, stderr,
        commons, solos, fracs, counts,
    )


def thinning_next_event(model: ModelSpec, state, t: float, delta: float, rng: np.random.Generator):
    """Next event of a single particle (or coupled pair) in [t, t + delta).

    Returns (event_time, event_class) or None when no event falls inside the
    window.  ``state`` is a single point for the population process or a
    (first, second) tuple for the coupled process; event classes are "jump"
    and "common" / "solo_first" / "solo_second" respectively.
    """
    paired = isinstance(state, tuple)
    if paired:
        x = np.atleast_2d(np.asarray(state[0], float)).copy()
        y = np.atleast_2d(np.asarray(state[1], float)).copy()
    else:
        x = np.atleast_2d(np.asarray(state, float)).copy()
    tau = t
    end = t + delta
    while True:
        trem = end - tau
        if paired:
            bx = model.rate.interval_bound(x, model.flow(x, trem))
            by = model.rate.interval_bound(y, model.flow(y, trem))
            aligned = model.aligned(x, y)[0]
            bound = model.clock * float(np.maximum(bx, by)[0] if aligned else (bx + by)[0])
        else:
            bound = model.clock * float(model.rate.interval_bound(x, model.flow(x, trem))[0])
        if bound <= 0.0:
            return None
        wait = rng.exponential() / bound
        if tau + wait >= end:
            return None
        x = model.flow(x, wait)
        if paired:
            y = model.flow(y, wait)
        tau += wait
        if paired:
            rc, r1, r2 = event_rates(model, x, y)
            total = float(rc[0] + r1[0] + r2[0])
        else:
            total = model.clock * float(model.rate.evaluate(x)[0])
        if total > bound * (1.0 + _RATE_SLACK) + 1e-12:
            raise EnvelopeViolation(model.name, x[0], tau, total, bound)
        if rng.uniform() * bound <= total:
            if not paired:
                return tau, "jump"
            pick = rng.uniform() * total
            if pick < float(rc[0]):
                return tau, "common"
            if pick < float(rc[0] + r1[0]):
                return tau, "solo_first"
            return tau, "solo_second"
