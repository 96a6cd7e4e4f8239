"""State spaces, empirical measures, rate and growth abstractions, and the
numerical certificate for the truncation level of the transport cost.

Points of every state space are plain float arrays; a cloud of n points is an
(n, ncols) array whose column layout is fixed by the :class:`Space` kind:

==============  =======================================  =========
kind            columns                                  constraint
==============  =======================================  =========
age             x                                        x >= 0
age_state       x, i                                     x >= 0, i in {1..n_states}
age_position    x, z_1..z_d                              x >= 0
time_pair       x1, x2                                   0 <= x1 < x2
age_size        x, z                                     x >= 0, z >= 0
trait           x_1..x_d                                 none
==============  =======================================  =========
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .laws import AtomLaw, BoxLaw, TruncPowerLaw, UniformLaw

__all__ = [
    "Space",
    "EmpiricalMeasure",
    "RateFunction",
    "GrowthFunction",
    "BirthLaw",
    "SpatialNoise",
    "FragmentRatio",
    "MatingMix",
    "GridSpec",
    "AdmissibilityResult",
    "admissible_a",
    "suggest_a",
    "sample",
]

_SPACE_KINDS = ("age", "age_state", "age_position", "time_pair", "age_size", "trait")


@dataclass(frozen=True)
class Space:
    kind: str
    dim: int = 1
    n_states: int = 0

    def __post_init__(self):
        if self.kind not in _SPACE_KINDS:
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.kind == "age_state" and self.n_states < 1:
            raise ValueError("age_state space needs n_states >= 1")
        if self.kind in ("age_position", "trait") and self.dim < 1:
            raise ValueError("vector space needs dim >= 1")

    @property
    def ncols(self) -> int:
        return {
            "age": 1,
            "age_state": 2,
            "age_position": 1 + self.dim,
            "time_pair": 2,
            "age_size": 2,
            "trait": self.dim,
        }[self.kind]

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        if pts.shape[1] != self.ncols:
            raise ValueError(f"expected {self.ncols} columns for {self.kind}, got {pts.shape[1]}")
        if self.kind == "age":
            return pts[:, 0] >= 0
        if self.kind == "age_state":
            i = pts[:, 1]
            return (pts[:, 0] >= 0) & (np.abs(i - np.round(i)) < 1e-9) & (i >= 0.5) & (i <= self.n_states + 0.5)
        if self.kind == "age_position":
            return pts[:, 0] >= 0
        if self.kind == "time_pair":
            # open wedge: post-jump states (0, x1) are fine, x1 == x2 is not
            return (pts[:, 0] >= 0) & (pts[:, 1] > pts[:, 0])
        if self.kind == "age_size":
            return (pts[:, 0] >= 0) & (pts[:, 1] >= 0)
        return np.ones(pts.shape[0], dtype=bool)

    def validate(self, points: np.ndarray) -> None:
        ok = self.contains(points)
        if not np.all(ok):
            bad = np.atleast_2d(np.asarray(points, float))[~ok][0]
            raise ValueError(f"point {bad} outside {self.kind} space")


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atom cloud standing in for a probability measure."""

    space: Space
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, float))
        weights = np.asarray(self.weights, float)
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms and weights length mismatch")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1 within 1e-12")
        self.space.validate(atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, space: Space, points: np.ndarray) -> "EmpiricalMeasure":
        pts = np.atleast_2d(np.asarray(points, float))
        n = pts.shape[0]
        w = np.full(n, 1.0 / n)
        w[-1] = 1.0 - w[:-1].sum()
        return cls(space, pts, w)

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample(self, n, rng)


def sample(measure: EmpiricalMeasure, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from the atom distribution, shape (n, ncols)."""
    if n < 1:
        raise ValueError("need n >= 1")
    p = measure.weights / measure.weights.sum()
    idx = rng.choice(len(measure), size=n, p=p)
    return measure.atoms[idx].copy()


@dataclass(frozen=True)
class RateFunction:
    """Nonnegative jump rate over a state space.

    ``interval_bound(p, q)`` must dominate the rate along the flow segment
    between p and q.  With ``monotone="increasing"`` (each coordinate) the
    endpoint maximum is a valid bound because every model's flow moves each
    coordinate monotonically between jumps; otherwise an explicit bound
    callable is required before the simulator will accept the rate.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    monotone: str = "increasing"
    bound_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.fn(np.atleast_2d(np.asarray(points, float))), float)
        return np.atleast_1d(vals)

    __call__ = evaluate

    def interval_bound(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        if self.bound_fn is not None:
            return np.atleast_1d(np.asarray(self.bound_fn(np.atleast_2d(p), np.atleast_2d(q)), float))
        if self.monotone == "increasing":
            return np.maximum(self.evaluate(p), self.evaluate(q))
        raise ValueError("rate without monotone tag needs an explicit interval bound")


def constant_rate(value: float) -> RateFunction:
    if value < 0:
        raise ValueError("rates are nonnegative")
    return RateFunction(lambda pts: np.full(pts.shape[0], float(value)))


def affine_power_rate(intercept: float, slopes, powers, columns=None) -> RateFunction:
    """d(u) = intercept + sum_j slopes[j] * u[columns[j]] ** powers[j].

    Nonnegative slopes with powers >= 1 give a rate increasing in each
    coordinate, the family for which a truncation level always exists.
    """
    slopes = np.atleast_1d(np.asarray(slopes, float))
    powers = np.atleast_1d(np.asarray(powers, float))
    if slopes.shape != powers.shape:
        raise ValueError("slopes and powers length mismatch")
    if intercept < 0 or np.any(slopes < 0) or np.any(powers < 1):
        raise ValueError("need intercept >= 0, slopes >= 0, powers >= 1")
    cols = np.arange(len(slopes)) if columns is None else np.asarray(columns, int)

    def fn(pts):
        acc = np.full(pts.shape[0], float(intercept))
        for s, p, c in zip(slopes, powers, cols):
            acc = acc + s * pts[:, c] ** p
        return acc

    return RateFunction(fn)


@dataclass(frozen=True)
class GrowthFunction:
    """Scalar drift of the deterministic flow; kind enables closed-form flows."""

    fn: Callable[[np.ndarray], np.ndarray]
    is_nonincreasing: bool = False
    kind: str = "custom"
    c0: float = 0.0
    c1: float = 0.0

    def evaluate(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.atleast_1d(np.asarray(x, float))), float)

    __call__ = evaluate

    def validate_on_grid(self, grid: np.ndarray) -> None:
        g = self.evaluate(grid)
        if grid[0] == 0.0 and g[0] < 0:
            raise ValueError("growth must satisfy g(0) >= 0")
        if self.is_nonincreasing and np.any(np.diff(g) > 1e-12):
            raise ValueError("growth tagged non-increasing rises on the validation grid")


def constant_growth(value: float, nonincreasing: bool = True) -> GrowthFunction:
    if value < 0:
        raise ValueError("constant growth needs g >= 0 to respect g(0) >= 0")
    return GrowthFunction(lambda x: np.full(x.shape, float(value)), nonincreasing, "constant", c0=value)


def affine_growth(intercept: float, slope: float, nonincreasing: bool | None = None) -> GrowthFunction:
    if intercept < 0:
        raise ValueError("g(0) = intercept must be >= 0")
    if nonincreasing is None:
        nonincreasing = slope <= 0
    if nonincreasing and slope > 0:
        raise ValueError("positive slope contradicts the non-increasing tag")
    return GrowthFunction(
        lambda x: intercept + slope * x, nonincreasing, "affine", c0=intercept, c1=slope
    )


Law = AtomLaw | UniformLaw | BoxLaw | TruncPowerLaw


@dataclass(frozen=True)
class BirthLaw:
    """Reset law on [0, infinity) for renewal-type jumps."""

    law: Law

    def __post_init__(self):
        if self.law.dim != 1:
            raise ValueError("birth law must be scalar")
        if self.law.lo < 0:
            raise ValueError("birth law must be supported on [0, inf)")


@dataclass(frozen=True)
class SpatialNoise:
    """Displacement law in R^d with a global scale multiplier."""

    law: Law
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("noise scale must be positive")


@dataclass(frozen=True)
class FragmentRatio:
    """Multiplicative fragmentation ratio on [0, 1] with mean below 1."""

    law: Law
    mean_r: float = field(init=False)

    def __post_init__(self):
        if self.law.dim != 1:
            raise ValueError("fragment law must be scalar")
        if isinstance(self.law, BoxLaw) or self.law.lo < 0 or self.law.hi > 1:
            raise ValueError("fragment law must be supported on [0, 1]")
        m = float(self.law.mean())
        if not 0.0 <= m < 1.0:
            raise ValueError("fragment ratio mean must lie in [0, 1)")
        object.__setattr__(self, "mean_r", m)


@dataclass(frozen=True)
class MatingMix:
    """Mixing-coefficient law on [0, 1]; mix_mean is its exact mean."""

    law: Law
    power: float = 1.0
    mix_mean: float = field(default=None)

    def __post_init__(self):
        if self.law.dim != 1:
            raise ValueError("mixing law must be scalar")
        if isinstance(self.law, BoxLaw) or self.law.lo < 0 or self.law.hi > 1:
            raise ValueError("mixing law must be supported on [0, 1]")
        if self.power < 1:
            raise ValueError("cost power must be >= 1")
        m = float(self.law.mean())
        if self.mix_mean is None:
            object.__setattr__(self, "mix_mean", m)
        elif abs(self.mix_mean - m) > 1e-10:
            raise ValueError(f"declared mean {self.mix_mean} != law mean {m}")
        if not 0.0 < self.mix_mean < 1.0:
            raise ValueError("mixing mean must lie strictly in (0, 1)")


# ---------------------------------------------------------------------------
# Truncation-level certificate
# ---------------------------------------------------------------------------

_METRICS = ("abs", "sum_pair", "weighted_pair")


@dataclass(frozen=True)
class GridSpec:
    """Validation grid: a bounding box per coordinate of the rate's argument.

    The infimum behind the certificate runs over a continuum; we search a
    mesh over a user-declared box and locally refine around the minimizing
    pair.  The box is a user responsibility, the certificate is conservative
    on it.
    """

    box: tuple
    points: int = 0
    refine_rounds: int = 6
    refine_points: int = 9

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        for lo, hi in box:
            if not hi > lo:
                raise ValueError("grid box needs hi > lo per axis")
        object.__setattr__(self, "box", box)
        if self.points <= 0:
            object.__setattr__(self, "points", 96 if len(box) == 1 else 40)
        if self.points < 2:
            raise ValueError("grid needs at least 2 points per axis")


@dataclass(frozen=True)
class AdmissibilityResult:
    valid: bool
    candidate: float
    bound: float
    witness: tuple | None
    vacuous: bool = False

    def __str__(self):
        if self.vacuous:
            return f"valid (vacuous: rate differences vanish), a={self.candidate:g}"
        if self.valid:
            return f"valid: a={self.candidate:g} <= grid bound {self.bound:.6g}"
        p, q = self.witness
        return (
            f"violated: a={self.candidate:g} > bound {self.bound:.6g} "
            f"at witness pair {np.asarray(p).tolist()} / {np.asarray(q).tolist()}"
        )


def _mesh(box, n_axis, wedge):
    axes = [np.linspace(lo, hi, n_axis) for lo, hi in box]
    if len(axes) == 1:
        pts = axes[0][:, None]
    else:
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
    if wedge:
        pts = pts[pts[:, 1] > pts[:, 0] + 1e-12]
    return pts


def _sep_elementwise(pa, pb, metric):
    d0 = np.abs(pa[:, 0] - pb[:, 0])
    if metric == "abs":
        return d0, d0
    d1 = np.abs(pa[:, 1] - pb[:, 1])
    if metric == "sum_pair":
        return d0 + d1, d0 + d1
    if metric == "weighted_pair":
        return 2.0 * d0 + d1, d0 + d1
    raise ValueError(f"unknown separation metric {metric!r}")


def _ladder_offsets(metric, constraint_a):
    """Companion offsets at geometric separations below the constraint level,
    so small-separation pairs exist even when the mesh step exceeds it."""
    scales = constraint_a * 2.0 ** -np.arange(7, dtype=float)
    offs = []
    for s in scales:
        if metric == "abs":
            offs.append([s])
        elif metric == "sum_pair":
            offs.extend([[s, 0.0], [0.0, s], [0.5 * s, 0.5 * s]])
        else:  # weighted_pair: constraint 2*|d0| + |d1|
            offs.extend([[0.5 * s, 0.0], [0.0, s], [0.25 * s, 0.5 * s]])
    return np.asarray(offs)


def _pair_lists(pts, box, metric, constraint_a, wedge):
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    m = pts.shape[0]
    ii, jj = np.triu_indices(m, k=1)
    pa, pb = [pts[ii]], [pts[jj]]
    for off in _ladder_offsets(metric, constraint_a):
        for sgn in (1.0, -1.0):
            companion = np.clip(pts + sgn * off[None, :], lo, hi)
            pa.append(pts)
            pb.append(companion)
    pa, pb = np.vstack(pa), np.vstack(pb)
    if wedge:
        keep = (pa[:, 1] > pa[:, 0] + 1e-12) & (pb[:, 1] > pb[:, 0] + 1e-12)
        pa, pb = pa[keep], pb[keep]
    return pa, pb


def _min_ratio(pa, pb, rate_of, metric, factor, constraint_a):
    ra = np.asarray(rate_of(pa), float)
    rb = np.asarray(rate_of(pb), float)
    con, num = _sep_elementwise(pa, pb, metric)
    rmax = np.maximum(ra, rb)
    rdiff = np.abs(ra - rb)
    usable = (con <= constraint_a + 1e-15) & (rdiff > 1e-14 * np.maximum(rmax, 1.0))
    if not np.any(usable):
        return np.inf, None, None
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(usable, factor * num * rmax / np.where(rdiff > 0, rdiff, 1.0), np.inf)
    k = int(np.argmin(ratio))
    return float(ratio[k]), pa[k].copy(), pb[k].copy()


def _refined_bound(rate_of, metric, factor, constraint_a, grid: GridSpec, wedge: bool):
    pts = _mesh(grid.box, grid.points, wedge)
    if pts.shape[0] < 2:
        raise ValueError("validation grid is empty")
    pa, pb = _pair_lists(pts, grid.box, metric, constraint_a, wedge)
    best, wi, wj = _min_ratio(pa, pb, rate_of, metric, factor, constraint_a)
    if wi is None:
        return best, None
    halfwidth = np.array([2.0 * (hi - lo) / (grid.points - 1) for lo, hi in grid.box])
    for _ in range(grid.refine_rounds):
        local = []
        for center in (wi, wj):
            lo = np.maximum(center - halfwidth, [b[0] for b in grid.box])
            hi = np.minimum(center + halfwidth, [b[1] for b in grid.box])
            hi = np.maximum(hi, lo + 1e-12)
            local.append(_mesh(tuple(zip(lo, hi)), grid.refine_points, False))
        pts_local = np.unique(np.vstack(local), axis=0)
        if pts_local.shape[0] < 2:
            break
        pa, pb = _pair_lists(pts_local, grid.box, metric, constraint_a, wedge)
        if pa.shape[0] == 0:
            break
        cand, ci, cj = _min_ratio(pa, pb, rate_of, metric, factor, constraint_a)
        if ci is not None and cand < best:
            best, wi, wj = cand, ci, cj
        halfwidth /= 2.0
    return best, (wi, wj)


def admissible_a(
    rate_of,
    metric: str,
    candidate_a: float,
    grid: GridSpec,
    factor: float = 1.0,
    wedge: bool = False,
) -> AdmissibilityResult:
    """Grid certificate: candidate_a <= factor * separation * max(rates) / |rate diff|
    over every mesh pair whose constraint separation is at most candidate_a.

    ``rate_of`` maps an (m, k) array of mesh points to m rates, k matching
    the grid box.  Pairs with equal rates are vacuous and skipped.
    """
    if candidate_a <= 0:
        raise ValueError("candidate truncation must be positive")
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {_METRICS}")
    bound, witness = _refined_bound(rate_of, metric, factor, candidate_a, grid, wedge)
    if witness is None:
        return AdmissibilityResult(True, candidate_a, np.inf, None, vacuous=True)
    valid = candidate_a <= bound + 1e-12
    return AdmissibilityResult(valid, candidate_a, bound, None if valid else witness)


def suggest_a(
    rate_of,
    metric: str,
    grid: GridSpec,
    factor: float = 1.0,
    wedge: bool = False,
) -> float:
    """Grid estimate of the best truncation level, capped at 1, with a 0.9
    safety factor against grid optimism."""
    bound, witness = _refined_bound(rate_of, metric, factor, 1.0, grid, wedge)
    if witness is None:
        return 0.9
    if bound <= 0:
        raise ValueError("rate admits no positive truncation level on this grid")
    return 0.9 * min(bound, 1.0)
