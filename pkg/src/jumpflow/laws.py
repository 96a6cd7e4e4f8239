"""Sampling laws used by the jump kernels.

Three families cover every kernel in the model catalog: finite atom lists,
uniform distributions on an interval or box, and a truncated power family
on an interval.  Samplers are exact (direct or inverse CDF) so simulation
output carries no quadrature bias.

Expectations of integrands of the form ``min(a, offset + |scale*r - shift|)``
are computed by splitting the range at the integrand's kinks.  On each piece
the integrand is linear, so a trapezoid rule (uniform density) or a
fixed-order Gauss-Legendre rule (power density) integrates it exactly up to
round-off.  Atom laws sum exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = ["AtomLaw", "UniformLaw", "BoxLaw", "TruncPowerLaw", "gauss_legendre_01"]


@lru_cache(maxsize=None)
def gauss_legendre_01(order: int):
    """Gauss-Legendre nodes and weights rescaled to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


def _trunc_value(r, a, offset, scale, shift):
    return np.minimum(a, offset + np.abs(scale * r - shift))


def _normalize_trunc_args(offset, scale, shift):
    offset, scale, shift = np.broadcast_arrays(
        np.asarray(offset, float), np.asarray(scale, float), np.asarray(shift, float)
    )
    offset = np.atleast_1d(offset).astype(float)
    scale = np.atleast_1d(scale).astype(float).copy()
    shift = np.atleast_1d(shift).astype(float).copy()
    # |s*r - w| with s < 0 equals ||s|*r - (-w)|
    neg = scale < 0
    scale[neg] = -scale[neg]
    shift[neg] = -shift[neg]
    return offset, scale, shift


def _trunc_breakpoints(lo, hi, a, offset, scale, shift):
    """Sorted breakpoints of r -> min(a, offset + |scale*r - shift|) on [lo, hi].

    Kinks sit where the absolute value vanishes and where the truncation
    activates; spurious breakpoints are harmless, so out-of-range or
    undefined kinks are clipped onto the interval.
    """
    n = offset.shape[0]
    pts = np.empty((n, 5))
    pts[:, 0] = lo
    pts[:, 4] = hi
    with np.errstate(divide="ignore", invalid="ignore"):
        r0 = shift / scale
        slack = a - offset
        rm = (shift - slack) / scale
        rp = (shift + slack) / scale
    for col, r in ((1, r0), (2, rm), (3, rp)):
        pts[:, col] = np.clip(np.where(np.isfinite(r), r, lo), lo, hi)
    pts.sort(axis=1)
    return pts


@dataclass(frozen=True)
class AtomLaw:
    """Finitely supported law; ``points`` has shape (m,) or (m, d)."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise ValueError("weights must match the number of atoms")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("atom weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[1]

    @property
    def lo(self) -> float:
        return float(np.min(self.points))

    @property
    def hi(self) -> float:
        return float(np.max(self.points))

    @property
    def exact_expectations(self) -> bool:
        return True

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.points.shape[0], size=n, p=self.weights / self.weights.sum())
        return self.points[idx].copy()

    def mean(self):
        m = np.tensordot(self.weights, self.points, axes=(0, 0))
        return float(m) if np.ndim(m) == 0 else m

    def expect_trunc(self, a, offset=0.0, scale=1.0, shift=0.0):
        """E[min(a, offset + |scale*R - shift|)], exact weighted sum (1-d atoms)."""
        if self.dim != 1:
            raise ValueError("expect_trunc needs scalar atoms")
        offset, scale, shift = _normalize_trunc_args(offset, scale, shift)
        vals = _trunc_value(self.points[None, :], a, offset[:, None], scale[:, None], shift[:, None])
        out = vals @ self.weights
        return out if out.shape != (1,) else float(out[0])


@dataclass(frozen=True)
class UniformLaw:
    """Uniform law on the interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("need hi > lo")

    @property
    def dim(self) -> int:
        return 1

    @property
    def exact_expectations(self) -> bool:
        return True

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def density(self, r):
        r = np.asarray(r, float)
        inside = (r >= self.lo) & (r <= self.hi)
        return inside / (self.hi - self.lo)

    def expect_trunc(self, a, offset=0.0, scale=1.0, shift=0.0):
        """E[min(a, offset + |scale*R - shift|)], exact piecewise trapezoid."""
        offset, scale, shift = _normalize_trunc_args(offset, scale, shift)
        pts = _trunc_breakpoints(self.lo, self.hi, a, offset, scale, shift)
        vals = _trunc_value(pts, a, offset[:, None], scale[:, None], shift[:, None])
        seg = np.diff(pts, axis=1)
        out = np.sum(seg * 0.5 * (vals[:, :-1] + vals[:, 1:]), axis=1) / (self.hi - self.lo)
        return out if out.shape != (1,) else float(out[0])


@dataclass(frozen=True)
class BoxLaw:
    """Uniform law on an axis-aligned box in R^d."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, float))
        hi = np.atleast_1d(np.asarray(self.hi, float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs hi > lo per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def exact_expectations(self) -> bool:
        return False

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def mean(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class TruncPowerLaw:
    """Density proportional to r**exponent on [lo, hi], exponent > -1."""

    exponent: float
    lo: float
    hi: float
    _quad_order: int = field(default=32, repr=False)

    def __post_init__(self):
        if not self.hi > self.lo >= 0.0:
            raise ValueError("need hi > lo >= 0")
        if self.exponent <= -1.0:
            raise ValueError("exponent must exceed -1")

    @property
    def dim(self) -> int:
        return 1

    @property
    def exact_expectations(self) -> bool:
        # exact only for integer exponents; flagged as quadrature otherwise
        return float(self.exponent).is_integer()

    def _mass(self) -> float:
        q1 = self.exponent + 1.0
        return (self.hi**q1 - self.lo**q1) / q1

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        q1 = self.exponent + 1.0
        u = rng.uniform(size=n)
        return (self.lo**q1 + u * (self.hi**q1 - self.lo**q1)) ** (1.0 / q1)

    def mean(self) -> float:
        q1 = self.exponent + 1.0
        q2 = self.exponent + 2.0
        return (self.hi**q2 - self.lo**q2) / q2 / self._mass()

    def density(self, r):
        r = np.asarray(r, float)
        inside = (r >= self.lo) & (r <= self.hi)
        return np.where(inside, r ** self.exponent, 0.0) / self._mass()

    def expect_trunc(self, a, offset=0.0, scale=1.0, shift=0.0):
        """E[min(a, offset + |scale*R - shift|)], Gauss-Legendre per smooth piece."""
        offset, scale, shift = _normalize_trunc_args(offset, scale, shift)
        pts = _trunc_breakpoints(self.lo, self.hi, a, offset, scale, shift)
        nodes, wq = gauss_legendre_01(self._quad_order)
        # r has shape (n, segments, order)
        left = pts[:, :-1, None]
        width = np.diff(pts, axis=1)[:, :, None]
        r = left + width * nodes[None, None, :]
        f = _trunc_value(r, a, offset[:, None, None], scale[:, None, None], shift[:, None, None])
        out = np.sum(f * self.density(r) * wq[None, None, :] * width, axis=(1, 2))
        return out if out.shape != (1,) else float(out[0])
