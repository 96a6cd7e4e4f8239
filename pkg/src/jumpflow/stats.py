"""Two-sample tests used by the marginal-consistency checks.

Scalar clouds get the classical Kolmogorov-Smirnov test on the full samples.
Multivariate clouds get an energy-distance permutation test; the statistic is
computed on a fixed-size subsample so the pooled distance matrix stays small,
which keeps the test exact at its level while making thousands of label
permutations affordable (one matrix product evaluates them all).
"""

from __future__ import annotations

import numpy as np
from scipy.stats import ks_2samp

__all__ = ["ks_two_sample", "energy_two_sample", "two_sample_pvalue"]


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    """p-value of the two-sample KS test on scalar samples."""
    return float(ks_2samp(np.ravel(a), np.ravel(b), method="asymp").pvalue)


def energy_two_sample(
    a: np.ndarray,
    b: np.ndarray,
    rng: np.random.Generator,
    subsample: int = 1024,
    permutations: int = 1999,
) -> float:
    """Permutation p-value of the two-sample energy statistic.

    E = 2 E|A - B| - E|A - A'| - E|B - B'| is nonnegative and zero only for
    equal laws; large observed values are evidence against equality.
    """
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    if a.shape[0] > subsample:
        a = a[rng.choice(a.shape[0], size=subsample, replace=False)]
    if b.shape[0] > subsample:
        b = b[rng.choice(b.shape[0], size=subsample, replace=False)]
    na, nb = a.shape[0], b.shape[0]
    n_tot = na + nb
    pooled = np.vstack([a, b])
    diff = pooled[:, None, :] - pooled[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    total = dist.sum(axis=1)
    grand = dist.sum()

    def statistic(ind):
        # ind: indicator matrix of the A-labels, shape (n, k)
        w = dist @ ind
        sum_aa = np.sum(ind * w, axis=0)
        sum_ab = total @ ind - sum_aa
        sum_bb = grand - 2.0 * sum_ab - sum_aa
        ka = ind.sum(axis=0)
        kb = n_tot - ka
        return 2.0 * sum_ab / (ka * kb) - sum_aa / (ka * ka) - sum_bb / (kb * kb)

    obs = float(statistic(np.concatenate([np.ones(na), np.zeros(nb)])[:, None])[0])
    labels = np.zeros((n_tot, permutations))
    for k in range(permutations):
        labels[rng.permutation(n_tot)[:na], k] = 1.0
    perm_stats = statistic(labels)
    return float((1 + np.sum(perm_stats >= obs)) / (permutations + 1))


def two_sample_pvalue(
    a: np.ndarray,
    b: np.ndarray,
    rng: np.random.Generator,
    subsample: int = 1024,
    permutations: int = 1999,
) -> float:
    """KS on scalar clouds, energy permutation test on multivariate ones."""
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    if a.shape[1] == 1:
        return ks_two_sample(a[:, 0], b[:, 0])
    return energy_two_sample(a, b, rng, subsample, permutations)
