"""Blockwise M-estimation of the mean log-likelihood increment.

The data are split into k disjoint equal-size blocks; the estimate solves
the one-dimensional convex problem

    argmin_z  sum_j rho(sqrt(n) * (avg_j - z) / delta_n)

whose score is monotone in z, so bisection brackets the root; a Newton
polish sharpens it when the score has slope at the solution.  The gradient
in theta follows from the implicit function theorem: a ratio of
rho''-weighted block gradient averages.
"""

from dataclasses import dataclass

import numpy as np

from .errors import FlatScore, InvalidK, NonFiniteInput, UnsupportedLoss
from .losses import ABSOLUTE, rho_deriv1, rho_deriv2

_BISECT_TOL = 1e-12
_BISECT_CAP = 200


@dataclass(frozen=True)
class BlockPartition:
    """k disjoint equal-cardinality index blocks; remainder indices dropped."""

    blocks: np.ndarray  # (k, n) integer indices
    n_total: int

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.int64)
        object.__setattr__(self, "blocks", blocks)
        if blocks.ndim != 2:
            raise ValueError("blocks must be a (k, n) index array")
        flat = blocks.ravel()
        if len(np.unique(flat)) != flat.size:
            raise ValueError("blocks must be pairwise disjoint")
        if flat.size and (flat.min() < 0 or flat.max() >= self.n_total):
            raise ValueError("block indices out of range")

    @property
    def k(self):
        return self.blocks.shape[0]

    @property
    def n(self):
        return self.blocks.shape[1]

    @property
    def n_effective(self):
        return self.blocks.size


def partition_blocks(n_obs, k, scheme="shuffled", seed=0):
    """Split range(n_obs) into k equal blocks of size n_obs // k.

    The shuffled scheme permutes indices with a seeded generator first,
    decoupling block membership from data order; contiguous keeps input
    order.  The n_obs mod k trailing indices are dropped.
    """
    if k < 1 or k > n_obs // 2:
        raise InvalidK(f"k={k} outside 1 <= k <= N/2 for N={n_obs}")
    n = n_obs // k
    if scheme == "shuffled":
        idx = np.random.default_rng(seed).permutation(n_obs)[: k * n]
    elif scheme == "contiguous":
        idx = np.arange(k * n)
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    return BlockPartition(blocks=idx.reshape(k, n), n_total=n_obs)


@dataclass(frozen=True)
class ScaleSchedule:
    """Standardization sequence delta_n = max(floor, c * n**exponent)."""

    c: float
    exponent: float = 0.25
    floor: float = 1e-8

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError("c must be a positive finite real")
        if not (0.0 < self.exponent < 0.5):
            raise ValueError("exponent must lie in (0, 1/2)")
        if not (self.floor > 0):
            raise ValueError("floor must be positive")

    def value(self, n):
        return max(self.floor, self.c * float(n) ** self.exponent)


@dataclass(frozen=True)
class MomEstimate:
    value: float
    iterations: int
    bracket_width: float
    flat_fraction: float


def block_averages(family, theta, theta_prime, data, partition):
    """Per-block averages of the log-likelihood increments; shape (k,)."""
    return block_averages_batch(
        family, np.asarray(theta, dtype=float)[None, :], theta_prime, data, partition
    )[0]


def block_averages_batch(family, thetas, theta_prime, data, partition):
    """Block averages for a batch of parameter vectors; shape (m, k)."""
    from .models import _check_domain  # local import avoids a cycle

    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    for row in thetas:
        _check_domain(family, row)
    inc = family.increments_batch(thetas, np.asarray(theta_prime, dtype=float), data)
    return inc[:, partition.blocks.ravel()].reshape(thetas.shape[0], partition.k, partition.n).mean(
        axis=2
    )


def _score(avgs, z, rho, scale):
    """Score sum_j rho'(scale * (avg_j - z)); shape of z preserved."""
    return rho_deriv1(rho, scale * (avgs - z[..., None])).sum(axis=-1)


def _bisect_batch(avgs, rho, scale, side):
    """Boundary of the flat set {z: score(z) = 0}; side=+1 lower, -1 upper.

    The score is nonincreasing in z.  For side=+1 the bracket keeps
    score(lo) > 0 >= score(hi); for side=-1 it keeps score(lo) >= 0 > score(hi).
    Both collapse onto the unique root when the flat set is a point.
    """
    lo = avgs.min(axis=1).copy()
    hi = avgs.max(axis=1).copy()
    iters = np.zeros(lo.shape[0], dtype=np.int64)
    active = hi - lo > _BISECT_TOL
    it = 0
    while np.any(active) and it < _BISECT_CAP:
        it += 1
        mid = 0.5 * (lo + hi)
        s = _score(avgs[active], mid[active], rho, scale)
        go_right = s > 0 if side > 0 else s >= 0
        lo_active = lo[active]
        hi_active = hi[active]
        lo_active[go_right] = mid[active][go_right]
        hi_active[~go_right] = mid[active][~go_right]
        lo[active] = lo_active
        hi[active] = hi_active
        iters[active] += 1
        active = hi - lo > _BISECT_TOL
    return lo, hi, iters


def solve_mom_batch(avgs, rho, n, delta):
    """Solve the blockwise problem for each row of avgs; shape (m, k).

    Returns (values, iterations, bracket_widths, flat_fractions) arrays.
    """
    avgs = np.atleast_2d(np.asarray(avgs, dtype=float))
    if avgs.size == 0:
        raise NonFiniteInput("need at least one block average")
    if not np.all(np.isfinite(avgs)):
        raise NonFiniteInput("block averages contain non-finite values")
    m = avgs.shape[0]
    widths = avgs.max(axis=1) - avgs.min(axis=1)

    if rho.kind == ABSOLUTE:
        values = np.median(avgs, axis=1)
        return values, np.zeros(m, dtype=np.int64), widths, np.ones(m)

    delta_n = delta.value(n)
    scale = np.sqrt(float(n)) / delta_n

    lo1, hi1, it1 = _bisect_batch(avgs, rho, scale, side=+1)
    values = 0.5 * (lo1 + hi1)
    iters = it1.copy()

    # a vanished score slope means the root is a flat interval: locate its
    # upper end as well and take the midpoint
    weights = rho_deriv2(rho, scale * (avgs - values[:, None]))
    flat = weights.sum(axis=1) == 0.0
    if np.any(flat):
        lo2, hi2, it2 = _bisect_batch(avgs[flat], rho, scale, side=-1)
        values[flat] = 0.5 * (values[flat] + 0.5 * (lo2 + hi2))
        iters[flat] += it2
        weights[flat] = rho_deriv2(rho, scale * (avgs[flat] - values[flat][:, None]))

    # Newton polish where the slope is informative
    lo_cap = avgs.min(axis=1)
    hi_cap = avgs.max(axis=1)
    for _ in range(2):
        wsum = weights.sum(axis=1)
        ok = wsum > 0
        if not np.any(ok):
            break
        s = _score(avgs[ok], values[ok], rho, scale)
        step = s / (scale * wsum[ok])
        values[ok] = np.clip(values[ok] + step, lo_cap[ok], hi_cap[ok])
        weights = rho_deriv2(rho, scale * (avgs - values[:, None]))

    flat_fraction = (weights == 0.0).mean(axis=1)
    return values, iters, widths, flat_fraction


def solve_mom(avgs, rho, n, delta):
    """Blockwise M-estimate of the mean of avgs; returns a MomEstimate.

    For the absolute loss this is the sample median (average of the two
    central order statistics for even k).  Otherwise the unique root of the
    monotone score equation, with the midpoint convention on flat intervals.
    """
    avgs = np.asarray(avgs, dtype=float)
    values, iters, widths, flats = solve_mom_batch(avgs[None, :], rho, n, delta)
    return MomEstimate(
        value=float(values[0]),
        iterations=int(iters[0]),
        bracket_width=float(widths[0]),
        flat_fraction=float(flats[0]),
    )


def mom_increment(family, theta, theta_prime, data, partition, rho, delta):
    """Robust estimate of the mean increment at theta; returns a MomEstimate."""
    avgs = block_averages(family, theta, theta_prime, data, partition)
    return solve_mom(avgs, rho, partition.n, delta)


def grad_block_averages_batch(family, thetas, data, partition):
    """Block averages of the per-observation gradients; shape (m, k, d)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    g = family.grad_nll_batch(thetas, data)  # (m, N, d)
    m, _, d = g.shape
    return g[:, partition.blocks.ravel(), :].reshape(m, partition.k, partition.n, d).mean(axis=2)


def grad_mom(family, theta, theta_prime, data, partition, rho, delta, estimate=None):
    """Gradient of the blockwise estimate at theta via the implicit mapping.

    Weights each block gradient by rho'' at its standardized residual and
    normalizes; saturated blocks receive weight zero.  Raises FlatScore when
    every block is saturated (the caller falls back to finite differences).
    """
    if rho.kind == ABSOLUTE:
        raise UnsupportedLoss("implicit gradient needs a twice-differentiable loss")
    theta = np.asarray(theta, dtype=float)
    if estimate is None:
        estimate = mom_increment(family, theta, theta_prime, data, partition, rho, delta)
    avgs = block_averages(family, theta, theta_prime, data, partition)
    scale = np.sqrt(float(partition.n)) / delta.value(partition.n)
    weights = rho_deriv2(rho, scale * (avgs - estimate.value))
    total = weights.sum()
    if total == 0.0:
        raise FlatScore("all blocks saturated at the solution")
    block_grads = grad_block_averages_batch(family, theta[None, :], data, partition)[0]
    return (weights[:, None] * block_grads).sum(axis=0) / total


def calibrate_scale(family, data, partition, theta_prime, exponent=0.25, floor=1e-8):
    """Data-driven ScaleSchedule from the spread of block averages.

    Block averages are probed at theta_prime offset by half a coordinate
    scale, where increments have O(1) per-observation spread; the robust
    MAD estimate of that spread fixes delta at the current block size, and
    c backs out so that delta_n = c * n**exponent matches it.  Probing at a
    point tied to the data scale, rather than at the closed-form MLE, keeps
    the calibration stable when the MLE is dragged by corrupted records and
    non-degenerate when it coincides with the reference point.
    """
    theta_prime = np.asarray(theta_prime, dtype=float)
    probe = family.domain.clamp_interior(
        theta_prime + 0.5 * family.coordinate_scales(data), margin=1e-6
    )
    avgs = block_averages(family, probe, theta_prime, data, partition)
    mad = float(np.median(np.abs(avgs - np.median(avgs))))
    sigma_hat = 1.4826 * mad * np.sqrt(float(partition.n))
    if not np.isfinite(sigma_hat) or sigma_hat <= 0:
        sigma_hat = max(float(np.std(avgs)) * np.sqrt(float(partition.n)), floor)
    c = sigma_hat / float(partition.n) ** exponent
    return ScaleSchedule(c=max(c, floor), exponent=exponent, floor=floor)
