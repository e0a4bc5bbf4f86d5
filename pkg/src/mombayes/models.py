"""Likelihood families, priors and reference-point increments.

Every downstream computation consumes per-observation increments of the
negative log-likelihood, ell(theta, x) - ell(theta_prime, x), and their
theta-gradients.  Families are column-oriented: a Dataset holds the response
vector (or the scalar observations) plus an optional design matrix, and all
family methods are vectorized over both observations and a batch of
parameter vectors.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EmptyData, NonDifferentiablePoint, NonFiniteInput


@dataclass(frozen=True)
class Dataset:
    """Observations: scalar records in ``y``; regression adds a design matrix ``x``."""

    y: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        if not np.all(np.isfinite(y)):
            raise NonFiniteInput("observations contain non-finite values")
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            object.__setattr__(self, "x", x)
            if x.ndim != 2 or x.shape[0] != y.shape[0]:
                raise ValueError("x must be (n_obs, n_features) aligned with y")
            if not np.all(np.isfinite(x)):
                raise NonFiniteInput("covariates contain non-finite values")

    @property
    def n(self):
        return self.y.shape[0]

    def take(self, indices):
        x = None if self.x is None else self.x[indices]
        return Dataset(y=self.y[indices], x=x)

    def replace_y(self, indices, values):
        """Copy-on-write replacement of selected responses."""
        y = self.y.copy()
        y[indices] = values
        return Dataset(y=y, x=self.x)


@dataclass(frozen=True)
class ParamBox:
    """Compact per-coordinate parameter box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be equal-length vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("each lower bound must be strictly below its upper bound")

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return np.all((theta >= self.lower) & (theta <= self.upper), axis=1)

    def contains_one(self, theta):
        return bool(self.contains(theta)[0])

    def clamp(self, theta):
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def clamp_interior(self, theta, margin=1e-9):
        pad = margin * self.width
        return np.clip(np.asarray(theta, dtype=float), self.lower + pad, self.upper - pad)

    def strictly_inside(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all((theta > self.lower) & (theta < self.upper)))


def _as_param(theta, dim):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (dim,):
        raise ValueError(f"parameter must have shape ({dim},), got {theta.shape}")
    return theta


def _check_domain(family, theta):
    theta = _as_param(theta, family.param_dim)
    if not family.domain.contains_one(theta):
        raise DomainError(f"theta {theta} outside the parameter box")
    return theta


class LikelihoodFamily:
    """Common interface; concrete families define the batched primitives.

    Batched methods take ``thetas`` of shape (m, d) and return per-observation
    arrays of shape (m, n_obs) or (m, n_obs, d).
    """

    kind = "abstract"

    @property
    def param_dim(self):
        raise NotImplementedError

    def increments_batch(self, thetas, theta_prime, data):
        raise NotImplementedError

    def grad_nll_batch(self, thetas, data):
        raise NotImplementedError

    def fisher_information(self, theta):
        raise NotImplementedError

    def closed_form_mle(self, data):
        raise NotImplementedError

    def robust_pilot(self, data):
        """Median-based starting estimate, insensitive to contaminated records."""
        raise NotImplementedError

    def coordinate_scales(self, data):
        """Per-coordinate O(1) scale used for probe offsets and proposal seeds."""
        raise NotImplementedError

    def sample(self, theta, size, rng):
        raise NotImplementedError

    def risk_increment_exact(self, theta, theta_prime, theta0):
        """Closed-form L(theta) - L(theta_prime) under the model at theta0."""
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianLocation(LikelihoodFamily):
    sigma: float = 1.0
    domain: ParamBox = field(default_factory=lambda: ParamBox([-1e3], [1e3]))
    kind = "gaussian_location"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.domain.dim != 1:
            raise ValueError("gaussian_location is one-dimensional")

    @property
    def param_dim(self):
        return 1

    def increments_batch(self, thetas, theta_prime, data):
        mu = np.asarray(thetas, dtype=float)[:, 0][:, None]
        mu0 = float(np.asarray(theta_prime, dtype=float).reshape(-1)[0])
        y = data.y[None, :]
        return ((y - mu) ** 2 - (y - mu0) ** 2) / (2.0 * self.sigma**2)

    def grad_nll_batch(self, thetas, data):
        mu = np.asarray(thetas, dtype=float)[:, 0][:, None]
        return ((mu - data.y[None, :]) / self.sigma**2)[:, :, None]

    def fisher_information(self, theta):
        return np.array([[1.0 / self.sigma**2]])

    def closed_form_mle(self, data):
        if data.n == 0:
            raise EmptyData("cannot fit an empty dataset")
        return self.domain.clamp(np.array([np.mean(data.y)]))

    def robust_pilot(self, data):
        if data.n == 0:
            raise EmptyData("cannot fit an empty dataset")
        return self.domain.clamp_interior(np.array([np.median(data.y)]))

    def coordinate_scales(self, data):
        return np.array([self.sigma])

    def sample(self, theta, size, rng):
        mu = float(np.asarray(theta).reshape(-1)[0])
        return Dataset(y=rng.normal(mu, self.sigma, size=size))

    def risk_increment_exact(self, theta, theta_prime, theta0):
        t = float(np.asarray(theta).reshape(-1)[0])
        tp = float(np.asarray(theta_prime).reshape(-1)[0])
        t0 = float(np.asarray(theta0).reshape(-1)[0])
        return ((t - t0) ** 2 - (tp - t0) ** 2) / (2.0 * self.sigma**2)


@dataclass(frozen=True)
class LaplaceLocation(LikelihoodFamily):
    scale: float = 1.0
    domain: ParamBox = field(default_factory=lambda: ParamBox([-1e3], [1e3]))
    kind = "laplace_location"

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.domain.dim != 1:
            raise ValueError("laplace_location is one-dimensional")

    @property
    def param_dim(self):
        return 1

    def increments_batch(self, thetas, theta_prime, data):
        mu = np.asarray(thetas, dtype=float)[:, 0][:, None]
        mu0 = float(np.asarray(theta_prime, dtype=float).reshape(-1)[0])
        y = data.y[None, :]
        return (np.abs(y - mu) - np.abs(y - mu0)) / self.scale

    def grad_nll_batch(self, thetas, data, strict=False):
        mu = np.asarray(thetas, dtype=float)[:, 0][:, None]
        diff = mu - data.y[None, :]
        if strict and np.any(diff == 0.0):
            raise NonDifferentiablePoint("theta coincides with an observation")
        # sign(0) = 0 is the subgradient midpoint at the kink
        return (np.sign(diff) / self.scale)[:, :, None]

    def fisher_information(self, theta):
        return np.array([[1.0 / self.scale**2]])

    def closed_form_mle(self, data):
        if data.n == 0:
            raise EmptyData("cannot fit an empty dataset")
        return self.domain.clamp(np.array([np.median(data.y)]))

    def robust_pilot(self, data):
        return self.domain.clamp_interior(self.closed_form_mle(data))

    def coordinate_scales(self, data):
        return np.array([self.scale])

    def sample(self, theta, size, rng):
        mu = float(np.asarray(theta).reshape(-1)[0])
        return Dataset(y=rng.laplace(mu, self.scale, size=size))

    def risk_increment_exact(self, theta, theta_prime, theta0):
        # E|X - t| = b * exp(-|t - t0| / b) + |t - t0| for X ~ Laplace(t0, b)
        b = self.scale
        t = float(np.asarray(theta).reshape(-1)[0])
        tp = float(np.asarray(theta_prime).reshape(-1)[0])
        t0 = float(np.asarray(theta0).reshape(-1)[0])

        def mean_abs(u):
            return b * math.exp(-abs(u - t0) / b) + abs(u - t0)

        return (mean_abs(t) - mean_abs(tp)) / b


@dataclass(frozen=True)
class PoissonRate(LikelihoodFamily):
    domain: ParamBox = field(default_factory=lambda: ParamBox([1e-6], [1e6]))
    kind = "poisson_rate"

    def __post_init__(self):
        if self.domain.dim != 1:
            raise ValueError("poisson_rate is one-dimensional")
        if self.domain.lower[0] <= 0:
            raise ValueError("poisson_rate requires a strictly positive lower bound")

    @property
    def param_dim(self):
        return 1

    def increments_batch(self, thetas, theta_prime, data):
        lam = np.asarray(thetas, dtype=float)[:, 0][:, None]
        lam0 = float(np.asarray(theta_prime, dtype=float).reshape(-1)[0])
        y = data.y[None, :]
        return (lam - lam0) - y * np.log(lam / lam0)

    def grad_nll_batch(self, thetas, data):
        lam = np.asarray(thetas, dtype=float)[:, 0][:, None]
        return (1.0 - data.y[None, :] / lam)[:, :, None]

    def fisher_information(self, theta):
        lam = float(np.asarray(theta).reshape(-1)[0])
        if lam <= 0:
            raise DomainError("rate must be positive")
        return np.array([[1.0 / lam]])

    def closed_form_mle(self, data):
        if data.n == 0:
            raise EmptyData("cannot fit an empty dataset")
        return self.domain.clamp(np.array([np.mean(data.y)]))

    def robust_pilot(self, data):
        if data.n == 0:
            raise EmptyData("cannot fit an empty dataset")
        return self.domain.clamp_interior(np.array([max(np.median(data.y), 0.5)]))

    def coordinate_scales(self, data):
        pilot = float(self.robust_pilot(data)[0])
        return np.array([math.sqrt(max(pilot, 1e-12))])

    def sample(self, theta, size, rng):
        lam = float(np.asarray(theta).reshape(-1)[0])
        return Dataset(y=rng.poisson(lam, size=size).astype(float))

    def risk_increment_exact(self, theta, theta_prime, theta0):
        t = float(np.asarray(theta).reshape(-1)[0])
        tp = float(np.asarray(theta_prime).reshape(-1)[0])
        t0 = float(np.asarray(theta0).reshape(-1)[0])
        return (t - tp) - t0 * math.log(t / tp)


@dataclass(frozen=True)
class LinearRegression(LikelihoodFamily):
    """Gaussian linear regression with unknown coefficients and noise scale.

    The parameter vector stacks the coefficient vector (including any
    intercept column present in the design matrix) followed by sigma.
    ``covariate_second_moment`` is E[z z^T]; it calibrates the Fisher
    information and defaults to the identity, appropriate for z-scored
    regressors with a leading intercept column.
    """

    n_coefficients: int
    domain: ParamBox = None
    covariate_second_moment: np.ndarray | None = None
    kind = "linear_regression"

    def __post_init__(self):
        if self.n_coefficients < 1:
            raise ValueError("need at least one coefficient")
        if self.domain is None:
            lo = np.concatenate([np.full(self.n_coefficients, -10.0), [1e-2]])
            hi = np.concatenate([np.full(self.n_coefficients, 10.0), [1.0]])
            object.__setattr__(self, "domain", ParamBox(lo, hi))
        if self.domain.dim != self.n_coefficients + 1:
            raise ValueError("domain dimension must be n_coefficients + 1")
        if self.domain.lower[-1] <= 0:
            raise ValueError("sigma requires a strictly positive lower bound")
        if self.covariate_second_moment is not None:
            m = np.asarray(self.covariate_second_moment, dtype=float)
            if m.shape != (self.n_coefficients, self.n_coefficients):
                raise ValueError("covariate_second_moment has the wrong shape")
            object.__setattr__(self, "covariate_second_moment", m)

    @property
    def param_dim(self):
        return self.n_coefficients + 1

    def _split(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        return thetas[:, :-1], thetas[:, -1]

    def increments_batch(self, thetas, theta_prime, data):
        beta, sigma = self._split(np.atleast_2d(thetas))
        beta0 = np.asarray(theta_prime, dtype=float)[:-1]
        sigma0 = float(np.asarray(theta_prime, dtype=float)[-1])
        resid = data.y[None, :] - beta @ data.x.T  # (m, n)
        resid0 = data.y - data.x @ beta0  # (n,)
        return (
            resid**2 / (2.0 * sigma[:, None] ** 2)
            - resid0[None, :] ** 2 / (2.0 * sigma0**2)
            + (np.log(sigma)[:, None] - np.log(sigma0))
        )

    def grad_nll_batch(self, thetas, data):
        beta, sigma = self._split(np.atleast_2d(thetas))
        m, n = beta.shape[0], data.n
        resid = data.y[None, :] - beta @ data.x.T  # (m, n)
        out = np.empty((m, n, self.param_dim))
        out[:, :, :-1] = -(resid / sigma[:, None] ** 2)[:, :, None] * data.x[None, :, :]
        out[:, :, -1] = 1.0 / sigma[:, None] - resid**2 / sigma[:, None] ** 3
        return out

    def fisher_information(self, theta):
        sigma = float(np.asarray(theta, dtype=float)[-1])
        if sigma <= 0:
            raise DomainError("sigma must be positive")
        p = self.n_coefficients
        m = (
            self.covariate_second_moment
            if self.covariate_second_moment is not None
            else np.eye(p)
        )
        out = np.zeros((p + 1, p + 1))
        out[:p, :p] = m / sigma**2
        out[p, p] = 2.0 / sigma**2
        return out

    def closed_form_mle(self, data):
        if data.n == 0:
            raise EmptyData("cannot fit an empty dataset")
        beta, *_ = np.linalg.lstsq(data.x, data.y, rcond=None)
        resid = data.y - data.x @ beta
        sigma = float(np.sqrt(np.mean(resid**2)))
        return self.domain.clamp(np.concatenate([beta, [sigma]]))

    def robust_pilot(self, data):
        return self.domain.clamp_interior(self.closed_form_mle(data))

    def coordinate_scales(self, data):
        mle = self.closed_form_mle(data)
        sigma = max(float(mle[-1]), 1e-3)
        col_sd = np.std(data.x, axis=0)
        col_sd[col_sd == 0] = 1.0  # intercept column
        return np.concatenate([sigma / col_sd, [max(0.25 * sigma, 1e-3)]])

    def with_second_moment(self, data):
        m = data.x.T @ data.x / data.n
        return LinearRegression(
            n_coefficients=self.n_coefficients,
            domain=self.domain,
            covariate_second_moment=m,
        )

    def sample(self, theta, size, rng):
        theta = np.asarray(theta, dtype=float)
        beta, sigma = theta[:-1], float(theta[-1])
        z = rng.standard_normal((size, self.n_coefficients))
        z[:, 0] = 1.0  # leading intercept column
        y = z @ beta + sigma * rng.standard_normal(size)
        return Dataset(y=y, x=z)

    def risk_increment_exact(self, theta, theta_prime, theta0):
        theta = np.asarray(theta, dtype=float)
        theta_prime = np.asarray(theta_prime, dtype=float)
        theta0 = np.asarray(theta0, dtype=float)
        m = (
            self.covariate_second_moment
            if self.covariate_second_moment is not None
            else np.eye(self.n_coefficients)
        )
        sigma0 = float(theta0[-1])

        def risk(t):
            beta, sigma = t[:-1], float(t[-1])
            d = beta - theta0[:-1]
            mse = sigma0**2 + d @ m @ d
            return mse / (2.0 * sigma**2) + math.log(sigma)

        return risk(theta) - risk(theta_prime)


_FAMILY_KINDS = {
    "gaussian_location": GaussianLocation,
    "laplace_location": LaplaceLocation,
    "poisson_rate": PoissonRate,
    "linear_regression": LinearRegression,
}


def family_from_kind(kind, **kwargs):
    key = kind.replace("-", "_")
    if key not in _FAMILY_KINDS:
        raise ValueError(f"unknown family {kind!r}; expected one of {sorted(_FAMILY_KINDS)}")
    return _FAMILY_KINDS[key](**kwargs)


def default_location_domain(family_kind, data, half_width_scales=50.0):
    """Compact box centered at the median pilot, +/- 50 scale units.

    Centering at the median rather than the sample mean keeps the box around
    the bulk of the data when a fraction of records is corrupted; a box
    centered at a contaminated mean can exclude the uncorrupted mass
    entirely.
    """
    med = float(np.median(np.asarray(data.y, dtype=float)))
    if family_kind in ("gaussian_location", "laplace_location"):
        return ParamBox([med - half_width_scales], [med + half_width_scales])
    if family_kind == "poisson_rate":
        scale = math.sqrt(max(med, 1.0))
        lo = max(1e-6, med - half_width_scales * scale)
        return ParamBox([lo], [med + half_width_scales * scale + 1.0])
    raise ValueError(f"no default location domain for {family_kind!r}")


# ---------------------------------------------------------------------------
# module-level operation wrappers


def nll_increments(family, theta, theta_prime, data):
    """Per-observation ell(theta, x) - ell(theta_prime, x); shape (n_obs,)."""
    theta = _check_domain(family, theta)
    return family.increments_batch(theta[None, :], np.asarray(theta_prime, dtype=float), data)[0]


def grad_nll(family, theta, data, strict=False):
    """Per-observation gradient of ell(theta, x) in theta; shape (n_obs, d).

    The increments' gradient does not depend on the reference point.  With
    ``strict`` the Laplace family raises NonDifferentiablePoint when theta
    hits an observation exactly; by default the subgradient midpoint 0 is
    substituted there.
    """
    theta = _check_domain(family, theta)
    if isinstance(family, LaplaceLocation):
        return family.grad_nll_batch(theta[None, :], data, strict=strict)[0]
    return family.grad_nll_batch(theta[None, :], data)[0]


def fisher_information(family, theta):
    theta = _as_param(theta, family.param_dim)
    if not family.domain.strictly_inside(theta):
        raise DomainError("Fisher information requested outside the interior of the box")
    return family.fisher_information(theta)


def closed_form_mle(family, data):
    return family.closed_form_mle(data)


# ---------------------------------------------------------------------------
# priors


@dataclass(frozen=True)
class Prior:
    """Product prior with per-coordinate marginals.

    Each marginal is ("uniform", low, high) or ("normal", mean, sd).  The two
    spec'd constructors cover the all-uniform box and the all-normal diagonal
    case; mixed products arise in the regression experiment where the
    coefficients carry normal priors and the noise scale a uniform one.
    """

    marginals: tuple

    def __post_init__(self):
        for m in self.marginals:
            kind = m[0]
            if kind == "uniform":
                _, lo, hi = m
                if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                    raise ValueError("uniform marginal needs finite low < high")
            elif kind == "normal":
                _, mean, sd = m
                if not (np.isfinite(mean) and sd > 0 and np.isfinite(sd)):
                    raise ValueError("normal marginal needs finite mean and sd > 0")
            else:
                raise ValueError(f"unknown marginal kind {kind!r}")

    @classmethod
    def uniform_box(cls, box):
        return cls(tuple(("uniform", lo, hi) for lo, hi in zip(box.lower, box.upper)))

    @classmethod
    def gaussian_diagonal(cls, means, sds):
        means = np.atleast_1d(np.asarray(means, dtype=float))
        sds = np.atleast_1d(np.asarray(sds, dtype=float))
        if means.shape != sds.shape:
            raise ValueError("means and sds must align")
        return cls(tuple(("normal", m, s) for m, s in zip(means, sds)))

    @property
    def dim(self):
        return len(self.marginals)

    @property
    def kind(self):
        kinds = {m[0] for m in self.marginals}
        if kinds == {"uniform"}:
            return "uniform_box"
        if kinds == {"normal"}:
            return "gaussian_diagonal"
        return "mixed"

    @property
    def mean(self):
        out = np.empty(self.dim)
        for i, m in enumerate(self.marginals):
            out[i] = 0.5 * (m[1] + m[2]) if m[0] == "uniform" else m[1]
        return out

    def log_density_batch(self, thetas):
        """Log density up to the normalizing constant of the uniform coordinates."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.zeros(thetas.shape[0])
        for i, m in enumerate(self.marginals):
            t = thetas[:, i]
            if m[0] == "uniform":
                out = np.where((t < m[1]) | (t > m[2]), -np.inf, out)
            else:
                _, mean, sd = m
                out = out - 0.5 * ((t - mean) / sd) ** 2 - math.log(sd * math.sqrt(2 * math.pi))
        return out

    def grad_log_density_batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        out = np.zeros_like(thetas)
        for i, m in enumerate(self.marginals):
            if m[0] == "normal":
                _, mean, sd = m
                out[:, i] = -(thetas[:, i] - mean) / sd**2
        return out

    def sample(self, rng, size):
        out = np.empty((size, self.dim))
        for i, m in enumerate(self.marginals):
            if m[0] == "uniform":
                out[:, i] = rng.uniform(m[1], m[2], size=size)
            else:
                out[:, i] = rng.normal(m[1], m[2], size=size)
        return out


def log_prior(prior, theta):
    """Log prior density at theta (up to the uniform-box constant)."""
    val = float(prior.log_density_batch(np.asarray(theta, dtype=float)[None, :])[0])
    if not np.isfinite(val):
        raise DomainError("theta outside the support of the prior")
    return val


def grad_log_prior(prior, theta):
    return prior.grad_log_density_batch(np.asarray(theta, dtype=float)[None, :])[0]
