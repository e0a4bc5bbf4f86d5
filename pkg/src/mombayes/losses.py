"""Convex even losses that drive the blockwise M-estimator.

Three variants: absolute value (classical median of means), Huber's loss,
and a mollified Huber obtained by convolving Huber's loss with a smooth
compactly supported bump.  The mollified variant keeps the identity region
rho'(z) = z on |z| <= breakpoint - halfwidth and a constant derivative on
|z| >= breakpoint + halfwidth, with an infinitely differentiable transition
band in between.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import UnsupportedLoss

ABSOLUTE = "absolute"
HUBER = "huber"
SMOOTHED_HUBER = "smoothed_huber"

_KINDS = (ABSOLUTE, HUBER, SMOOTHED_HUBER)


@lru_cache(maxsize=None)
def _leggauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def _quad(f, a, b, order):
    """Gauss-Legendre integral of f over [a, b]."""
    if b <= a:
        return 0.0
    nodes, weights = _leggauss(order)
    x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.sum(weights * f(x)))


def _bump_raw(t, halfwidth):
    """Unnormalized mollifier exp(-4 / (1 - 4u^2)), u = t / (2*halfwidth)."""
    u = np.asarray(t, dtype=float) / (2.0 * halfwidth)
    out = np.zeros_like(u)
    inside = np.abs(u) < 0.5
    ui = u[inside]
    out[inside] = np.exp(-4.0 / (1.0 - 4.0 * ui * ui))
    return out


@dataclass(frozen=True)
class RhoSpec:
    """Configuration of the loss rho.

    breakpoint is the Huber transition point; mollifier_halfwidth the support
    half-width of the bump used for the smoothed variant.  For the smoothed
    kind the pair must satisfy breakpoint - halfwidth >= 1 and
    breakpoint + halfwidth <= 2, so the identity region covers |z| <= 1 and
    the derivative is constant beyond |z| >= 2.
    """

    kind: str = HUBER
    breakpoint: float = 1.5
    mollifier_halfwidth: float = 0.5
    quadrature_order: int = 64
    mollifier_norm_constant: float = field(init=False, default=0.0)
    _second_moment: float = field(init=False, default=0.0, repr=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {_KINDS}")
        if not (self.breakpoint > 0 and np.isfinite(self.breakpoint)):
            raise ValueError("breakpoint must be a positive finite real")
        if not (self.mollifier_halfwidth > 0 and np.isfinite(self.mollifier_halfwidth)):
            raise ValueError("mollifier_halfwidth must be a positive finite real")
        if self.quadrature_order < 1:
            raise ValueError("quadrature_order must be a positive integer")
        if self.kind == SMOOTHED_HUBER:
            r, h = self.breakpoint, self.mollifier_halfwidth
            if r - h < 1.0 - 1e-12 or r + h > 2.0 + 1e-12:
                raise ValueError(
                    "smoothed_huber requires breakpoint - halfwidth >= 1 and "
                    "breakpoint + halfwidth <= 2"
                )
            h = self.mollifier_halfwidth
            mass = _quad(lambda t: _bump_raw(t, h), -h, h, self.quadrature_order)
            const = 1.0 / mass
            m2 = const * _quad(lambda t: _bump_raw(t, h) * t * t, -h, h, self.quadrature_order)
            object.__setattr__(self, "mollifier_norm_constant", const)
            object.__setattr__(self, "_second_moment", m2)

    def mollifier(self, t):
        """Normalized bump density psi(t), integrating to one."""
        return self.mollifier_norm_constant * _bump_raw(t, self.mollifier_halfwidth)


def _huber_value(z, r):
    az = np.abs(z)
    return np.where(az <= r, 0.5 * z * z, r * (az - 0.5 * r))


def _smoothed_band_tables(spec, za):
    """Split-interval quadrature of the convolution on the transition band.

    For z > 0 in (r - h, r + h) the Huber kernel H(z - t) switches branch at
    t = z - r, which lies inside the mollifier support; integrating each
    branch separately keeps the integrand smooth on both pieces.
    """
    r, h = spec.breakpoint, spec.mollifier_halfwidth
    nodes, weights = _leggauss(spec.quadrature_order)
    za = np.asarray(za, dtype=float)
    split = za - r  # in (-h, h)

    # piece 1: t in [-h, split], H linear there (z - t >= r)
    a1, b1 = -h, split
    half1 = 0.5 * (b1 - a1)
    t1 = half1[..., None] * nodes + 0.5 * (a1 + b1)[..., None]
    psi1 = spec.mollifier(t1)
    u1 = za[..., None] - t1
    val1 = half1 * np.sum(weights * psi1 * (r * (u1 - 0.5 * r)), axis=-1)
    der1 = half1 * np.sum(weights * psi1 * r, axis=-1)

    # piece 2: t in [split, h], H quadratic there (z - t <= r)
    a2, b2 = split, h
    half2 = 0.5 * (b2 - a2)
    t2 = half2[..., None] * nodes + 0.5 * (a2 + b2)[..., None]
    psi2 = spec.mollifier(t2)
    u2 = za[..., None] - t2
    val2 = half2 * np.sum(weights * psi2 * (0.5 * u2 * u2), axis=-1)
    der2 = half2 * np.sum(weights * psi2 * u2, axis=-1)
    der2nd = half2 * np.sum(weights * psi2, axis=-1)

    return val1 + val2, der1 + der2, der2nd


def _eval(spec, z, which):
    """Evaluate rho (which=0), rho' (1) or rho'' (2); vectorized over z."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    za = np.abs(np.atleast_1d(z))
    sign = np.sign(np.atleast_1d(z))

    if spec.kind == ABSOLUTE:
        if which == 0:
            out = za
        elif which == 1:
            out = sign.astype(float)
        else:
            raise UnsupportedLoss("second derivative undefined for the absolute loss")
    elif spec.kind == HUBER:
        r = spec.breakpoint
        if which == 0:
            out = _huber_value(za, r)
        elif which == 1:
            out = sign * np.minimum(za, r)
        else:
            out = (za <= r).astype(float)
    else:
        r, h = spec.breakpoint, spec.mollifier_halfwidth
        inner = za <= r - h
        outer = za >= r + h
        band = ~inner & ~outer
        val = np.empty_like(za)
        der = np.empty_like(za)
        der2 = np.empty_like(za)
        val[inner] = 0.5 * za[inner] ** 2 + 0.5 * spec._second_moment
        der[inner] = za[inner]
        der2[inner] = 1.0
        val[outer] = r * (za[outer] - 0.5 * r)
        der[outer] = r
        der2[outer] = 0.0
        if np.any(band):
            vb, db, d2b = _smoothed_band_tables(spec, za[band])
            val[band] = vb
            der[band] = db
            der2[band] = d2b
        if which == 0:
            out = val
        elif which == 1:
            out = sign * der
        else:
            out = der2

    return float(out[0]) if scalar else out


def rho_value(spec, z):
    """Loss value rho(z); even, convex, nonnegative after subtracting rho(0)."""
    return _eval(spec, z, 0)


def rho_deriv1(spec, z):
    """First derivative (score) rho'(z); odd, nondecreasing, bounded.

    For the absolute loss the subgradient midpoint 0 is returned at z = 0.
    """
    return _eval(spec, z, 1)


def rho_deriv2(spec, z):
    """Second derivative rho''(z); raises UnsupportedLoss for the absolute kind."""
    return _eval(spec, z, 2)


def make_rho(kind, breakpoint=1.5, mollifier_halfwidth=0.5, quadrature_order=64):
    """Build a RhoSpec from a CLI-style kind name (dashes accepted)."""
    return RhoSpec(
        kind=kind.replace("-", "_"),
        breakpoint=breakpoint,
        mollifier_halfwidth=mollifier_halfwidth,
        quadrature_order=quadrature_order,
    )
