"""Catalog of body-force fields.

Forcing terms are specified by name in run configurations instead of through
a general expression parser, so manufactured right-hand sides stay exact.
"""

from __future__ import annotations

import numpy as np


class ForcingField:
    """Body force; evaluable at arrays of physical points (..., 2)."""

    name = "abstract"

    def at_points(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ZeroForcing(ForcingField):
    name = "zero"

    def at_points(self, pts):
        return np.zeros(np.shape(pts))


class ConstantForcing(ForcingField):
    name = "constant"

    def __init__(self, fx: float = 0.0, fy: float = -1.0):
        self.f = np.array([fx, fy], dtype=float)

    def at_points(self, pts):
        return np.broadcast_to(self.f, np.shape(pts)).copy()


class RotationalForcing(ForcingField):
    """f = amplitude * (-(y - cy), x - cx): drives a vortex around the center."""

    name = "rotational"

    def __init__(self, amplitude: float = 1.0, cx: float = 0.5, cy: float = 0.5):
        self.amplitude = float(amplitude)
        self.center = np.array([cx, cy], dtype=float)

    def at_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.empty_like(pts)
        out[..., 0] = -(pts[..., 1] - self.center[1])
        out[..., 1] = pts[..., 0] - self.center[0]
        return self.amplitude * out


class SinusoidalForcing(ForcingField):
    """f = (sin(pi x), 0); a smooth non-polynomial datum."""

    name = "sinusoidal"

    def at_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros_like(pts)
        out[..., 0] = np.sin(np.pi * pts[..., 0])
        return out


class ShearForcing(ForcingField):
    """f = (amplitude sin(pi y) + tilt y, 0): drives a shear flow whose
    stress changes sign along an interior line (off the mesh lines when
    tilt != 0)."""

    name = "shear"

    def __init__(self, amplitude: float = 1.0, tilt: float = 0.35):
        self.amplitude = float(amplitude)
        self.tilt = float(tilt)

    def at_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        out = np.zeros_like(pts)
        out[..., 0] = (self.amplitude * np.sin(np.pi * pts[..., 1])
                       + self.tilt * pts[..., 1])
        return out


def _g(x):
    return x**2 * (1.0 - x) ** 2


def _dg(x):
    return 4.0 * x**3 - 6.0 * x**2 + 2.0 * x


def _d2g(x):
    return 12.0 * x**2 - 12.0 * x + 2.0


def _d3g(x):
    return 24.0 * x - 12.0


class ManufacturedNewtonian(ForcingField):
    """Right-hand side of the Newtonian (r = 2) momentum equation for the
    divergence-free velocity u = curl(psi), psi = x^2(1-x)^2 y^2(1-y)^2, and
    pressure p = x - 1/2 on the unit square:

        f = (u . grad) u + grad p - nu * Laplace(u).
    """

    name = "manufactured"

    def __init__(self, nu: float = 0.5):
        self.nu = float(nu)

    def exact_velocity(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        out = np.empty_like(pts)
        out[..., 0] = _g(x) * _dg(y)
        out[..., 1] = -_dg(x) * _g(y)
        return out

    def exact_velocity_gradient(self, pts):
        """(..., 2, 2) with grad[i, j] = d u_i / d x_j."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        grad = np.empty(pts.shape[:-1] + (2, 2))
        grad[..., 0, 0] = _dg(x) * _dg(y)
        grad[..., 0, 1] = _g(x) * _d2g(y)
        grad[..., 1, 0] = -_d2g(x) * _g(y)
        grad[..., 1, 1] = -_dg(x) * _dg(y)
        return grad

    def exact_pressure(self, pts):
        return np.asarray(pts, dtype=float)[..., 0] - 0.5

    def at_points(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        g, dg, d2g, d3g = _g(x), _dg(x), _d2g(x), _d3g(x)
        h, dh, d2h, d3h = _g(y), _dg(y), _d2g(y), _d3g(y)
        conv1 = g * dg * dh**2 - g * dg * h * d2h
        conv2 = -g * d2g * h * dh + dg**2 * h * dh
        lap1 = d2g * dh + g * d3h
        lap2 = -(d3g * h + dg * d2h)
        out = np.empty_like(pts)
        out[..., 0] = conv1 + 1.0 - self.nu * lap1
        out[..., 1] = conv2 - self.nu * lap2
        return out


def make_forcing(name: str, **params) -> ForcingField:
    table = {cls.name: cls for cls in (
        ZeroForcing, ConstantForcing, RotationalForcing, SinusoidalForcing,
        ShearForcing, ManufacturedNewtonian)}
    try:
        return table[name](**params)
    except KeyError:
        raise ValueError(f"unknown forcing {name!r}") from None
