"""Angles, direction cosines and polarization bookkeeping for plane waves
hitting a surface that lies in the x-y plane.

All lengths are in wavelengths. Angles are radians internally; the
``from_degrees``/``to_degrees`` helpers are the only place degrees appear.
Every function accepts scalars or broadcastable numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_ANGLE_SLACK = 1e-12
_DEGENERATE = 1e-12


def _check_range(name, value, lo, hi):
    v = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    if np.any(v < lo - _ANGLE_SLACK) or np.any(v > hi + _ANGLE_SLACK):
        raise ValueError(f"{name} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class IncidentAngle:
    """Direction a plane wave comes from, plus its polarization angle.

    ``theta`` is the elevation measured from the surface normal, ``phi`` the
    azimuth and ``pol`` the polarization angle of the incident field.
    """

    theta: float | np.ndarray
    phi: float | np.ndarray
    pol: float | np.ndarray = 0.0

    def __post_init__(self):
        _check_range("theta", self.theta, 0.0, np.pi / 2)
        _check_range("phi", self.phi, 0.0, 2 * np.pi)
        _check_range("pol", self.pol, 0.0, 2 * np.pi)

    @classmethod
    def from_degrees(cls, theta, phi, pol=0.0):
        return cls(np.deg2rad(theta), np.deg2rad(phi), np.deg2rad(pol))

    def to_degrees(self):
        return tuple(np.rad2deg(v) for v in (self.theta, self.phi, self.pol))


@dataclass(frozen=True)
class ReflectionAngle:
    """Direction a reflected plane wave travels to."""

    theta: float | np.ndarray
    phi: float | np.ndarray

    def __post_init__(self):
        _check_range("theta", self.theta, 0.0, np.pi / 2)
        _check_range("phi", self.phi, 0.0, 2 * np.pi)

    @classmethod
    def from_degrees(cls, theta, phi):
        return cls(np.deg2rad(theta), np.deg2rad(phi))

    def to_degrees(self):
        return np.rad2deg(self.theta), np.rad2deg(self.phi)


class DirectionCosines(NamedTuple):
    a_x: np.ndarray
    a_y: np.ndarray
    a_z: np.ndarray


class PolarizationFrame(NamedTuple):
    e_field: np.ndarray   # unit vector(s), last axis is xyz
    h_field: np.ndarray
    sign: int


def direction_cosines(theta, phi) -> DirectionCosines:
    """Return (sin t cos p, sin t sin p, cos t) for elevation t, azimuth p."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return DirectionCosines(st * np.cos(phi), st * np.sin(phi), np.cos(theta) + 0.0 * phi)


def unit_vector(theta, phi) -> np.ndarray:
    a = direction_cosines(theta, phi)
    return np.stack(np.broadcast_arrays(*a), axis=-1)


def combined_cosines(psi_t, psi_r):
    """In-plane cosine sums A_x(t)+A_x(r) and A_y(t)+A_y(r)."""
    at = direction_cosines(psi_t.theta, psi_t.phi)
    ar = direction_cosines(psi_r.theta, psi_r.phi)
    return at.a_x + ar.a_x, at.a_y + ar.a_y


def _pol_projection(psi_t):
    a = direction_cosines(psi_t.theta, psi_t.phi)
    a_xy = np.cos(psi_t.pol) * a.a_x + np.sin(psi_t.pol) * a.a_y
    return a_xy, a.a_z


def c_factor(psi_t: IncidentAngle):
    """Polarization weight c in [cos(theta_t), 1].

    The grazing case where both the in-plane projection and the normal
    component vanish is the limit where the magnetic field already lies in
    the surface plane, so c = 1 there.
    """
    a_xy, a_z = _pol_projection(psi_t)
    den = np.hypot(a_xy, a_z)
    ok = den > _DEGENERATE
    safe = np.where(ok, den, 1.0)
    return np.where(ok, a_z / safe, 1.0)


def polarization_frame(psi_t: IncidentAngle, sign: int = 1) -> PolarizationFrame:
    """Electric and magnetic field directions of the incident wave.

    The magnetic direction has in-plane part proportional to
    (cos pol, sin pol) and is orthogonal to the propagation direction; the
    electric direction completes the right-handed triad with the
    propagation vector.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    a_xy, a_z = _pol_projection(psi_t)
    den = np.hypot(a_xy, a_z)
    ok = den > _DEGENERATE
    safe = np.where(ok, den, 1.0)
    c = np.where(ok, a_z / safe, 1.0)
    z = np.where(ok, -a_xy / safe, 0.0)
    h = sign * np.stack(np.broadcast_arrays(c * np.cos(psi_t.pol), c * np.sin(psi_t.pol), z), axis=-1)
    a_t = unit_vector(psi_t.theta, psi_t.phi)
    a_t, h = np.broadcast_arrays(a_t, h)
    e = np.cross(a_t, h)
    return PolarizationFrame(e, h, sign)


def g_tilde(psi_t: IncidentAngle, psi_r: ReflectionAngle):
    """Polarization/geometry factor of the tile response (dimensionless)."""
    cp, sp = np.cos(psi_t.pol), np.sin(psi_t.pol)
    ct = np.cos(psi_r.theta)
    cf, sf = np.cos(psi_r.phi), np.sin(psi_r.phi)
    u = cp * ct * sf - sp * ct * cf
    v = sp * sf + cp * cf
    return c_factor(psi_t) * np.hypot(u, v)
