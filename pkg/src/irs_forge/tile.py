"""Response functions of continuous and discrete (unit-cell) tiles.

Responses are returned as complex ``g/lambda`` values (lengths in
wavelengths, so the wavenumber is 2*pi). Angles can be numpy arrays, in
which case the response is evaluated elementwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import (
    IncidentAngle,
    ReflectionAngle,
    combined_cosines,
    direction_cosines,
    g_tilde,
    polarization_frame,
)

KAPPA = 2 * np.pi
SQRT_4PI = math.sqrt(4 * math.pi)
SPEED_OF_LIGHT = 3.0e8
_KERNEL_EPS = 1e-12


class EvanescentError(ValueError):
    """Raised when a steering target asks for an evanescent reflected wave."""


class QuadratureError(RuntimeError):
    """Raised when quadrature refinement fails to settle."""


def wavelength(freq_hz, c=SPEED_OF_LIGHT):
    return c / freq_hz


def sinc(x):
    """Unnormalized sinc, sin(x)/x."""
    return np.sinc(np.asarray(x) / np.pi)


@dataclass(frozen=True)
class TileGeometry:
    L_x: float
    L_y: float
    d_x: float = 0.5
    d_y: float = 0.5
    L_uc: float | None = None
    Q_x: int = field(init=False)
    Q_y: int = field(init=False)

    def __post_init__(self):
        for name in ("L_x", "L_y", "d_x", "d_y"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.L_uc is None:
            object.__setattr__(self, "L_uc", min(self.d_x, self.d_y))
        if not 0 < self.L_uc <= min(self.d_x, self.d_y) * (1 + 1e-12):
            raise ValueError("L_uc must lie in (0, min(d_x, d_y)]")
        for axis in ("x", "y"):
            ratio = getattr(self, "L_" + axis) / getattr(self, "d_" + axis)
            q = int(round(ratio))
            if abs(ratio - q) > 1e-9 * max(1.0, ratio) or q < 2 or q % 2:
                raise ValueError(f"L_{axis}/d_{axis} must be an even integer, got {ratio}")
            object.__setattr__(self, "Q_" + axis, q)

    @property
    def n_cells(self):
        return self.Q_x * self.Q_y

    def cell_indices(self):
        """Integer cell offsets n_x, n_y running from -Q/2+1 to Q/2."""
        nx = np.arange(-self.Q_x // 2 + 1, self.Q_x // 2 + 1)
        ny = np.arange(-self.Q_y // 2 + 1, self.Q_y // 2 + 1)
        return nx, ny


@dataclass(frozen=True)
class SteeringTarget:
    """Design pair of incident/reflected directions plus a constant phase."""

    psi_t_star: IncidentAngle
    psi_r_star: ReflectionAngle
    beta_0: float = 0.0

    def slopes(self):
        return combined_cosines(self.psi_t_star, self.psi_r_star)


@dataclass(frozen=True)
class PhaseQuantizer:
    bits: int | None = None

    def __post_init__(self):
        if self.bits is not None and not (1 <= self.bits <= 8):
            raise ValueError("bits must be in 1..8")

    def __call__(self, phases):
        if self.bits is None:
            return np.asarray(phases, dtype=float)
        step = 2 * np.pi / 2**self.bits
        return np.mod(np.round(np.asarray(phases) / step) * step, 2 * np.pi)


def unit_cell_factor(L_uc, tau, psi_t, psi_r):
    ax, ay = combined_cosines(psi_t, psi_r)
    amp = SQRT_4PI * tau * L_uc**2 * g_tilde(psi_t, psi_r)
    return 1j * amp * sinc(KAPPA * L_uc * ax / 2) * sinc(KAPPA * L_uc * ay / 2)


def continuous_from_slopes(geom, ax_star, ay_star, beta_0, psi_t, psi_r, tau):
    ax, ay = combined_cosines(psi_t, psi_r)
    amp = SQRT_4PI * tau * geom.L_x * geom.L_y * g_tilde(psi_t, psi_r)
    amp = amp * sinc(KAPPA * geom.L_x * (ax - ax_star) / 2) * sinc(KAPPA * geom.L_y * (ay - ay_star) / 2)
    return amp * np.exp(1j * (np.pi / 2 + beta_0))


def continuous_response(geom: TileGeometry, target: SteeringTarget, psi_t, psi_r, tau=1.0):
    """Closed-form response of a continuous tile with a linear phase gradient."""
    _check_tau(tau)
    ax_star, ay_star = target.slopes()
    return continuous_from_slopes(geom, ax_star, ay_star, target.beta_0, psi_t, psi_r, tau)


def _dirichlet(w, q):
    # sin(q w/2)/sin(w/2) times the centring phase e^{jw/2}
    half = np.asarray(w, dtype=float) / 2
    s = np.sin(half)
    near = np.abs(s) < _KERNEL_EPS
    k = np.round(half / np.pi)
    limit = q * np.where(np.mod(k * (q - 1), 2) == 0, 1.0, -1.0)
    ratio = np.where(near, limit, np.sin(q * half) / np.where(near, 1.0, s))
    return ratio * np.exp(1j * half)


def discrete_from_slopes(geom, ax_star, ay_star, beta_0, psi_t, psi_r, tau):
    """Discrete-tile response for phase slopes given as target cosine sums."""
    ax, ay = combined_cosines(psi_t, psi_r)
    g_uc = unit_cell_factor(geom.L_uc, tau, psi_t, psi_r)
    wx = KAPPA * geom.d_x * (ax - ax_star)
    wy = KAPPA * geom.d_y * (ay - ay_star)
    return g_uc * np.exp(1j * beta_0) * _dirichlet(wx, geom.Q_x) * _dirichlet(wy, geom.Q_y)


def phase_profile_discrete(geom: TileGeometry, target: SteeringTarget, quantizer: PhaseQuantizer | None = None):
    """Per-cell phases (radians); rows follow n_x, columns n_y."""
    ax_star, ay_star = target.slopes()
    nx, ny = geom.cell_indices()
    bx = -KAPPA * geom.d_x * ax_star * nx + target.beta_0 / 2
    by = -KAPPA * geom.d_y * ay_star * ny + target.beta_0 / 2
    phases = bx[:, None] + by[None, :]
    if quantizer is not None and quantizer.bits is not None:
        phases = quantizer(phases)
    return phases


def brute_force_discrete(geom: TileGeometry, phases, psi_t, psi_r, tau=1.0):
    """Sum of all unit-cell contributions for an arbitrary phase matrix."""
    phases = np.asarray(phases)
    if phases.shape != (geom.Q_x, geom.Q_y):
        raise ValueError("phase matrix does not match the tile")
    ax, ay = combined_cosines(psi_t, psi_r)
    ax, ay = np.broadcast_arrays(np.asarray(ax, float), np.asarray(ay, float))
    g_uc = unit_cell_factor(geom.L_uc, tau, psi_t, psi_r)
    nx, ny = geom.cell_indices()
    ex = np.exp(1j * KAPPA * geom.d_x * ax[..., None] * nx)
    ey = np.exp(1j * KAPPA * geom.d_y * ay[..., None] * ny)
    coeff = np.exp(1j * phases)
    total = np.einsum("...i,ij,...j->...", ex, coeff, ey)
    return g_uc * total


def discrete_response(geom: TileGeometry, target: SteeringTarget, psi_t, psi_r, tau=1.0, quantizer: PhaseQuantizer | None = None):
    _check_tau(tau)
    if quantizer is not None and quantizer.bits is not None:
        phases = phase_profile_discrete(geom, target, quantizer)
        return brute_force_discrete(geom, phases, psi_t, psi_r, tau)
    ax_star, ay_star = target.slopes()
    return discrete_from_slopes(geom, ax_star, ay_star, target.beta_0, psi_t, psi_r, tau)


def linear_phase_function(target: SteeringTarget) -> Callable:
    """The continuous phase profile beta(x, y) realizing ``target``."""
    ax_star, ay_star = target.slopes()

    def beta(x, y):
        return -KAPPA * (ax_star * x + ay_star * y) + target.beta_0

    return beta


def continuous_response_numeric(geom: TileGeometry, phase_profile: Callable, psi_t, psi_r, tau=1.0,
                                order: int = 16, tol: float = 1e-8, max_order: int = 2048):
    """Response of a continuous tile by direct quadrature of the reradiated field.

    The surface current implied by the incident magnetic field is projected
    onto the elevation/azimuth components of the far field, each component
    integrated over the tile with tensor-product Gauss-Legendre rules. The
    rule is doubled until two successive estimates agree to ``tol``.
    """
    _check_tau(tau)
    frame = polarization_frame(psi_t)
    h = frame.h_field
    # surface current 2*tau*(n x H) with the outward normal pointing to -z
    jx = 2 * tau * h[..., 1]
    jy = -2 * tau * h[..., 0]
    ct, cf, sf = np.cos(psi_r.theta), np.cos(psi_r.phi), np.sin(psi_r.phi)
    j_theta = jx * ct * cf + jy * ct * sf
    j_phi = -jx * sf + jy * cf
    at = direction_cosines(psi_t.theta, psi_t.phi)
    ar = direction_cosines(psi_r.theta, psi_r.phi)
    kx = np.asarray(at.a_x + ar.a_x, dtype=float)
    ky = np.asarray(at.a_y + ar.a_y, dtype=float)
    kx, ky, j_theta, j_phi = np.broadcast_arrays(kx, ky, j_theta, j_phi)

    def integrate(n):
        nodes, weights = leggauss(n)
        x = nodes * geom.L_x / 2
        y = nodes * geom.L_y / 2
        wx = weights * geom.L_x / 2
        wy = weights * geom.L_y / 2
        surface = np.exp(1j * phase_profile(x[:, None], y[None, :])) * np.outer(wx, wy)
        ex = np.exp(1j * KAPPA * kx[..., None] * x)
        ey = np.exp(1j * KAPPA * ky[..., None] * y)
        kern = np.einsum("...i,ij,...j->...", ex, surface, ey)
        e_theta = j_theta * kern
        e_phi = j_phi * kern
        norm = np.hypot(j_theta, j_phi)
        safe = np.where(norm > 0, norm, 1.0)
        proj = np.where(norm > 0, (j_theta * e_theta + j_phi * e_phi) / safe, 0.0)
        return 1j * SQRT_4PI / 2 * proj

    scale = SQRT_4PI * tau * geom.L_x * geom.L_y
    prev = integrate(order)
    n = order
    while n < max_order:
        n *= 2
        cur = integrate(n)
        if np.all(np.abs(cur - prev) <= tol * np.maximum(np.abs(cur), 1e-6 * scale)):
            return cur
        prev = cur
    raise QuadratureError(f"quadrature did not settle to {tol} within {max_order} nodes per axis")


def _check_tau(tau):
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")


def irs_pathloss(g_over_lambda, rho_t, rho_r, lam):
    """End-to-end free-space path loss of a link routed through one tile."""
    _check_positive(rho_t, rho_r, lam)
    pl_t = (lam / (4 * np.pi * rho_t)) ** 2
    pl_r = (lam / (4 * np.pi * rho_r)) ** 2
    return 4 * np.pi * np.abs(g_over_lambda) ** 2 * pl_t * pl_r


def min_required_area(lam, rho_d, rho_t, rho_r):
    """Smallest continuous-surface area whose link matches the direct one."""
    _check_positive(lam, rho_d, rho_t, rho_r)
    return lam * rho_t * rho_r / rho_d


def min_required_unit_cells(lam, rho_d, rho_t, rho_r, L_uc):
    _check_positive(L_uc)
    return int(math.ceil(min_required_area(lam, rho_d, rho_t, rho_r) / L_uc**2 - 1e-9))


def _check_positive(*values):
    for v in values:
        if not np.all(np.asarray(v) > 0):
            raise ValueError("distances and lengths must be positive")


def passivity_tau(psi_t: IncidentAngle, target: SteeringTarget):
    """Reflection amplitude that keeps the surface passive for ``target``."""
    ax_star, ay_star = target.slopes()
    a = direction_cosines(psi_t.theta, psi_t.phi)
    s = np.hypot(ax_star - a.a_x, ay_star - a.a_y)
    if np.any(s > 1 + 1e-12):
        raise EvanescentError("target requires an evanescent reflected wave")
    theta_star = np.arcsin(np.minimum(s, 1.0))
    cos_star = np.cos(theta_star)
    if np.any(cos_star <= 0):
        raise EvanescentError("grazing reflected wave has no finite passive amplitude")
    return np.sqrt(np.cos(psi_t.theta) / cos_star)


def beamwidth(theta, pattern_db, drop_db=10.0):
    """Width of the contiguous region around the peak within ``drop_db`` of it.

    ``theta`` must be sorted; the edges are linearly interpolated.
    """
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(pattern_db, dtype=float)
    i = int(np.argmax(p))
    level = p[i] - drop_db
    lo = i
    while lo > 0 and p[lo - 1] >= level:
        lo -= 1
    hi = i
    while hi < len(p) - 1 and p[hi + 1] >= level:
        hi += 1
    left = theta[lo]
    if lo > 0:
        left = np.interp(level, [p[lo - 1], p[lo]], [theta[lo - 1], theta[lo]])
    right = theta[hi]
    if hi < len(p) - 1:
        right = np.interp(level, [p[hi + 1], p[hi]], [theta[hi + 1], theta[hi]])
    return right - left


def to_db(g_over_lambda):
    """20 log10 |g/lambda|, i.e. the power pattern |g/lambda|^2 in dB."""
    return 20 * np.log10(np.maximum(np.abs(g_over_lambda), 1e-300))
