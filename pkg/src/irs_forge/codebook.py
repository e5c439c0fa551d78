"""Offline transmission-mode codebooks and online mode pre-selection."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .tile import TileGeometry, discrete_from_slopes


class EmptyModeSetError(ValueError):
    """No mode passes the pre-selection threshold."""


def effective_support(d):
    """Largest useful |slope| for pitch ``d`` (in wavelengths)."""
    return min(2.0 * d, 0.5)


def build_reflection_codebook(size: int, lo: float, hi: float, support: float | None = None):
    """Uniform grid of ``size`` slopes from ``lo`` to ``hi`` inclusive."""
    if size < 2:
        raise ValueError("codebook size must be at least 2")
    if hi <= lo:
        raise ValueError("empty codebook range")
    if support is not None and (lo < -support - 1e-12 or hi > support + 1e-12):
        raise ValueError(f"range [{lo}, {hi}] exceeds effective support {support}")
    return np.linspace(lo, hi, size)


def periodic_range(size: int, support: float = 0.5):
    """Endpoints of a grid that also stays uniform across the wrap-around.

    For a full period (support 1/2) the grid {-1/2+1/(2 size), ..., 1/2-1/(2 size)}
    avoids listing -1/2 and +1/2, which are the same mode. Narrower supports
    are not periodic and use their full extent.
    """
    if support >= 0.5:
        half = 0.5 - 0.5 / size
    else:
        half = support
    return -half, half


@dataclass(frozen=True)
class TransmissionMode:
    beta_x: float
    beta_y: float
    beta_0: float
    index: int

    def slopes(self, geom: TileGeometry):
        """Target cosine sums that produce this phase gradient."""
        return -self.beta_x / geom.d_x, -self.beta_y / geom.d_y


@dataclass(frozen=True)
class OfflineCodebook:
    b_x: tuple
    b_y: tuple
    b_0: tuple

    def __post_init__(self):
        for name in ("b_x", "b_y", "b_0"):
            vals = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, tuple(float(v) for v in vals))
            if len(vals) == 0 or len(np.unique(vals)) != len(vals):
                raise ValueError(f"{name} entries must be unique and non-empty")
            if len(vals) > 2 and not np.allclose(np.diff(vals), vals[1] - vals[0], rtol=1e-9, atol=1e-12):
                raise ValueError(f"{name} must be uniformly spaced")

    @classmethod
    def uniform(cls, n_x, n_y, n_0, geom: TileGeometry, range_x=None, range_y=None, range_0=None):
        sx, sy = effective_support(geom.d_x), effective_support(geom.d_y)
        rx = range_x or periodic_range(n_x, sx)
        ry = range_y or periodic_range(n_y, sy)
        r0 = range_0 or periodic_range(n_0, 0.5)
        bx = build_reflection_codebook(n_x, *rx, support=sx) if n_x > 1 else [0.0]
        by = build_reflection_codebook(n_y, *ry, support=sy) if n_y > 1 else [0.0]
        b0 = build_reflection_codebook(n_0, *r0, support=0.5) if n_0 > 1 else [0.0]
        return cls(tuple(bx), tuple(by), tuple(b0))

    @property
    def size(self):
        return len(self.b_x) * len(self.b_y) * len(self.b_0)

    @property
    def n_reflection(self):
        return len(self.b_x) * len(self.b_y)

    def index(self, ix, iy, i0):
        return (ix * len(self.b_y) + iy) * len(self.b_0) + i0

    def split(self, index):
        """Inverse of :meth:`index`: (reflection index, wavefront index)."""
        return divmod(int(index), len(self.b_0))

    @cached_property
    def modes(self):
        out = []
        for ix, bx in enumerate(self.b_x):
            for iy, by in enumerate(self.b_y):
                for i0, b0 in enumerate(self.b_0):
                    out.append(TransmissionMode(bx, by, b0, self.index(ix, iy, i0)))
        return tuple(out)

    def reflection_slopes(self):
        """Per reflection mode (beta_x, beta_y) arrays, in canonical order."""
        bx, by = np.meshgrid(self.b_x, self.b_y, indexing="ij")
        return bx.ravel(), by.ravel()


def mode_to_phase_profile(mode: TransmissionMode, geom: TileGeometry):
    """Unit-modulus per-cell coefficients of ``mode``."""
    nx, ny = geom.cell_indices()
    return (np.exp(2j * np.pi * mode.beta_x * nx)[:, None]
            * np.exp(2j * np.pi * mode.beta_y * ny)[None, :]
            * np.exp(2j * np.pi * mode.beta_0))


def mode_phases(mode: TransmissionMode, geom: TileGeometry):
    nx, ny = geom.cell_indices()
    return 2 * np.pi * (mode.beta_x * nx[:, None] + mode.beta_y * ny[None, :] + mode.beta_0)


def mode_response(mode: TransmissionMode, geom: TileGeometry, psi_t, psi_r, tau):
    ax_star, ay_star = mode.slopes(geom)
    return discrete_from_slopes(geom, ax_star, ay_star, 2 * np.pi * mode.beta_0, psi_t, psi_r, tau)


def alignment_phase(u_n, u_m, geom: TileGeometry, ax_star, ay_star):
    """Wavefront offset (in cycles, [0, 1)) that re-phases tile ``u_n`` onto ``u_m``."""
    dux = u_n[0] - u_m[0]
    duy = u_n[1] - u_m[1]
    arg = -2 * np.pi * (dux * geom.L_x * ax_star + duy * geom.L_y * ay_star)
    out = np.mod(arg, 2 * np.pi) / (2 * np.pi)
    return 0.0 if out >= 1.0 else out


def _strength(channels):
    # channels: (N, M, K, Nt) -> per (m, k) maximum norm over tiles
    norms = np.linalg.norm(channels, axis=-1)
    return norms.max(axis=0)


def preselect_modes(channels, delta):
    """Modes whose channel norm reaches ``delta`` for some tile and user.

    Returned strongest-first; equal strengths keep the lower index first.
    """
    strength = _strength(np.asarray(channels)).max(axis=1)
    keep = np.flatnonzero(strength >= delta)
    if keep.size == 0:
        raise EmptyModeSetError(f"no mode reaches threshold {delta:g}")
    order = np.lexsort((keep, -strength[keep]))
    return keep[order]


def preselect_top_k(channels, k_per_user: int, codebook: OfflineCodebook):
    """Union over users of the ``k_per_user`` strongest reflection modes, times all of B_0."""
    if k_per_user < 1:
        raise ValueError("k_per_user must be positive")
    strength = _strength(np.asarray(channels))            # (M, K)
    n0 = len(codebook.b_0)
    per_refl = strength.reshape(codebook.n_reflection, n0, -1).max(axis=1)   # (R, K)
    chosen = set()
    for k in range(per_refl.shape[1]):
        col = per_refl[:, k]
        order = np.lexsort((np.arange(col.size), -col))
        chosen.update(int(r) for r in order[:k_per_user])
    refl = sorted(chosen)
    return np.array([r * n0 + i0 for r in refl for i0 in range(n0)], dtype=int)


def write_codebook_csv(codebook: OfflineCodebook, path):
    with open(path, "w", newline="") as fh:
        fh.write("index,beta_x,beta_y,beta_0\n")
        for m in codebook.modes:
            fh.write(f"{m.index},{m.beta_x:.17g},{m.beta_y:.17g},{m.beta_0:.17g}\n")


def read_codebook_csv(path) -> OfflineCodebook:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    cb = OfflineCodebook(tuple(np.unique(data[:, 1])), tuple(np.unique(data[:, 2])), tuple(np.unique(data[:, 3])))
    if cb.size != len(data):
        raise ValueError("codebook file is not a full product grid")
    for row in data:
        m = cb.modes[int(row[0])]
        if not np.allclose((m.beta_x, m.beta_y, m.beta_0), row[1:], rtol=0, atol=1e-15):
            raise ValueError("codebook file does not follow canonical mode indexing")
    return cb
