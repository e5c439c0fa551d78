"""Geometric multipath channel synthesis and effective per-mode channels.

Channels are stored as row vectors: ``direct[k]`` is the BS-to-user-k row
and ``tiles[n, m, k]`` the row contributed by tile ``n`` in mode ``m``, so
that the received amplitude for a precoder column ``q`` is ``row @ q``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import OfflineCodebook
from .geometry import IncidentAngle, ReflectionAngle, combined_cosines
from .tile import KAPPA, SQRT_4PI, TileGeometry, brute_force_discrete, discrete_from_slopes


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def noise_power(bandwidth_hz, n0_dbm_per_hz, nf_db):
    """Receiver noise power in mW."""
    return float(db2lin(n0_dbm_per_hz + 10 * math.log10(bandwidth_hz) + nf_db))


def tile_layout(n_tiles: int):
    """Integer grid coordinates of ``n_tiles`` tiles on a near-square grid."""
    if n_tiles == 0:
        return np.zeros((0, 2), dtype=int)
    rows = int(math.isqrt(n_tiles))
    while n_tiles % rows:
        rows -= 1
    cols = n_tiles // rows
    ux = np.arange(cols) - (cols - 1) // 2
    uy = np.arange(rows) - (rows - 1) // 2
    return np.array([(x, y) for y in uy for x in ux], dtype=int)


@dataclass(frozen=True)
class SystemConfig:
    """System parameters; lengths and distances are in wavelengths."""

    bs_rows: int = 4
    bs_cols: int = 4
    n_users: int = 2
    n_tiles: int = 9
    tile_size: float = 10.0
    pitch: float = 0.5
    cell_size: float = 0.4
    tau: float = 0.8
    codebook_x: int = 10
    codebook_y: int = 10
    codebook_0: int = 4
    modes_per_user: int = 4
    paths_direct: int = 1
    paths_bs_irs: int = 2
    paths_irs_user: int = 2
    rho_d: float = 4000.0
    rho_t: float = 3200.0
    rho_r: float = 800.0
    shadow_d_db: float = -40.0
    shadow_t_db: float = 0.0
    shadow_r_db: float = 0.0
    bandwidth_hz: float = 20e6
    n0_dbm_hz: float = -174.0
    nf_db: float = 6.0
    gamma_db: float = 10.0
    ao_iterations: int = 5
    ao_tol: float = 1e-6
    preselection: str = "topk"
    delta_db: float = -130.0

    def __post_init__(self):
        counts = ("bs_rows", "bs_cols", "n_users", "codebook_x", "codebook_y", "codebook_0",
                  "modes_per_user", "paths_direct", "paths_bs_irs", "paths_irs_user", "ao_iterations")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_tiles < 0:
            raise ValueError("n_tiles must be non-negative")
        if self.n_t < self.n_users:
            raise ValueError("need at least as many BS antennas as users")
        for name in ("rho_d", "rho_t", "rho_r", "bandwidth_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.preselection not in ("topk", "threshold"):
            raise ValueError("preselection must be 'topk' or 'threshold'")
        self.geometry  # validates tile dimensions

    @property
    def n_t(self):
        return self.bs_rows * self.bs_cols

    @property
    def geometry(self) -> TileGeometry:
        return TileGeometry(self.tile_size, self.tile_size, self.pitch, self.pitch, self.cell_size)

    @property
    def layout(self):
        return tile_layout(self.n_tiles)

    @property
    def sigma2(self):
        return noise_power(self.bandwidth_hz, self.n0_dbm_hz, self.nf_db)

    @property
    def gamma(self):
        return np.full(self.n_users, float(db2lin(self.gamma_db)))

    def codebook(self) -> OfflineCodebook:
        return OfflineCodebook.uniform(self.codebook_x, self.codebook_y, self.codebook_0, self.geometry)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def digest(self):
        text = ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in dataclasses.fields(self))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def bs_steering(rows, cols, theta, phi):
    """Planar half-wavelength array response, shape (..., rows*cols)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    mx = np.repeat(np.arange(rows), cols)
    my = np.tile(np.arange(cols), rows)
    ux = (np.sin(theta) * np.cos(phi))[..., None]
    uy = (np.sin(theta) * np.sin(phi))[..., None]
    return np.exp(1j * np.pi * (mx * ux + my * uy))


def cell_positions(geom: TileGeometry, u):
    """Centres (x, y) of every unit cell of the tile at grid coordinate ``u``."""
    nx, ny = geom.cell_indices()
    x = u[0] * geom.L_x + nx * geom.d_x
    y = u[1] * geom.L_y + ny * geom.d_y
    return np.meshgrid(x, y, indexing="ij")


def irs_steering(x, y, psi):
    """Plane-wave phase of direction ``psi`` at each cell centre."""
    ax = np.sin(psi.theta) * np.cos(psi.phi)
    ay = np.sin(psi.theta) * np.sin(psi.phi)
    return np.exp(1j * KAPPA * (x * ax + y * ay))


@dataclass(frozen=True)
class ScattererSet:
    """Angles and complex gains of every propagation path.

    Direct paths are indexed (user, path); BS-IRS paths by path; IRS-user
    paths by (user, path). Angles are radians.
    """

    d_theta: np.ndarray
    d_phi: np.ndarray
    d_gain: np.ndarray
    t_bs_theta: np.ndarray
    t_bs_phi: np.ndarray
    t_irs_theta: np.ndarray
    t_irs_phi: np.ndarray
    t_pol: np.ndarray
    t_gain: np.ndarray
    r_theta: np.ndarray
    r_phi: np.ndarray
    r_gain: np.ndarray

    def arrays(self):
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def __eq__(self, other):
        if not isinstance(other, ScattererSet):
            return NotImplemented
        a, b = self.arrays(), other.arrays()
        return all(np.array_equal(a[k], b[k]) for k in a)

    __hash__ = None

    def incident(self):
        return IncidentAngle(self.t_irs_theta[:, None, None], self.t_irs_phi[:, None, None], self.t_pol[:, None, None])

    def reflected(self):
        return ReflectionAngle(self.r_theta[None], self.r_phi[None])


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def sample_scatterers(config: SystemConfig, rng) -> ScattererSet:
    K = config.n_users
    Ld, Lt, Lr = config.paths_direct, config.paths_bs_irs, config.paths_irs_user
    half = np.pi / 2
    two = 2 * np.pi

    def amp(rho, shadow_db):
        return math.sqrt((1 / (4 * np.pi * rho)) ** 2 * db2lin(shadow_db))

    d_theta = rng.uniform(0, half, (K, Ld))
    d_phi = rng.uniform(0, two, (K, Ld))
    d_gain = amp(config.rho_d, config.shadow_d_db) * _cn(rng, (K, Ld))
    t_bs_theta = rng.uniform(0, half, Lt)
    t_bs_phi = rng.uniform(0, two, Lt)
    t_irs_theta = rng.uniform(0, half, Lt)
    t_irs_phi = rng.uniform(0, two, Lt)
    t_pol = rng.uniform(0, two, Lt)
    t_gain = amp(config.rho_t, config.shadow_t_db) * _cn(rng, Lt)
    r_theta = rng.uniform(0, half, (K, Lr))
    r_phi = rng.uniform(0, two, (K, Lr))
    r_gain = amp(config.rho_r, config.shadow_r_db) * _cn(rng, (K, Lr))
    return ScattererSet(d_theta, d_phi, d_gain, t_bs_theta, t_bs_phi, t_irs_theta, t_irs_phi,
                        t_pol, t_gain, r_theta, r_phi, r_gain)


def direct_rows(sc: ScattererSet, config: SystemConfig):
    a = bs_steering(config.bs_rows, config.bs_cols, sc.d_theta, sc.d_phi)   # (K, Ld, Nt)
    return np.einsum("kl,kln->kn", sc.d_gain, a.conj())


def translation_factor(geom: TileGeometry, u, psi_t, psi_r):
    ax, ay = combined_cosines(psi_t, psi_r)
    return np.exp(1j * KAPPA * (u[0] * geom.L_x * ax + u[1] * geom.L_y * ay))


def tile_mode_gain(u, mode, psi_t, psi_r, config: SystemConfig):
    """Response of mode ``mode`` on the tile at grid coordinate ``u``."""
    geom = config.geometry
    ax_star, ay_star = mode.slopes(geom)
    g = discrete_from_slopes(geom, ax_star, ay_star, 2 * np.pi * mode.beta_0, psi_t, psi_r, config.tau)
    return translation_factor(geom, u, psi_t, psi_r) * g


def _rows_from_pair_gains(sc: ScattererSet, config: SystemConfig, pair_gain):
    """Contract per-(BS path, user, IRS-user path) tile gains into BS rows.

    ``pair_gain`` has shape (..., Lt, K, Lr) holding g/lambda values.
    """
    a_t = bs_steering(config.bs_rows, config.bs_cols, sc.t_bs_theta, sc.t_bs_phi)   # (Lt, Nt)
    coef = pair_gain * SQRT_4PI * sc.t_gain[:, None, None] * sc.r_gain[None]
    return np.einsum("...tkr,tn->...kn", coef, a_t.conj())


def effective_channels(sc: ScattererSet, config: SystemConfig, codebook: OfflineCodebook):
    """Rows for every (tile, mode, user); shape (N, M, K, Nt)."""
    geom = config.geometry
    psi_t, psi_r = sc.incident(), sc.reflected()
    bx, by = codebook.reflection_slopes()
    shape = (-1, 1, 1, 1)
    g_refl = discrete_from_slopes(geom, (-bx / geom.d_x).reshape(shape), (-by / geom.d_y).reshape(shape),
                                  0.0, psi_t, psi_r, config.tau)                    # (R, Lt, K, Lr)
    layout = config.layout
    trans = np.stack([translation_factor(geom, u, psi_t, psi_r) for u in layout]) if len(layout) else \
        np.zeros((0,) + g_refl.shape[1:], dtype=complex)                            # (N, Lt, K, Lr)
    rows = _rows_from_pair_gains(sc, config, trans[:, None] * g_refl[None])         # (N, R, K, Nt)
    phase0 = np.exp(2j * np.pi * np.asarray(codebook.b_0))
    rows = rows[:, :, None] * phase0[None, None, :, None, None]                     # (N, R, B0, K, Nt)
    n, r, b, k, nt = rows.shape
    return rows.reshape(n, r * b, k, nt)


def rows_for_phases(sc: ScattererSet, config: SystemConfig, phases):
    """Rows of each tile driven by an arbitrary per-cell phase matrix.

    ``phases`` has shape (N, Q_x, Q_y); returns (N, K, Nt).
    """
    geom = config.geometry
    psi_t, psi_r = sc.incident(), sc.reflected()
    out = []
    for u, ph in zip(config.layout, phases):
        g = brute_force_discrete(geom, ph, psi_t, psi_r, config.tau) * translation_factor(geom, u, psi_t, psi_r)
        out.append(_rows_from_pair_gains(sc, config, g))
    if not out:
        return np.zeros((0, config.n_users, config.n_t), dtype=complex)
    return np.stack(out)


@dataclass
class ChannelRealization:
    direct: np.ndarray                  # (K, Nt)
    tiles: np.ndarray                   # (N, M, K, Nt)
    sigma2: float
    gamma: np.ndarray                   # (K,) linear
    mode_ids: np.ndarray                # codebook index of each mode column
    seed: object = None
    config_hash: str = ""
    scatterers: ScattererSet | None = field(default=None, repr=False)
    config: SystemConfig | None = field(default=None, repr=False)

    def __post_init__(self):
        self.direct = np.asarray(self.direct, dtype=complex)
        self.tiles = np.asarray(self.tiles, dtype=complex)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.mode_ids = np.asarray(self.mode_ids, dtype=int)
        K, nt = self.direct.shape
        if self.tiles.ndim != 4 or self.tiles.shape[2:] != (K, nt):
            raise ValueError("tile channel array has inconsistent dimensions")
        if self.tiles.shape[1] != len(self.mode_ids):
            raise ValueError("mode id list does not match tile channel array")
        if self.gamma.shape != (K,):
            raise ValueError("need one SINR target per user")

    @property
    def n_tiles(self):
        return self.tiles.shape[0]

    @property
    def n_modes(self):
        return self.tiles.shape[1]

    @property
    def n_users(self):
        return self.direct.shape[0]

    @property
    def n_t(self):
        return self.direct.shape[1]

    def restrict(self, columns):
        """Copy keeping only the given mode columns (positions, not codebook ids)."""
        columns = np.asarray(columns, dtype=int)
        return dataclasses.replace(self, tiles=self.tiles[:, columns], mode_ids=self.mode_ids[columns])

    def with_tiles(self, tiles, mode_ids):
        return dataclasses.replace(self, tiles=tiles, mode_ids=mode_ids)


def sample_realization(config: SystemConfig, rng_seed, codebook: OfflineCodebook | None = None) -> ChannelRealization:
    """Draw one channel realization with effective rows for every codebook mode."""
    rng = np.random.default_rng(rng_seed)
    sc = sample_scatterers(config, rng)
    cb = codebook or config.codebook()
    return ChannelRealization(
        direct=direct_rows(sc, config),
        tiles=effective_channels(sc, config, cb),
        sigma2=config.sigma2,
        gamma=config.gamma,
        mode_ids=np.arange(cb.size),
        seed=rng_seed,
        config_hash=config.digest(),
        scatterers=sc,
        config=config,
    )


def end_to_end(selection, realization: ChannelRealization):
    """Effective BS-to-user rows (K, Nt) for a per-tile mode choice.

    ``selection`` is either a length-N vector of mode positions (``-1`` marks
    a tile that is switched off) or an N x M one-hot matrix.
    """
    sel = as_selection(selection, realization.n_tiles, realization.n_modes)
    h = realization.direct.copy()
    for n, m in enumerate(sel):
        if m >= 0:
            h += realization.tiles[n, m]
    return h


def as_selection(selection, n_tiles, n_modes):
    s = np.asarray(selection)
    if s.ndim == 2:
        if s.shape != (n_tiles, n_modes):
            raise ValueError("selection matrix has wrong shape")
        if not np.all((s == 0) | (s == 1)) or not np.all(s.sum(axis=1) == 1):
            raise ValueError("selection matrix must be one-hot per tile")
        return np.argmax(s, axis=1)
    s = s.astype(int).reshape(-1)
    if s.shape != (n_tiles,):
        raise ValueError("selection vector must have one entry per tile")
    if np.any(s < -1) or np.any(s >= n_modes):
        raise ValueError("mode position out of range")
    return s


def one_hot(selection, n_modes):
    s = np.asarray(selection, dtype=int)
    if np.any(s < 0):
        raise ValueError("every tile needs a mode for a one-hot matrix")
    out = np.zeros((len(s), n_modes), dtype=int)
    out[np.arange(len(s)), s] = 1
    return out
