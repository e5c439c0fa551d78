"""Joint tile-mode selection and BS precoder design.

Selections are integer vectors with one codebook column per tile; ``-1``
marks a tile that is switched off (used while the greedy scheme builds up
its configuration). Powers are linear mW unless a name says dBm.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization, as_selection, end_to_end, lin2db, rows_for_phases
from .codebook import OfflineCodebook
from .sdp import SDPError, rank_one_extract, sinr_power_sdp, solve_sdp


class InfeasibleError(RuntimeError):
    """The SINR targets cannot be met for the given configuration."""

    def __init__(self, msg, certificate=None):
        super().__init__(msg)
        self.certificate = certificate


@dataclass
class OptimizationResult:
    p: float
    selection: np.ndarray
    Q: np.ndarray
    trace: list = field(default_factory=list)
    sinr: np.ndarray | None = None
    status: str = "ok"
    iterations: int = 0
    scheme: str = ""
    converged: bool = True

    @property
    def p_dbm(self):
        return float(lin2db(self.p)) if np.isfinite(self.p) and self.p > 0 else float("inf")


@dataclass
class P1Result:
    p: float
    mode: int
    powers: np.ndarray     # (M, K) per-mode, per-user requirement

    @property
    def feasible(self):
        return bool(np.isfinite(self.p))


def sinr_from_rows(rows, Q, sigma2):
    """SINR of every user for channel rows (K, Nt) and precoder (Nt, K)."""
    amp = np.abs(rows @ Q) ** 2                 # amp[k, j] = |h_k^H q_j|^2
    sig = np.diag(amp)
    return sig / (amp.sum(axis=1) - sig + sigma2)


def sinr(selection, Q, realization: ChannelRealization, k=None):
    vals = sinr_from_rows(end_to_end(selection, realization), Q, realization.sigma2)
    return vals if k is None else float(vals[k])


def f_coefficients(n, realization: ChannelRealization, selection, Q_unit):
    """|(h_{n,m,k} + rest_k)^H q_k'|^2 for every mode m of tile n; shape (M, K, K)."""
    sel = as_selection(selection, realization.n_tiles, realization.n_modes).copy()
    sel[n] = -1
    rest = end_to_end(sel, realization)                       # (K, Nt)
    rows = realization.tiles[n] + rest[None]                  # (M, K, Nt)
    return np.abs(rows @ Q_unit) ** 2                         # (M, K, K)


def solve_p1(n, realization: ChannelRealization, selection, Q_unit) -> P1Result:
    """Best mode for tile ``n`` with the precoder direction fixed.

    For each mode the smallest common power scaling meeting every SINR
    target is closed form; the mode minimizing the largest of them wins.
    """
    f = f_coefficients(n, realization, selection, Q_unit)
    own = np.einsum("mkk->mk", f)
    # off-diagonal sum directly; total-minus-own loses the last bits
    interf = np.where(np.eye(f.shape[1], dtype=bool), 0.0, f).sum(axis=2)
    gamma = realization.gamma
    den = own - gamma * interf
    with np.errstate(divide="ignore"):
        powers = np.where(den > 0, gamma * realization.sigma2 / np.where(den > 0, den, 1.0), np.inf)
    worst = powers.max(axis=1)
    m = int(np.argmin(worst))
    return P1Result(float(worst[m]), m, powers)


def balance_powers(rows, directions, gamma, sigma2):
    """Per-user powers making every SINR constraint hold with equality.

    Returns None when the directions cannot support the targets.
    """
    amp = np.abs(rows @ directions) ** 2
    F = -amp.copy()
    np.fill_diagonal(F, np.diag(amp) / gamma)
    try:
        p = np.linalg.solve(F, np.full(len(gamma), sigma2))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        return None
    return p


def optimal_precoder(rows, gamma, sigma2, tol=1e-8):
    """Minimum-power precoder for fixed channel rows; returns (p, Q)."""
    rows = np.asarray(rows, dtype=complex)
    gamma = np.asarray(gamma, dtype=float)
    K = rows.shape[0]
    if K == 1:
        h = rows[0].conj()
        nrm = np.linalg.norm(h)
        if nrm == 0:
            raise InfeasibleError("zero channel")
        p = gamma[0] * sigma2 / nrm**2
        return p, (np.sqrt(p) * h / nrm)[:, None]
    prob = sinr_power_sdp(rows, gamma, sigma2)
    sol = solve_sdp(prob, tol=tol)
    if sol.status == "infeasible":
        raise InfeasibleError("SINR targets are infeasible", sol.certificate)
    ext = rank_one_extract(sol, prob)
    norms = np.linalg.norm(ext.Q, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    directions = ext.Q / safe
    powers = balance_powers(rows, directions, gamma, sigma2)
    if powers is not None:
        Q = directions * np.sqrt(powers)
    elif ext.feasible:
        Q = ext.Q
    else:
        raise SDPError("rank-one recovery did not yield a feasible precoder")
    return float(np.sum(np.abs(Q) ** 2)), Q


def solve_p2(selection, realization: ChannelRealization):
    rows = end_to_end(selection, realization)
    return optimal_precoder(rows, realization.gamma, realization.sigma2)


def _result(p, sel, Q, realization, **kw):
    return OptimizationResult(p, np.array(sel, dtype=int), Q, sinr=sinr(sel, Q, realization), **kw)


def alternating_optimization(realization: ChannelRealization, selection, Q, n_iter=5, tol=1e-6):
    """Cyclic tile-by-tile mode updates alternated with precoder redesign.

    The trace records the power after every tile update and after every
    precoder update, so it has N+1 entries per outer iteration.
    """
    sel = as_selection(selection, realization.n_tiles, realization.n_modes).copy()
    if np.any(sel < 0):
        raise ValueError("every tile needs an initial mode")
    Q = np.asarray(Q, dtype=complex)
    p = float(np.sum(np.abs(Q) ** 2))
    trace = [p]
    converged = False
    it = 0
    for it in range(1, n_iter + 1):
        p_start = p
        Q_unit = Q / np.sqrt(p)
        for n in range(realization.n_tiles):
            res = solve_p1(n, realization, sel, Q_unit)
            if res.feasible and res.p <= p:
                sel[n] = res.mode
                p = res.p
            trace.append(p)
        Q = Q_unit * np.sqrt(p)
        try:
            p2, Q2 = solve_p2(sel, realization)
            if p2 <= p:
                p, Q = p2, Q2
        except (InfeasibleError, SDPError):
            pass
        trace.append(p)
        if (p_start - p) <= tol * p_start:
            converged = True
            break
    return _result(p, sel, Q, realization, trace=trace, iterations=it, scheme="ao", converged=converged)


def greedy(realization: ChannelRealization, scheme="greedy"):
    """Configure tiles one at a time, each serving the most demanding user."""
    N = realization.n_tiles
    sel = np.full(N, -1, dtype=int)
    trace = []
    for n in range(N):
        p, Q = solve_p2(sel, realization)
        trace.append(p)
        k_star = int(np.argmax(np.linalg.norm(Q, axis=0)))
        acc = np.zeros(realization.n_t, dtype=complex)
        for j in range(n):
            acc += realization.tiles[j, sel[j], k_star]
        strength = np.linalg.norm(realization.tiles[n, :, k_star] + acc, axis=-1)
        sel[n] = int(np.argmax(strength))
    p, Q = solve_p2(sel, realization)
    trace.append(p)
    return _result(p, sel, Q, realization, trace=trace, iterations=N, scheme=scheme)


def brute_force_mip(realization: ChannelRealization, limit=10_000):
    """Global optimum by enumerating every mode assignment."""
    N, M = realization.n_tiles, realization.n_modes
    if M**N > limit:
        raise ValueError(f"{M}^{N} assignments exceed the enumeration limit {limit}")
    best = (np.inf, None, None)
    for combo in itertools.product(range(M), repeat=N):
        try:
            p, Q = solve_p2(combo, realization)
        except InfeasibleError:
            continue
        if p < best[0]:
            best = (p, combo, Q)
    if best[1] is None:
        raise InfeasibleError("no assignment is feasible")
    return _result(best[0], best[1], best[2], realization, scheme="brute_force")


def zero_forcing(rows, gamma, sigma2):
    """Pseudo-inverse directions with per-user powers meeting the targets exactly."""
    rows = np.asarray(rows, dtype=complex)
    if np.linalg.matrix_rank(rows) < rows.shape[0]:
        raise InfeasibleError("zero forcing needs linearly independent user channels")
    W = np.linalg.pinv(rows)
    U = W / np.linalg.norm(W, axis=0)
    gains = np.abs(np.einsum("kn,nk->k", rows, U)) ** 2
    powers = np.asarray(gamma) * sigma2 / gains
    Q = U * np.sqrt(powers)
    return float(powers.sum()), Q


def benchmark(kind, realization: ChannelRealization, rng=None):
    """Reference schemes: no IRS (optimal / ZF), random-phase IRS, specular tiles."""
    off = np.full(realization.n_tiles, -1, dtype=int)
    if kind == "no_irs_optimal":
        p, Q = optimal_precoder(realization.direct, realization.gamma, realization.sigma2)
        return OptimizationResult(p, off, Q, sinr=sinr_from_rows(realization.direct, Q, realization.sigma2), scheme=kind)
    if kind == "no_irs_zf":
        p, Q = zero_forcing(realization.direct, realization.gamma, realization.sigma2)
        return OptimizationResult(p, off, Q, sinr=sinr_from_rows(realization.direct, Q, realization.sigma2), scheme=kind)
    cfg, sc = realization.config, realization.scatterers
    if cfg is None or sc is None:
        raise ValueError(f"{kind} needs the realization's scatterers and configuration")
    if kind == "irs_random_phase":
        rng = np.random.default_rng(rng)
        geom = cfg.geometry
        phases = rng.uniform(0, 2 * np.pi, (realization.n_tiles, geom.Q_x, geom.Q_y))
        rows = realization.direct + rows_for_phases(sc, cfg, phases).sum(axis=0)
        p, Q = optimal_precoder(rows, realization.gamma, realization.sigma2)
        return OptimizationResult(p, off, Q, sinr=sinr_from_rows(rows, Q, realization.sigma2), scheme=kind)
    if kind == "irs_specular_tiles":
        from .channel import effective_channels
        cb = OfflineCodebook((0.0,), (0.0,), cfg.codebook().b_0)
        specular = realization.with_tiles(effective_channels(sc, cfg, cb), np.arange(cb.size))
        return greedy(specular, scheme=kind)
    raise ValueError(f"unknown benchmark {kind!r}")
