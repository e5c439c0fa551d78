"""Small dense Hermitian semidefinite programs.

Problems have the form

    minimize    sum_k tr(C_k X_k)
    subject to  sum_k tr(A_ik X_k) >= b_i,   X_k Hermitian PSD,

and are solved with an infeasible-start primal-dual path-following method
(HKM search direction, Mehrotra predictor-corrector) on the real symmetric
embedding [[Re, -Im], [Im, Re]] of each Hermitian block. The inequality
slacks form an extra nonnegative-orthant block.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SDPError(RuntimeError):
    """The interior-point iteration failed or ran out of iterations."""


@dataclass(frozen=True)
class HermitianSDP:
    objective: np.ndarray      # (K, n, n)
    constraints: np.ndarray    # (m, K, n, n)
    rhs: np.ndarray            # (m,)

    def __post_init__(self):
        C = np.asarray(self.objective, dtype=complex)
        A = np.asarray(self.constraints, dtype=complex)
        b = np.asarray(self.rhs, dtype=float)
        if C.ndim != 3 or C.shape[1] != C.shape[2]:
            raise ValueError("objective must be a stack of square blocks")
        if A.ndim != 4 or A.shape[1:] != C.shape or b.shape != (A.shape[0],):
            raise ValueError("constraint data dimensions are inconsistent")
        for M in (C, A):
            if not np.allclose(M, np.conj(np.swapaxes(M, -1, -2)), atol=1e-12 * max(1.0, np.abs(M).max())):
                raise ValueError("problem data must be Hermitian")
        object.__setattr__(self, "objective", C)
        object.__setattr__(self, "constraints", A)
        object.__setattr__(self, "rhs", b)

    @property
    def n_blocks(self):
        return self.objective.shape[0]

    @property
    def block_dim(self):
        return self.objective.shape[1]

    @property
    def n_constraints(self):
        return self.rhs.shape[0]

    def residuals(self, X):
        """Constraint values sum_k tr(A_ik X_k) - b_i."""
        return np.einsum("ikab,kba->i", self.constraints, X).real - self.rhs

    def value(self, X):
        return float(np.einsum("kab,kba->", self.objective, X).real)


@dataclass
class SDPSolution:
    status: str                         # "optimal" or "infeasible"
    X: np.ndarray | None = None         # (K, n, n) primal blocks
    y: np.ndarray | None = None         # (m,) constraint multipliers
    Z: np.ndarray | None = None         # (K, n, n) dual slack blocks
    primal: float = np.nan
    dual: float = np.nan
    gap: float = np.nan                 # relative duality gap
    iterations: int = 0
    certificate: np.ndarray | None = field(default=None, repr=False)


def sinr_power_sdp(rows, gamma, sigma2) -> HermitianSDP:
    """Power minimization under per-user SINR targets.

    ``rows[k]`` is user k's channel row, so its gain matrix is rows[k]^H rows[k].
    """
    rows = np.asarray(rows, dtype=complex)
    K, n = rows.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (K,))
    gains = np.einsum("ka,kb->kab", rows.conj(), rows)
    A = np.empty((K, K, n, n), dtype=complex)
    for i in range(K):
        for k in range(K):
            A[i, k] = gains[i] if i == k else -gamma[i] * gains[i]
    C = np.broadcast_to(np.eye(n), (K, n, n)).astype(complex)
    return HermitianSDP(C, A, gamma * sigma2)


def embed(H):
    """Real symmetric embedding of (a stack of) Hermitian matrices."""
    a, b = H.real, H.imag
    top = np.concatenate([a, -b], axis=-1)
    bot = np.concatenate([b, a], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def unembed(M):
    n = M.shape[-1] // 2
    a = (M[..., :n, :n] + M[..., n:, n:]) / 2
    b = (M[..., n:, :n] - M[..., :n, n:]) / 2
    return a + 1j * b


def _sym(M):
    return (M + np.swapaxes(M, -1, -2)) / 2


def _chol_inv(M):
    L = np.linalg.cholesky(M)
    Li = np.linalg.inv(L)
    return np.swapaxes(Li, -1, -2) @ Li


def _psd_step(X, dX):
    """Largest alpha with X + alpha dX PSD (np.inf if unbounded)."""
    L = np.linalg.cholesky(X)
    Li = np.linalg.inv(L)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ np.swapaxes(Li, -1, -2)))
    lo = lam.min()
    return np.inf if lo >= 0 else -1.0 / lo


def _lp_step(x, dx):
    neg = dx < 0
    return np.inf if not np.any(neg) else float(np.min(-x[neg] / dx[neg]))


class _Scaled:
    """Problem rescaled so that rhs, constraint norms and objective are O(1)."""

    def __init__(self, prob: HermitianSDP):
        A = prob.constraints
        b = prob.rhs
        anorm = np.sqrt(np.einsum("ikab,ikab->i", A, A.conj()).real)
        if np.any(anorm == 0):
            raise ValueError("constraint with all-zero data")
        self.row = np.where(b > 0, 1.0 / np.where(b > 0, b, 1.0), 1.0 / anorm)
        A1 = A * self.row[:, None, None, None]
        self.t = 1.0 / np.max(np.sqrt(np.einsum("ikab,ikab->i", A1, A1.conj()).real))
        C1 = prob.objective * self.t
        self.c = float(np.sqrt(np.einsum("kab,kab->", C1, C1.conj()).real)) or 1.0
        self.C = embed(C1 / self.c) / 2                           # (K, 2n, 2n)
        self.A = embed(A1 * self.t) / 2                           # (m, K, 2n, 2n)
        self.b = b * self.row


def solve_sdp(prob: HermitianSDP, tol: float = 1e-8, max_iter: int = 200) -> SDPSolution:
    sc = _Scaled(prob)
    C, A, b = sc.C, sc.A, sc.b
    m, K, d, _ = A.shape
    nu = K * d + m
    eye = np.eye(d)

    anorm = np.sqrt(np.einsum("ikab,ikab->i", A, A))
    xi = max(10.0, np.sqrt(d), float(np.max((1 + np.abs(b)) / (1 + anorm))))
    zeta = max(10.0, np.sqrt(d), float(np.max(anorm)), float(np.linalg.norm(C)))
    X = np.broadcast_to(xi * eye, (K, d, d)).copy()
    Z = np.broadcast_to(zeta * eye, (K, d, d)).copy()
    s = np.full(m, xi)
    w = np.full(m, zeta)
    y = np.zeros(m)
    bnorm = 1 + np.linalg.norm(b)
    cnorm = 1 + np.linalg.norm(C)

    def a_op(Y):            # constraint operator on PSD blocks
        return np.einsum("ikab,kab->i", A, Y)

    def a_adj(v):
        return np.einsum("i,ikab->kab", v, A)

    for it in range(1, max_iter + 1):
        rp = b - (a_op(X) - s)
        Rd = C - a_adj(y) - Z
        rd_lp = y - w
        pobj = float(np.einsum("kab,kab->", C, X))
        dobj = float(b @ y)
        mu = (float(np.einsum("kab,kab->", X, Z)) + s @ w) / nu
        pinf = np.linalg.norm(rp) / bnorm
        dinf = np.sqrt(np.sum(Rd**2) + np.sum(rd_lp**2)) / cnorm
        gap = (pobj - dobj) / max(abs(pobj), abs(dobj), 1e-300)
        if pinf < tol and dinf < tol and abs(gap) < tol:
            return _finish(prob, sc, X, y, Z, pobj, dobj, it)

        cert = _certificate(prob, sc, y, w)
        if cert is not None:
            return SDPSolution("infeasible", y=cert, iterations=it, certificate=cert)

        try:
            Zi = _chol_inv(Z)
        except np.linalg.LinAlgError as exc:
            raise SDPError("dual slack lost definiteness") from exc
        ZiA = np.einsum("kab,jkbc->jkac", Zi, A)                 # Z^-1 A_j
        ZiAX = ZiA @ X[None]
        M = np.einsum("ikab,jkba->ij", A, ZiAX) + np.diag(s / w)
        M = (M + M.T) / 2
        ZiRdX = Zi @ Rd @ X

        def direction(rc_blocks, rc_lp):
            rhs = rp - (a_op(rc_blocks) - rc_lp) + (a_op(ZiRdX) - (rd_lp * s / w))
            try:
                dy = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError as exc:
                raise SDPError("singular Schur complement") from exc
            dZ = Rd - a_adj(dy)
            dw = rd_lp + dy
            dX = _sym(rc_blocks - Zi @ dZ @ X)
            ds = rc_lp - dw * s / w
            return dX, ds, dy, dZ, dw

        def steps(dX, ds, dZ, dw):
            ap = min([_psd_step(X[k], dX[k]) for k in range(K)] + [_lp_step(s, ds)])
            ad = min([_psd_step(Z[k], dZ[k]) for k in range(K)] + [_lp_step(w, dw)])
            return min(1.0, 0.98 * ap), min(1.0, 0.98 * ad)

        try:
            aff = direction(-X, -s)
            ap, ad = steps(aff[0], aff[1], aff[3], aff[4])
            mu_aff = (np.einsum("kab,kab->", X + ap * aff[0], Z + ad * aff[3])
                      + (s + ap * aff[1]) @ (w + ad * aff[4])) / nu
            sigma = min(1.0, (mu_aff / mu) ** 3)
            corr_blocks = -X + sigma * mu * Zi - Zi @ aff[3] @ aff[0]
            corr_lp = -s + sigma * mu / w - aff[4] * aff[1] / w
            dX, ds, dy, dZ, dw = direction(corr_blocks, corr_lp)
            ap, ad = steps(dX, ds, dZ, dw)
        except np.linalg.LinAlgError as exc:
            raise SDPError("numerical failure while computing the search direction") from exc

        X = _sym(X + ap * dX)
        s = s + ap * ds
        Z = _sym(Z + ad * dZ)
        y = y + ad * dy
        w = w + ad * dw
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
            raise SDPError("iterates became non-finite")
    raise SDPError(f"no convergence within {max_iter} iterations")


def _certificate(prob, sc, y, w):
    """Farkas certificate y >= 0, sum_i y_i A_i <= 0 blockwise, b.y > 0."""
    yy = np.maximum(np.minimum(y, w), 0.0)
    by = sc.b @ yy
    if by <= 0 or np.linalg.norm(yy) < 1e6:
        return None
    v = yy / by
    blocks = np.einsum("i,ikab->kab", v, sc.A)
    if np.max(np.linalg.eigvalsh(blocks)) <= 1e-9 * max(1.0, np.linalg.norm(blocks)):
        return v * sc.row   # certificate for the unscaled data
    return None


def _finish(prob, sc, X, y, Z, pobj, dobj, it):
    Xh = unembed(X) * sc.t
    Xh = (Xh + np.conj(np.swapaxes(Xh, -1, -2))) / 2
    yh = y * sc.c * sc.row
    Zh = 2 * unembed(Z) * (sc.c / sc.t)
    Zh = (Zh + np.conj(np.swapaxes(Zh, -1, -2))) / 2
    primal = pobj * sc.c
    dual = dobj * sc.c
    gap = (primal - dual) / max(abs(primal), 1e-300)
    return SDPSolution("optimal", Xh, yh, Zh, primal, dual, gap, it)


@dataclass
class RankOneResult:
    Q: np.ndarray                # (n, K) precoder columns
    feasible: bool
    replaced: list               # block indices that needed the rank-one replacement


def rank_one_extract(sol: SDPSolution, prob: HermitianSDP, rank_tol: float = 1e-6, feas_tol: float = 1e-6):
    """Recover vector solutions q_k with q_k q_k^H approximating X_k."""
    if sol.status != "optimal":
        raise ValueError("need an optimal solution")
    K, n = prob.n_blocks, prob.block_dim
    Q = np.zeros((n, K), dtype=complex)
    replaced = []
    for k in range(K):
        lam, vec = np.linalg.eigh(sol.X[k])
        top = max(lam[-1], 0.0)
        if n == 1 or top == 0 or lam[-2] < rank_tol * top:
            Q[:, k] = np.sqrt(top) * vec[:, -1]
        else:
            # dual slack is singular along the optimal direction; its null
            # vector carries the whole trace of X_k
            _, zvec = np.linalg.eigh(sol.Z[k])
            Q[:, k] = np.sqrt(np.trace(sol.X[k]).real) * zvec[:, 0]
            replaced.append(k)
    X1 = np.einsum("ak,bk->kab", Q, Q.conj())
    res = prob.residuals(X1)
    feasible = bool(np.all(res >= -feas_tol * np.maximum(np.abs(prob.rhs), 1e-300)))
    return RankOneResult(Q, feasible, replaced)
