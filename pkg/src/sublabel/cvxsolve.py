"""
First-order primal-dual solver (PDHG / Chambolle-Pock, theta = 1).

Solves problems of the form

    min_x  sum_v (a_v x_v^2 + b_v x_v + c_v)  +  sum_r w_r |(K x)_r|
    s.t.   lo <= x <= hi,  x_B in simplex for each block B,
           (K x)_r = e_r for equality rows r

with every proximal map in closed form. Rows of ``K`` are either weighted
absolute values (dual variable clipped to ``[-w, w]``) or equalities (free
dual variable).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp


class ConvergenceError(RuntimeError):
    """The solver stopped at ``max_iters`` above the requested tolerance."""

    def __init__(self, message, residual, report=None):
        super().__init__(message)
        self.residual = residual
        self.report = report


def prox_box_quadratic(a, b, lo, hi, t0, step):
    """
    Minimizer of ``a t^2 + b t + (t - t0)^2 / (2 step)`` over ``[lo, hi]``.

    Works elementwise on arrays. ``a`` must be nonnegative.
    """
    t = (np.asarray(t0, dtype=float) - step * np.asarray(b, dtype=float)) / (
        1.0 + 2.0 * step * np.asarray(a, dtype=float)
    )
    return np.clip(t, lo, hi)


def dual_step_l1(y, kappa):
    """Projection onto ``[-kappa, kappa]``, the prox of the conjugate of ``kappa |.|``."""
    return np.clip(y, -np.asarray(kappa), np.asarray(kappa))


def project_simplex_rows(v, mask=None):
    """
    Euclidean projection of each row of ``v`` onto the probability simplex.

    ``mask`` marks live entries; dead entries are returned as zero and do not
    take part in the projection.
    """
    v = np.asarray(v, dtype=float)
    if mask is None:
        mask = np.ones(v.shape, dtype=bool)
    w = v.shape[1]
    u = np.where(mask, v, -np.inf)
    s = -np.sort(-u, axis=1)
    s_fin = np.where(np.isfinite(s), s, 0.0)
    css = np.cumsum(s_fin, axis=1)
    j = np.arange(1, w + 1)
    cond = np.isfinite(s) & (s - (css - 1.0) / j > 0)
    rho = w - np.argmax(cond[:, ::-1], axis=1)  # last index where cond holds
    theta = (css[np.arange(len(v)), rho - 1] - 1.0) / rho
    return np.where(mask, np.maximum(v - theta[:, None], 0.0), 0.0)


def operator_norm(K, iters: int = 500, rtol: float = 1e-7) -> float:
    """Power-iteration estimate of the spectral norm of sparse ``K``."""
    m, n = K.shape
    if m == 0 or n == 0 or K.nnz == 0:
        return 0.0
    KT = K.T.tocsr()
    # deterministic, non-degenerate start vector
    x = 1.0 + 0.5 * np.cos(np.arange(n) * 0.7)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = KT @ (K @ x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
        new = np.sqrt(nrm)
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return float(est)


@dataclass(frozen=True)
class SaddleProblem:
    """
    Parameters
    ----------
    a, b, c : ndarray (n,)
        Separable quadratic ``a x^2 + b x + c`` per primal variable (a >= 0).
    lo, hi : ndarray (n,)
        Box bounds. Variables inside a simplex block ignore them.
    K : sparse matrix (m, n)
    weight : ndarray (m,)
        L1 weight of each row; unused for equality rows.
    is_eq : ndarray (m,) of bool
    rhs : ndarray (m,)
        Right-hand side of equality rows.
    blocks : ndarray (B, w) of int, optional
        Simplex blocks, padded with -1. Block variables must have ``a == 0``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    K: sp.csr_matrix
    weight: np.ndarray
    is_eq: np.ndarray
    rhs: np.ndarray
    blocks: Optional[np.ndarray] = None
    norm_estimate: float = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.a)
        K = sp.csr_matrix(self.K, dtype=float)
        if K.shape[1] != n:
            raise ValueError(f"K has {K.shape[1]} columns for {n} variables")
        object.__setattr__(self, "K", K)
        for name in ("a", "b", "c", "lo", "hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            object.__setattr__(self, name, arr)
        m = K.shape[0]
        for name, dt in (("weight", float), ("is_eq", bool), ("rhs", float)):
            arr = np.asarray(getattr(self, name), dtype=dt)
            if arr.shape != (m,):
                raise ValueError(f"{name} must have shape ({m},)")
            object.__setattr__(self, name, arr)
        if np.any(self.a < 0):
            raise ValueError("quadratic curvatures must be nonnegative")
        if np.any(self.weight[~self.is_eq] < 0):
            raise ValueError("L1 weights must be nonnegative")
        if self.blocks is not None:
            blocks = np.asarray(self.blocks, dtype=np.int64)
            live = blocks[blocks >= 0]
            if np.any(self.a[live] != 0):
                raise ValueError("simplex block variables must be linear")
            object.__setattr__(self, "blocks", blocks)
        if np.any(self.lo > self.hi):
            raise ValueError("empty box")
        object.__setattr__(self, "norm_estimate", operator_norm(K))

    @property
    def num_vars(self) -> int:
        return len(self.a)

    @property
    def num_rows(self) -> int:
        return self.K.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = float(np.sum(self.a * x * x + self.b * x + self.c))
        if self.num_rows:
            kx = self.K @ x
            l1 = ~self.is_eq
            val += float(np.sum(self.weight[l1] * np.abs(kx[l1])))
        return val

    def eq_violation(self, x) -> float:
        if not np.any(self.is_eq):
            return 0.0
        kx = self.K @ np.asarray(x, dtype=float)
        return float(np.max(np.abs(kx[self.is_eq] - self.rhs[self.is_eq])))

    def prox(self, v, step):
        """Primal proximal map of the separable part with step ``step``."""
        x = prox_box_quadratic(self.a, self.b, self.lo, self.hi, v, step)
        if self.blocks is not None:
            blk = self.blocks
            mask = blk >= 0
            safe = np.where(mask, blk, 0)
            st = step[safe] if np.ndim(step) else step
            vals = v[safe] - st * self.b[safe]
            proj = project_simplex_rows(vals, mask)
            x[blk[mask]] = proj[mask]
        return x

    def exact_minimizer(self, x0):
        """Closed-form minimizer when there are no coupling rows."""
        a, b = self.a, self.b
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(a > 0, -b / (2.0 * np.where(a > 0, a, 1.0)), x0)
        t = np.where((a == 0) & (b > 0), self.lo, t)
        t = np.where((a == 0) & (b < 0), self.hi, t)
        x = np.clip(t, self.lo, self.hi)
        if self.blocks is not None:
            blk = self.blocks
            mask = blk >= 0
            safe = np.where(mask, blk, 0)
            costs = np.where(mask, b[safe], np.inf)
            win = np.argmin(costs, axis=1)
            onehot = np.zeros(blk.shape)
            onehot[np.arange(len(blk)), win] = 1.0
            x[blk[mask]] = onehot[mask]
        return x


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 100000
    tol: float = 1e-7
    tau: Optional[float] = None
    sigma: Optional[float] = None
    theta: float = 1.0
    check_every: int = 50
    steps: str = "diagonal"
    restart: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1 or self.check_every < 1:
            raise ValueError("iteration counts must be positive")
        for s in (self.tau, self.sigma):
            if s is not None and s <= 0:
                raise ValueError("step sizes must be positive")
        if self.steps not in ("diagonal", "scalar"):
            raise ValueError("steps must be 'diagonal' or 'scalar'")


@dataclass
class SolveReport:
    x: np.ndarray
    y: np.ndarray
    objective: float
    iterations: int
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list, repr=False)
    eq_violation: float = 0.0


def diagonal_steps(sp_: SaddleProblem, scale: float = 0.95):
    """
    Per-variable / per-row steps ``tau_j = s / sum_i |K_ij|`` and
    ``sigma_i = s / sum_j |K_ij|`` (diagonal preconditioning with alpha = 1).

    Simplex blocks share the smallest step of their members so the block
    prox stays a Euclidean projection.
    """
    A = abs(sp_.K)
    col = np.asarray(A.sum(axis=0)).ravel()
    row = np.asarray(A.sum(axis=1)).ravel()
    tau = scale / np.where(col > 0, col, 1.0)
    # free columns are only limited by their own prox
    tau[col == 0] = 1e6
    if sp_.blocks is not None:
        blk = sp_.blocks
        mask = blk >= 0
        tb = np.where(mask, tau[np.where(mask, blk, 0)], np.inf).min(axis=1)
        tau[blk[mask]] = np.broadcast_to(tb[:, None], blk.shape)[mask]
    sigma = scale / np.where(row > 0, row, 1.0)
    return tau, sigma


def _rms(v) -> float:
    return float(np.linalg.norm(v) / np.sqrt(max(v.size, 1)))


def solve(sp_: SaddleProblem, opts: SolveOptions = SolveOptions(), x0=None) -> SolveReport:
    """
    Run PDHG on ``sp_``.

    The residual is the sum of the RMS primal and dual optimality residuals,
    each divided by ``max(1, RMS of the matching operator term)``; it is
    evaluated every ``opts.check_every`` iterations. With ``opts.restart``
    the iteration is restarted from the running average whenever that
    average has a clearly smaller residual (adaptive restarts).

    On problems without equality rows every iterate is feasible, and the
    checked iterate (or ``x0``) with the lowest objective is returned.
    """
    n, m = sp_.num_vars, sp_.num_rows
    if x0 is None:
        x = np.clip(np.zeros(n), sp_.lo, sp_.hi)
    else:
        x = np.asarray(x0, dtype=float).copy()
    x = sp_.prox(x, 0.0)  # feasibility projection

    if m == 0 or sp_.norm_estimate == 0.0:
        x = sp_.exact_minimizer(x)
        return SolveReport(x, np.zeros(m), sp_.objective(x), 1, 0.0, True, [0.0])

    if opts.steps == "diagonal" and opts.tau is None and opts.sigma is None:
        tau, sigma = diagonal_steps(sp_)
    else:
        norm = sp_.norm_estimate
        tau = opts.tau if opts.tau is not None else 0.95 / norm
        sigma = opts.sigma if opts.sigma is not None else 0.95 / norm
        if tau * sigma * norm * norm > 1.0 + 1e-12:
            raise ValueError("step sizes violate tau * sigma * ||K||^2 <= 1")

    K = sp_.K
    KT = K.T.tocsr()
    eq = sp_.is_eq
    has_eq = bool(np.any(eq))
    radius = np.where(eq, np.inf, sp_.weight)
    rhs = np.where(eq, sp_.rhs, 0.0)
    theta = opts.theta

    def step(x, y, kty):
        x_new = sp_.prox(x - tau * kty, tau)
        x_bar = x_new + theta * (x_new - x)
        y_new = np.clip(y + sigma * (K @ x_bar) - sigma * rhs, -radius, radius)
        return x_new, y_new, KT @ y_new

    def residual_of(x, y, kty, x_new, y_new, kty_new):
        p = (x - x_new) / tau - (kty - kty_new)
        d = (y - y_new) / sigma - K @ (x - x_new)
        return _rms(p) / max(1.0, _rms(kty_new)) + _rms(d) / max(1.0, _rms(K @ x_new))

    y = np.zeros(m)
    kty = np.zeros(n)
    best_x, best_obj = x.copy(), sp_.objective(x)
    history = []
    residual = np.inf
    converged = False

    sum_x, sum_y, count = np.zeros(n), np.zeros(m), 0
    last_restart_res = np.inf
    prev_cand_res = np.inf
    since_restart = 0

    it = 0
    for it in range(1, opts.max_iters + 1):
        x_new, y_new, kty_new = step(x, y, kty)
        sum_x += x_new
        sum_y += y_new
        count += 1
        since_restart += 1

        if it % opts.check_every == 0 or it == opts.max_iters:
            residual = residual_of(x, y, kty, x_new, y_new, kty_new)
            x, y, kty = x_new, y_new, kty_new
            if opts.restart:
                xa, ya = sum_x / count, sum_y / count
                ktya = KT @ ya
                xa_new, ya_new, ktya_new = step(xa, ya, ktya)
                res_avg = residual_of(xa, ya, ktya, xa_new, ya_new, ktya_new)
                if res_avg < residual:
                    cand, cand_res = (xa_new, ya_new, ktya_new), res_avg
                else:
                    cand, cand_res = (x, y, kty), residual
                do_restart = (
                    cand_res <= 0.2 * last_restart_res
                    or (cand_res <= 0.8 * last_restart_res and cand_res > prev_cand_res)
                    or since_restart >= 0.36 * it
                )
                prev_cand_res = cand_res
                if do_restart:
                    x, y, kty = cand
                    residual = min(residual, cand_res)
                    last_restart_res = cand_res
                    prev_cand_res = np.inf
                    sum_x[:], sum_y[:], count = 0.0, 0.0, 0
                    since_restart = 0
            history.append(residual)
            if not has_eq:
                obj = sp_.objective(x)
                if obj < best_obj:
                    best_obj, best_x = obj, x.copy()
            if residual <= opts.tol:
                converged = True
                break
        else:
            x, y, kty = x_new, y_new, kty_new

    if has_eq:
        best_x = x
        best_obj = sp_.objective(x)
    else:
        obj = sp_.objective(x)
        if obj < best_obj:
            best_obj, best_x = obj, x.copy()
    return SolveReport(
        x=best_x,
        y=y,
        objective=best_obj,
        iterations=it,
        residual=float(residual),
        converged=converged,
        residual_history=history,
        eq_violation=sp_.eq_violation(best_x),
    )
