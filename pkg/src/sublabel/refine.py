"""
Sublabel-accurate refinement around a discrete labeling.

Each node gets a label range spanning its discrete label and the two grid
neighbours. Inside that range the energy is replaced by a convex model and
solved with :mod:`sublabel.cvxsolve`:

* LM - tabulated costs on pseudo-marginals (local LP relaxation)
* QM - quadratic data fit coupled to pseudo-marginals of the pairwise table
* QL - quadratic data fit plus a fitted linear kernel ``kappa |x_i - x_j|``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import (
    ContinuousLabeling,
    DiscreteLabeling,
    DomainError,
    MrfProblem,
    PairwiseKind,
    check_labeling,
)
from .cvxsolve import ConvergenceError, SaddleProblem, SolveOptions, solve

CONVEXITY_GUARD = 1e-12


class RefineKind(enum.Enum):
    NONE = "none"
    LM = "lm"
    QM = "qm"
    QL = "ql"


@dataclass(frozen=True)
class LabelRange:
    left: np.ndarray
    center: np.ndarray
    right: np.ndarray

    def slots(self) -> np.ndarray:
        """``(N, 3)`` label indices ``center - 1, center, center + 1``."""
        return self.center[:, None] + np.array([-1, 0, 1])[None, :]

    def live(self, num_labels: int) -> np.ndarray:
        s = self.slots()
        return (s >= 0) & (s < num_labels)

    def bounds(self, p: MrfProblem):
        lv = p.labels.levels
        return lv[self.left], lv[self.right]

    @property
    def sizes(self) -> np.ndarray:
        return self.right - self.left + 1


@dataclass(frozen=True)
class DataFit:
    """Per-node ``Q_i(t) = a t^2 + b t + c``; ``quadratic`` is False for linear fits."""

    quadratic: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.a * t * t + self.b * t + self.c


@dataclass(frozen=True)
class PairwiseLinearFit:
    kappa: np.ndarray


def select_ranges(p: MrfProblem, u_d: DiscreteLabeling) -> LabelRange:
    c = check_labeling(p, u_d).copy()
    left = np.maximum(c - 1, 0)
    right = np.minimum(c + 1, p.num_labels - 1)
    return LabelRange(left=left, center=c, right=right)


def fit_data(p: MrfProblem, r: LabelRange) -> DataFit:
    """
    Convex model of each node's data term on its range.

    Interior nodes get the interpolating parabola through the three range
    points when it is convex, otherwise the line through the centre point
    with the endpoint secant slope. Nodes on the label-space boundary get
    the line through their two points. Every fit passes through the centre.
    """
    n = p.num_nodes
    rows = np.arange(n)
    lv = p.labels.levels
    h = p.labels.spacing
    x0 = lv[r.center]
    y0 = p.unary[rows, r.center]
    yl = p.unary[rows, r.left]
    yr = p.unary[rows, r.right]
    interior = (r.right - r.left) == 2

    width = lv[r.right] - lv[r.left]
    slope = (yr - yl) / width
    curv = np.where(interior, (yl - 2.0 * y0 + yr) / (2.0 * h * h), 0.0)
    quadratic = interior & (curv >= -CONVEXITY_GUARD)
    a = np.where(quadratic, np.maximum(curv, 0.0), 0.0)
    # Q(t) = a (t - x0)^2 + slope (t - x0) + y0, expanded
    b = slope - 2.0 * a * x0
    c = a * x0 * x0 - slope * x0 + y0
    return DataFit(quadratic=quadratic, a=a, b=b, c=c)


def fit_kappa(p: MrfProblem, r: LabelRange) -> PairwiseLinearFit:
    """
    Slope of a linear kernel ``kappa |l - m|`` per edge.

    Exact (``kappa = lambda``) for the L1TV prior; otherwise the least-squares
    slope over the grid label pairs of the edge's range block with ``l != m``.
    """
    e = p.grid.edges
    if p.pairwise.kind is PairwiseKind.L1TV:
        return PairwiseLinearFit(np.full(len(e), float(p.pairwise.weight)))
    L = p.num_labels
    lv = p.labels.levels
    slots = r.slots()
    live = r.live(L)
    si = np.clip(slots[e[:, 0]], 0, L - 1)
    sj = np.clip(slots[e[:, 1]], 0, L - 1)
    ok = live[e[:, 0]][:, :, None] & live[e[:, 1]][:, None, :]
    li = lv[si][:, :, None]
    lj = lv[sj][:, None, :]
    d = np.abs(li - lj)
    cost = p.pairwise.cost(li, lj)
    w = ok & (d > 0)
    num = np.sum(np.where(w, cost * d, 0.0), axis=(1, 2))
    den = np.sum(np.where(w, d * d, 0.0), axis=(1, 2))
    kappa = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return PairwiseLinearFit(np.maximum(kappa, 0.0))


def round_to_discrete(p: MrfProblem, x: ContinuousLabeling) -> DiscreteLabeling:
    """Nearest grid label per node; exact midpoints go to the lower label."""
    xs = np.asarray(x.x, dtype=float)
    if np.any(xs < p.labels.lo) or np.any(xs > p.labels.hi):
        raise DomainError(f"labels must lie in [{p.labels.lo}, {p.labels.hi}]")
    t = (xs - p.labels.lo) / p.labels.spacing
    idx = np.ceil(t - 0.5).astype(np.int64)
    return DiscreteLabeling(np.clip(idx, 0, p.num_labels - 1))


# -- convex program assembly --------------------------------------------------


def build_ql(p: MrfProblem, r: LabelRange, f: DataFit, k: PairwiseLinearFit) -> SaddleProblem:
    n = p.num_nodes
    e = p.grid.edges
    lo, hi = r.bounds(p)
    m = len(e)
    rows = np.repeat(np.arange(m), 2)
    cols = e.ravel()
    vals = np.tile([1.0, -1.0], m)
    K = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return SaddleProblem(
        a=f.a, b=f.b, c=f.c, lo=lo, hi=hi, K=K,
        weight=np.asarray(k.kappa, dtype=float),
        is_eq=np.zeros(m, dtype=bool),
        rhs=np.zeros(m),
    )


@dataclass(frozen=True)
class MarginalLayout:
    """Variable indexing for the pseudo-marginal programs (LM, QM)."""

    node_var: np.ndarray  # (N, 3), -1 where the slot is outside the label space
    edge_var: np.ndarray  # (E, 3, 3), -1 where either slot is dead
    coupled: np.ndarray  # (N,) index of X_i, or empty for LM
    num_vars: int


def _marginal_program(p: MrfProblem, r: LabelRange, f: DataFit | None):
    n, L = p.num_nodes, p.num_labels
    e = p.grid.edges
    ne = len(e)
    lv = p.labels.levels
    slots = r.slots()
    live = r.live(L)
    safe = np.clip(slots, 0, L - 1)

    node_var = np.full((n, 3), -1, dtype=np.int64)
    node_var[live] = np.arange(live.sum())
    nv = int(live.sum())
    edge_live = live[e[:, 0]][:, :, None] & live[e[:, 1]][:, None, :]
    edge_var = np.full((ne, 3, 3), -1, dtype=np.int64)
    edge_var[edge_live] = nv + np.arange(edge_live.sum())
    total = nv + int(edge_live.sum())
    coupled = np.zeros(0, dtype=np.int64)
    if f is not None:
        coupled = total + np.arange(n)
        total += n

    a = np.zeros(total)
    b = np.zeros(total)
    c = np.zeros(total)
    lo = np.zeros(total)
    hi = np.ones(total)

    if f is None:
        b[node_var[live]] = p.unary[np.nonzero(live)[0], safe[live]]
    V = p.pairwise_table()
    pair_cost = V[safe[e[:, 0]][:, :, None], safe[e[:, 1]][:, None, :]]
    b[edge_var[edge_live]] = pair_cost[edge_live]

    row_i, col_i, val_i = [], [], []
    nrows = 0
    # row marginals: sum_t phi_e(s, t) - phi_i(s) = 0
    for side in (0, 1):
        node = e[:, side]
        for s in range(3):
            sel = live[node, s]
            eids = np.nonzero(sel)[0]
            rid = nrows + np.arange(len(eids))
            nrows += len(eids)
            blk = edge_var[eids, s, :] if side == 0 else edge_var[eids, :, s]
            ok = blk >= 0
            row_i.append(np.repeat(rid, 3)[ok.ravel()])
            col_i.append(blk[ok])
            val_i.append(np.ones(ok.sum()))
            row_i.append(rid)
            col_i.append(node_var[node[eids], s])
            val_i.append(-np.ones(len(eids)))
    if f is not None:
        # coupling: sum_s phi_i(s) * level_s - X_i = 0
        rid = nrows + np.arange(n)
        nrows += n
        ni, ss = np.nonzero(live)
        row_i.append(rid[ni])
        col_i.append(node_var[ni, ss])
        val_i.append(lv[safe[ni, ss]])
        row_i.append(rid)
        col_i.append(coupled)
        val_i.append(-np.ones(n))
        lo_x, hi_x = r.bounds(p)
        a[coupled], b[coupled], c[coupled] = f.a, f.b, f.c
        lo[coupled], hi[coupled] = lo_x, hi_x

    K = sp.csr_matrix(
        (np.concatenate(val_i), (np.concatenate(row_i), np.concatenate(col_i))),
        shape=(nrows, total),
    )
    prob = SaddleProblem(
        a=a, b=b, c=c, lo=lo, hi=hi, K=K,
        weight=np.zeros(nrows),
        is_eq=np.ones(nrows, dtype=bool),
        rhs=np.zeros(nrows),
        blocks=node_var,
    )
    return prob, MarginalLayout(node_var, edge_var, coupled, total)


def build_lm(p: MrfProblem, r: LabelRange):
    return _marginal_program(p, r, None)


def build_qm(p: MrfProblem, r: LabelRange, f: DataFit):
    return _marginal_program(p, r, f)


def _marginal_start(p: MrfProblem, r: LabelRange, lay: MarginalLayout) -> np.ndarray:
    """Pseudo-marginals of the discrete labeling at the range centres."""
    x0 = np.zeros(lay.num_vars)
    x0[lay.node_var[:, 1]] = 1.0
    x0[lay.edge_var[:, 1, 1]] = 1.0
    if len(lay.coupled):
        x0[lay.coupled] = p.labels.levels[r.center]
    return x0


def _expected_labels(p: MrfProblem, r: LabelRange, lay: MarginalLayout, x) -> np.ndarray:
    live = lay.node_var >= 0
    phi = np.where(live, x[np.where(live, lay.node_var, 0)], 0.0)
    levels = p.labels.levels[np.clip(r.slots(), 0, p.num_labels - 1)]
    return np.sum(phi * levels, axis=1)


def _finish(p: MrfProblem, r: LabelRange, xs: np.ndarray) -> ContinuousLabeling:
    lo, hi = r.bounds(p)
    return ContinuousLabeling(np.clip(xs, lo, hi))


def _run(prob: SaddleProblem, opts: SolveOptions, x0, strict: bool):
    rep = solve(prob, opts, x0=x0)
    if strict and not rep.converged:
        raise ConvergenceError(
            f"PDHG stopped after {rep.iterations} iterations with residual "
            f"{rep.residual:.3e} > tol {opts.tol:.1e}",
            rep.residual,
            rep,
        )
    return rep


def refine_ql(p, r, f, k, opts: SolveOptions = SolveOptions(), strict: bool = True):
    """QL refinement. Returns ``(labeling, objective)``."""
    prob = build_ql(p, r, f, k)
    x0 = p.labels.levels[r.center]
    rep = _run(prob, opts, x0, strict)
    x = _finish(p, r, rep.x)
    return x, prob.objective(x.x)


def refine_qm(p, r, f, opts: SolveOptions = SolveOptions(), strict: bool = True):
    """QM refinement. Returns ``(labeling, objective)``."""
    prob, lay = build_qm(p, r, f)
    rep = _run(prob, opts, _marginal_start(p, r, lay), strict)
    x = _finish(p, r, rep.x[lay.coupled])
    return x, rep.objective


def refine_lm(p, r, opts: SolveOptions = SolveOptions(), strict: bool = True):
    """LM refinement. Returns ``(labeling, objective)``."""
    prob, lay = build_lm(p, r)
    rep = _run(prob, opts, _marginal_start(p, r, lay), strict)
    x = _finish(p, r, _expected_labels(p, r, lay, rep.x))
    return x, rep.objective


def variable_count(p: MrfProblem, r: LabelRange, kind: RefineKind) -> int:
    """Number of nonzero-pattern variables of a refinement program."""
    if kind is RefineKind.NONE:
        return 0
    if kind is RefineKind.QL:
        return p.num_nodes
    sizes = r.sizes
    e = p.grid.edges
    z = int(sizes.sum() + (sizes[e[:, 0]] * sizes[e[:, 1]]).sum())
    return z + (p.num_nodes if kind is RefineKind.QM else 0)
