"""
MRF problem model on 4-connected grids.

Energies have the form

    E(u) = sum_i E_i(u_i) + sum_{(i,j) in edges} E_ij(u_i, u_j)

where the unary terms are tabulated on a uniform label grid and the pairwise
term is one of a small family of distance-based priors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InvalidLabelingError(ValueError):
    """A labeling does not fit the problem (wrong length or label index)."""


class DomainError(ValueError):
    """A continuous labeling leaves the label-space bounds."""


class UnsupportedPriorError(ValueError):
    """A solver was asked to handle a pairwise model it cannot represent."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabelSpace:
    """Uniform discretization of ``[lo, hi]`` into ``count`` levels."""

    lo: float
    hi: float
    count: int
    levels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("label space needs at least two levels")
        if not self.hi > self.lo:
            raise ValueError("label space needs hi > lo")
        levels = self.lo + (self.hi - self.lo) * np.arange(self.count) / (self.count - 1)
        levels[-1] = self.hi
        object.__setattr__(self, "levels", _frozen(levels))

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)


@dataclass(frozen=True)
class GridGraph:
    """4-connected ``height x width`` grid, nodes numbered row-major."""

    height: int
    width: int
    edges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")
        idx = np.arange(self.height * self.width).reshape(self.height, self.width)
        horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
        vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
        edges = np.concatenate([horiz, vert]).astype(np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", _frozen(edges, dtype=np.int64))

    @property
    def num_nodes(self) -> int:
        return self.height * self.width

    @property
    def num_edges(self) -> int:
        return len(self.edges)


class PairwiseKind(enum.Enum):
    L1TV = "tv"
    TRUNCATED_LINEAR = "trunc-l1"
    TRUNCATED_QUADRATIC = "trunc-l2"


@dataclass(frozen=True)
class PairwiseModel:
    """Distance prior ``lam * min(|a - b|**k, T)`` (no truncation for L1TV)."""

    kind: PairwiseKind
    weight: float
    truncation: float = math.inf

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("pairwise weight must be nonnegative")
        if self.kind is not PairwiseKind.L1TV and self.truncation < 0:
            raise ValueError("truncation must be nonnegative")

    @classmethod
    def l1tv(cls, weight: float) -> "PairwiseModel":
        return cls(PairwiseKind.L1TV, weight)

    @classmethod
    def truncated_linear(cls, weight: float, truncation: float) -> "PairwiseModel":
        return cls(PairwiseKind.TRUNCATED_LINEAR, weight, truncation)

    @classmethod
    def truncated_quadratic(cls, weight: float, truncation: float) -> "PairwiseModel":
        return cls(PairwiseKind.TRUNCATED_QUADRATIC, weight, truncation)

    @property
    def exponent(self) -> int:
        return 2 if self.kind is PairwiseKind.TRUNCATED_QUADRATIC else 1

    def cost(self, a, b):
        """Vectorized pairwise cost; works on labels or on arbitrary reals."""
        d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if self.kind is PairwiseKind.L1TV:
            return self.weight * d
        return self.weight * np.minimum(d ** self.exponent, self.truncation)


@dataclass(frozen=True)
class MrfProblem:
    """
    Grid MRF with a tabulated unary term.

    Parameters
    ----------
    grid : GridGraph
    labels : LabelSpace
    unary : ndarray, shape (N, L)
        ``unary[i, k]`` is the data cost of giving node ``i`` label ``k``.
    pairwise : PairwiseModel
    unary_fn : callable, optional
        Analytic data term. Called with a length-N vector of reals, returns
        the per-node costs. Used by :func:`continuous_energy` in place of the
        table; when absent the table is interpolated piecewise-linearly.
    """

    grid: GridGraph
    labels: LabelSpace
    unary: np.ndarray
    pairwise: PairwiseModel
    unary_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        unary = _frozen(self.unary)
        if unary.shape != (self.grid.num_nodes, self.labels.count):
            raise ValueError(
                f"unary table has shape {unary.shape}, expected "
                f"{(self.grid.num_nodes, self.labels.count)}"
            )
        if not np.all(np.isfinite(unary)):
            raise ValueError("unary table must be finite")
        object.__setattr__(self, "unary", unary)

    @property
    def num_nodes(self) -> int:
        return self.grid.num_nodes

    @property
    def num_labels(self) -> int:
        return self.labels.count

    def pairwise_table(self) -> np.ndarray:
        """The ``L x L`` pairwise cost matrix on grid labels."""
        lv = self.labels.levels
        return self.pairwise.cost(lv[:, None], lv[None, :])

    def with_edges(self, edges) -> "MrfProblem":
        """Copy of the problem whose grid uses a reordered edge list."""
        edges = np.asarray(edges, dtype=np.int64)
        if sorted(map(tuple, edges.tolist())) != sorted(map(tuple, self.grid.edges.tolist())):
            raise ValueError("edge list must be a permutation of the grid edges")
        grid = GridGraph(self.grid.height, self.grid.width)
        object.__setattr__(grid, "edges", _frozen(edges, dtype=np.int64))
        return MrfProblem(grid, self.labels, self.unary, self.pairwise, self.unary_fn)


@dataclass(frozen=True)
class DiscreteLabeling:
    idx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "idx", _frozen(self.idx, dtype=np.int64))


@dataclass(frozen=True)
class ContinuousLabeling:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))


def check_labeling(p: MrfProblem, u: DiscreteLabeling) -> np.ndarray:
    idx = np.asarray(u.idx)
    if idx.shape != (p.num_nodes,):
        raise InvalidLabelingError(
            f"labeling has length {idx.size}, problem has {p.num_nodes} nodes"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= p.num_labels):
        raise InvalidLabelingError(f"label index out of range [0, {p.num_labels})")
    return idx


def levels_of(p: MrfProblem, u: DiscreteLabeling) -> np.ndarray:
    return p.labels.levels[check_labeling(p, u)]


def discrete_energy(p: MrfProblem, u: DiscreteLabeling) -> float:
    idx = check_labeling(p, u)
    data = p.unary[np.arange(p.num_nodes), idx].sum()
    lv = p.labels.levels[idx]
    e = p.grid.edges
    smooth = p.pairwise.cost(lv[e[:, 0]], lv[e[:, 1]]).sum()
    return float(data + smooth)


def interpolate_unary(p: MrfProblem, x: np.ndarray) -> np.ndarray:
    """Piecewise-linear continuation of the unary table at reals ``x``."""
    t = (np.asarray(x, dtype=float) - p.labels.lo) / p.labels.spacing
    k = np.clip(np.floor(t).astype(np.int64), 0, p.num_labels - 2)
    frac = t - k
    rows = np.arange(p.num_nodes)
    left = p.unary[rows, k]
    right = p.unary[rows, k + 1]
    return (1.0 - frac) * left + frac * right


def continuous_energy(p: MrfProblem, x: ContinuousLabeling) -> float:
    xs = np.asarray(x.x, dtype=float)
    if xs.shape != (p.num_nodes,):
        raise InvalidLabelingError(
            f"labeling has length {xs.size}, problem has {p.num_nodes} nodes"
        )
    if np.any(xs < p.labels.lo) or np.any(xs > p.labels.hi) or not np.all(np.isfinite(xs)):
        raise DomainError(f"labels must lie in [{p.labels.lo}, {p.labels.hi}]")
    if p.unary_fn is not None:
        data = np.asarray(p.unary_fn(xs), dtype=float).sum()
    else:
        data = interpolate_unary(p, xs).sum()
    e = p.grid.edges
    smooth = p.pairwise.cost(xs[e[:, 0]], xs[e[:, 1]]).sum()
    return float(data + smooth)


def psnr(clean: ContinuousLabeling, est: ContinuousLabeling) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] valued signals."""
    a = np.asarray(clean.x, dtype=float)
    b = np.asarray(est.x, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
