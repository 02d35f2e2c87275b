"""Independent reference implementations used as test oracles."""

import itertools

import numpy as np

from sublabel.core import GridGraph, LabelSpace, MrfProblem, PairwiseModel


def grid_edges(h, w):
    """4-neighbour edges recomputed from coordinates (not from GridGraph)."""
    out = []
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                out.append((i, i + 1))
            if r + 1 < h:
                out.append((i, i + w))
    return out


def pair_cost(model, a, b):
    d = np.abs(np.asarray(a, float) - np.asarray(b, float))
    if model.kind.value == "tv":
        return model.weight * d
    k = 2 if model.kind.value == "trunc-l2" else 1
    return model.weight * np.minimum(d ** k, model.truncation)


def energy_by_terms(p, idx):
    """Term-by-term re-summation of a discrete labeling's energy."""
    lv = np.linspace(p.labels.lo, p.labels.hi, p.labels.count)
    total = 0.0
    for i, k in enumerate(idx):
        total += float(p.unary[i, k])
    for i, j in grid_edges(p.grid.height, p.grid.width):
        total += float(pair_cost(p.pairwise, lv[idx[i]], lv[idx[j]]))
    return total


def energies(p, labs):
    """Energies of a stack of labelings ``labs`` (M, N), oracle summation order."""
    labs = np.atleast_2d(labs)
    n, L = p.num_nodes, p.num_labels
    E = p.unary[np.arange(n), labs].sum(1)
    lv = np.linspace(p.labels.lo, p.labels.hi, L)[labs]
    for i, j in grid_edges(p.grid.height, p.grid.width):
        E = E + pair_cost(p.pairwise, lv[:, i], lv[:, j])
    return E


def brute_force(p):
    """Exhaustive minimum over all L**N labelings; returns (energy, labeling)."""
    n, L = p.num_nodes, p.num_labels
    labs = np.stack(np.unravel_index(np.arange(L ** n), (L,) * n), 1)
    E = energies(p, labs)
    k = int(np.argmin(E))
    return float(E[k]), labs[k]


def paper_instance(rng, h=3, w=3, L=4, lam=0.6, beta=25.0, nu=0.025):
    """
    Small instance of the denoising model: truncated quadratic data on an
    observation that is either uniform noise or a noisy constant patch.
    """
    n = h * w
    if rng.random() < 0.5:
        f = rng.random(n)
    else:
        f = np.clip(rng.random() + 0.1 * rng.standard_normal(n), 0.0, 1.0)
    lv = np.linspace(0.0, 1.0, L)
    unary = 0.5 * beta * np.minimum((lv[None, :] - f[:, None]) ** 2, nu)
    return MrfProblem(GridGraph(h, w), LabelSpace(0.0, 1.0, L), unary, PairwiseModel.l1tv(lam))


def uniform_instance(rng, h=3, w=3, L=4, lam=None):
    lam = rng.random() * 1.5 if lam is None else lam
    return MrfProblem(GridGraph(h, w), LabelSpace(0.0, 1.0, L), rng.random((h * w, L)),
                      PairwiseModel.l1tv(lam))


def brute_min_cut(n, s_caps, t_caps, arcs):
    """
    Minimum s-t cut over all 2**n partitions.

    ``s_caps[i]`` is paid when node i is on the sink side, ``t_caps[i]``
    when on the source side; arc (u, v, c) is paid when u is source-side
    and v sink-side.
    """
    best = np.inf
    for bits in itertools.product((False, True), repeat=n):
        src = np.array(bits)
        c = float(np.sum(np.asarray(s_caps)[~src]) + np.sum(np.asarray(t_caps)[src]))
        for u, v, cap in arcs:
            if src[u] and not src[v]:
                c += cap
        best = min(best, c)
    return best


def grid_search_ql(qa, qb, lo, hi, edges, kappa, step=1e-3):
    """
    Dense grid minimum of sum_i qa_i t^2 + qb_i t + sum kappa |t_i - t_j|
    for one or two variables.
    """
    axes = [np.arange(l, h + step / 2, step) for l, h in zip(lo, hi)]
    axes = [np.clip(np.append(a, h), l, h) for a, l, h in zip(axes, lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    val = sum(qa[i] * mesh[i] ** 2 + qb[i] * mesh[i] for i in range(len(mesh)))
    for (i, j), k in zip(edges, kappa):
        val = val + k * np.abs(mesh[i] - mesh[j])
    idx = np.unravel_index(np.argmin(val), val.shape)
    return float(val[idx]), np.array([m[idx] for m in mesh])


def brute_min_cut_vec(n, s_caps, t_caps, tails, heads, caps):
    """Vectorized :func:`brute_min_cut` over all 2**n partitions."""
    src = ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    cost = (~src) @ np.asarray(s_caps, float) + src @ np.asarray(t_caps, float)
    if len(caps):
        cut = src[:, tails] & ~src[:, heads]
        cost = cost + cut @ np.asarray(caps, float)
    return float(cost.min())


ACCEPTANCE_LINES = []
