import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import energy_by_terms, grid_edges, pair_cost
from sublabel.core import (
    ContinuousLabeling,
    DiscreteLabeling,
    DomainError,
    GridGraph,
    InvalidLabelingError,
    LabelSpace,
    MrfProblem,
    PairwiseKind,
    PairwiseModel,
    continuous_energy,
    discrete_energy,
    psnr,
)


def two_node(lam, L=2, unary=None, kind="tv", trunc=math.inf, unary_fn=None):
    unary = np.zeros((2, L)) if unary is None else np.asarray(unary, float)
    model = PairwiseModel(PairwiseKind(kind), lam, trunc)
    return MrfProblem(GridGraph(1, 2), LabelSpace(0.0, 1.0, L), unary, model, unary_fn)


@given(st.floats(-5, 5), st.floats(0.01, 10), st.integers(2, 300))
def test_label_space_levels(lo, width, count):
    ls = LabelSpace(lo, lo + width, count)
    lv = ls.levels
    assert lv[0] == lo and lv[-1] == lo + width
    assert np.all(np.diff(lv) > 0)
    assert np.max(np.abs(np.diff(lv) - width / (count - 1))) <= 1e-12 * max(1.0, abs(lo) + width)


def test_label_space_rejects_bad():
    with pytest.raises(ValueError):
        LabelSpace(0, 1, 1)
    with pytest.raises(ValueError):
        LabelSpace(1, 1, 5)


@given(st.integers(1, 12), st.integers(1, 12))
def test_grid_edges(h, w):
    g = GridGraph(h, w)
    assert g.num_edges == h * (w - 1) + (h - 1) * w
    assert sorted(map(tuple, g.edges.tolist())) == sorted(grid_edges(h, w))


@given(st.sampled_from(list(PairwiseKind)), st.floats(0, 5), st.floats(0, 2),
       st.floats(0, 1), st.floats(0, 1))
def test_pairwise_symmetric_nonnegative(kind, lam, trunc, a, b):
    m = PairwiseModel(kind, lam, trunc)
    assert m.cost(a, b) == m.cost(b, a) >= 0
    assert m.cost(a, a) == 0
    assert np.isclose(m.cost(a, b), pair_cost(m, a, b))


def test_discrete_energy_trivial():
    assert discrete_energy(two_node(1.0), DiscreteLabeling([0, 0])) == 0.0
    assert discrete_energy(two_node(0.6), DiscreteLabeling([0, 1])) == pytest.approx(0.6)


@pytest.mark.parametrize("seed", range(10))
def test_discrete_energy_matches_term_oracle(seed):
    rng = np.random.default_rng(seed)
    kind = list(PairwiseKind)[seed % 3]
    p = MrfProblem(GridGraph(2, 2), LabelSpace(0, 1, 3), rng.random((4, 3)),
                   PairwiseModel(kind, rng.random() * 2, 0.3))
    idx = rng.integers(0, 3, 4)
    assert discrete_energy(p, DiscreteLabeling(idx)) == pytest.approx(energy_by_terms(p, idx), abs=1e-12)


def test_invalid_labeling():
    p = two_node(1.0)
    with pytest.raises(InvalidLabelingError):
        discrete_energy(p, DiscreteLabeling([0]))
    with pytest.raises(InvalidLabelingError):
        discrete_energy(p, DiscreteLabeling([0, 2]))


def test_continuous_energy_trivial():
    p = two_node(1.0, unary_fn=lambda t: t * t)
    assert continuous_energy(p, ContinuousLabeling([0.5, 0.5])) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        continuous_energy(p, ContinuousLabeling([0.5, 1.5]))


@pytest.mark.parametrize("seed", range(5))
def test_continuous_agrees_on_grid(seed):
    rng = np.random.default_rng(seed)
    f = rng.random(6)
    lv = np.linspace(0, 1, 5)
    fn = lambda t: (t - f) ** 2  # noqa: E731
    unary = (lv[None, :] - f[:, None]) ** 2
    p = MrfProblem(GridGraph(2, 3), LabelSpace(0, 1, 5), unary, PairwiseModel.l1tv(0.7), fn)
    idx = rng.integers(0, 5, 6)
    assert continuous_energy(p, ContinuousLabeling(lv[idx])) == pytest.approx(
        discrete_energy(p, DiscreteLabeling(idx)), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_continuous_energy_resummation(seed):
    # table-only problem: piecewise-linear continuation, re-evaluated by np.interp
    rng = np.random.default_rng(seed)
    p = MrfProblem(GridGraph(2, 3), LabelSpace(0, 1, 4), rng.random((6, 4)),
                   PairwiseModel.truncated_quadratic(2.0, 0.1))
    x = rng.random(6)
    lv = np.linspace(0, 1, 4)
    want = sum(np.interp(x[i], lv, p.unary[i]) for i in range(6))
    want += sum(pair_cost(p.pairwise, x[i], x[j]) for i, j in grid_edges(2, 3))
    assert continuous_energy(p, ContinuousLabeling(x)) == pytest.approx(want, abs=1e-12)


def test_psnr():
    z = ContinuousLabeling(np.zeros(10))
    assert psnr(z, z) == math.inf
    assert psnr(z, ContinuousLabeling(np.full(10, 0.1))) == pytest.approx(20.0)


@settings(max_examples=50)
@given(st.integers(0, 2**31))
def test_psnr_matches_mse(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random(20), rng.random(20)
    mse = sum((x - y) ** 2 for x, y in zip(a, b)) / 20
    assert psnr(ContinuousLabeling(a), ContinuousLabeling(b)) == pytest.approx(10 * math.log10(1 / mse))


def test_unary_shape_checked():
    with pytest.raises(ValueError):
        MrfProblem(GridGraph(1, 2), LabelSpace(0, 1, 3), np.zeros((2, 2)), PairwiseModel.l1tv(1))
    with pytest.raises(ValueError):
        MrfProblem(GridGraph(1, 2), LabelSpace(0, 1, 2), np.array([[0, np.nan], [0, 0]]),
                   PairwiseModel.l1tv(1))
