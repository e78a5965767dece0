import numpy as np
import pytest
import scipy.sparse.csgraph as csgraph
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import loop_stencil
from rsgame.benchmarks import coupled_2d_model, tug_of_war_model
from rsgame.grid import BadGeometry, build_grid, discretize, transfer_strategy
from rsgame.model import GameModel, MarkovStrategy


def single(drift="0", sigma="1.4142135623730951", cost="0", dim=1):
    return GameModel.from_strings(
        dim, [[0.0]], [[0.0]], [drift] + ["0"] * (dim - 1), ["0"] * dim, [sigma] * dim, [[cost, "0"], ["0", "0"]]
    )


def frozen(grid, model, i=1):
    v1 = MarkovStrategy.uniform(1, grid, model.n_actions(1))
    v2 = MarkovStrategy.uniform(2, grid, model.n_actions(2))
    return discretize(grid, model, i, v1, v2).matrix.toarray()


def test_grid_counts():
    g = build_grid(1, 1.0, 0.5)
    assert g.n_nodes == 5 and g.n_interior == 3
    assert g.coords[g.origin, 0] == 0.0
    assert g.interior[g.origin]
    g2 = build_grid(2, 1.0, 1.0)
    assert g2.n_nodes == 9 and g2.n_interior == 1
    assert np.all(g2.coords[g2.interior_idx[0]] == 0.0)


@pytest.mark.parametrize("R, h", [(1.0, 0.3), (1.0, 0.75), (1.0, 2.0), (-1.0, 0.5)])
def test_bad_geometry(R, h):
    with pytest.raises(BadGeometry):
        build_grid(1, R, h)


def test_bad_dimension():
    with pytest.raises(BadGeometry):
        build_grid(3, 1.0, 0.5)


@given(st.integers(1, 2), st.integers(2, 30), st.sampled_from([0.1, 0.25, 0.5, 1.0]))
def test_grid_structure(dim, cells, h):
    R = cells * h / 2
    g = build_grid(dim, R, h)
    on_edge = np.any(np.isclose(np.abs(g.coords), R, rtol=0, atol=1e-12 * R), axis=1)
    assert np.array_equal(~g.interior, on_edge)
    assert g.interior[g.origin]
    assert np.all(np.abs(g.coords[g.origin]) <= h / 2 + 1e-12)
    # lexicographic order: axis 0 slowest
    keys = [tuple(c) for c in g.coords]
    assert keys == sorted(keys)
    assert np.array_equal(g.interior_idx, np.flatnonzero(g.interior))


def test_laplacian_row():
    h = 0.1
    g = build_grid(1, 1.0, h)
    A = frozen(g, single())
    row = A[5]
    assert row[4] == pytest.approx(1 / h**2) and row[6] == pytest.approx(1 / h**2)
    assert row[5] == pytest.approx(-2 / h**2)


def test_upwind_row_by_hand():
    # a = 1, b = +1, h = 0.5: left 1/h^2 = 4, right 1/h^2 + b/h = 6, diagonal -10
    g = build_grid(1, 1.0, 0.5)
    A = frozen(g, single(drift="1"))
    assert A[1, 0] == pytest.approx(4.0)
    assert A[1, 2] == pytest.approx(6.0)
    assert A[1, 1] == pytest.approx(-10.0)


def test_cost_shifts_the_diagonal_only():
    g = build_grid(1, 2.0, 0.25)
    base = frozen(g, single(drift="-x0"))
    shifted = frozen(g, single(drift="-x0", cost="0.7"))
    assert np.array_equal(np.diag(shifted), np.diag(base) + 0.7)
    off = ~np.eye(g.n_interior, dtype=bool)
    assert np.array_equal(shifted[off], base[off])


def test_quadratic_second_difference_is_exact():
    # sigma = 1 gives a = 1/2 with no rounding, so a * (x^2)'' = 1 exactly
    g = build_grid(1, 2.0, 0.25)
    A = frozen(g, single(sigma="1"))
    x = g.interior_coords[:, 0]
    got = A @ x**2
    # rows next to the boundary lose the neighbour outside
    assert np.all(got[1:-1] == 1.0)
    # with a = 1 up to the rounding of sqrt(2)^2
    A = frozen(g, single())
    assert np.allclose((A @ x**2)[1:-1], 2.0, rtol=1e-14, atol=0)


def test_text_export():
    g = build_grid(1, 1.0, 0.5)
    v = MarkovStrategy.uniform(1, g, 1)
    w = MarkovStrategy.uniform(2, g, 1)
    text = discretize(g, single(drift="1", sigma="1"), 1, v, w).to_text()
    # a = 1/2, b = 1, h = 1/2: left 2, right 4, diagonal -6
    assert text.splitlines() == ["0 0 -6.0", "0 1 4.0", "1 0 2.0", "1 1 -6.0", "1 2 4.0", "2 1 2.0", "2 2 -6.0"]


def test_strategy_on_other_grid_is_rejected():
    g, g2 = build_grid(1, 1.0, 0.5), build_grid(1, 1.0, 0.25)
    m = single()
    with pytest.raises(BadGeometry):
        discretize(g, m, 1, MarkovStrategy.uniform(1, g2, 1), MarkovStrategy.uniform(2, g, 1))


def _random_strategy(rng, player, grid, m, pure):
    if pure:
        return MarkovStrategy.pure(player, grid, m, rng.integers(0, m, grid.n_nodes))
    w = rng.random((grid.n_nodes, m)) ** 3
    return MarkovStrategy(player, grid.key, w / w.sum(axis=1, keepdims=True))


@pytest.mark.parametrize("dim", [1, 2])
@settings(max_examples=15)
@given(seed=st.integers(0, 2**32 - 1), pure=st.booleans())
def test_matches_node_by_node_assembly(dim, seed, pure):
    rng = np.random.default_rng(seed)
    model = tug_of_war_model() if dim == 1 else coupled_2d_model()
    g = build_grid(dim, 1.0, 0.25) if dim == 2 else build_grid(1, 2.0, 0.25)
    v1 = _random_strategy(rng, 1, g, 3, pure)
    v2 = _random_strategy(rng, 2, g, 3, pure)
    for i in (1, 2, None):
        got = discretize(g, model, i, v1, v2).matrix.toarray()
        ref = loop_stencil(g, model, i, v1, v2)
        assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))
        if pure:
            relaxed = loop_stencil(g, model, i, v1, v2, upwind_relaxed=True)
            assert np.max(np.abs(got - relaxed)) <= 1e-12 * np.max(np.abs(ref))


@pytest.mark.parametrize("dim", [1, 2])
@given(seed=st.integers(0, 2**32 - 1))
def test_monotone_m_matrix_structure(dim, seed):
    rng = np.random.default_rng(seed)
    model = tug_of_war_model() if dim == 1 else coupled_2d_model()
    g = build_grid(dim, 2.0, 0.25) if dim == 1 else build_grid(2, 1.5, 0.25)
    v1 = _random_strategy(rng, 1, g, 3, False)
    v2 = _random_strategy(rng, 2, g, 3, False)
    full = discretize(g, model, 1, v1, v2)
    assert full.min_offdiag() >= 0.0
    gen = discretize(g, model, None, v1, v2)
    sums = gen.row_sums()
    scale = np.max(np.abs(gen.matrix.diagonal()))
    assert np.all(sums <= 1e-12 * scale)
    near_edge = np.any(np.vstack([g.nbr_plus, g.nbr_minus]) < 0, axis=0)
    assert np.all(sums[near_edge] < -1e-9 * scale)
    n_comp, _ = csgraph.connected_components(gen.matrix, directed=True, connection="strong")
    assert n_comp == 1


def test_discrete_maximum_principle():
    # A phi >= 0 inside with phi = 0 on the boundary forces phi <= 0
    g = build_grid(1, 2.0, 0.1)
    m = tug_of_war_model()
    v1 = MarkovStrategy.uniform(1, g, 3)
    v2 = MarkovStrategy.uniform(2, g, 3)
    A = discretize(g, m, None, v1, v2).matrix.toarray()
    rng = np.random.default_rng(1)
    for _ in range(20):
        rhs = rng.random(g.n_interior)
        phi = np.linalg.solve(A, rhs)
        assert np.all(phi <= 0)


def test_transfer_strategy_nearest_node():
    g, g2 = build_grid(1, 2.0, 0.5), build_grid(1, 3.0, 0.25)
    s = MarkovStrategy.pure(1, g, 3, [0, 0, 1, 1, 2, 2, 1, 0, 0])
    t = transfer_strategy(s, g, g2)
    assert t.grid_key == g2.key
    acts = t.actions()
    for node in g2.interior_idx:
        x = g2.coords[node, 0]
        near = g.nearest_node([[x]], interior_only=True)[0]
        assert acts[node] == s.actions()[near]
