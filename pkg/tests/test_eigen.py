import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_perron, random_monotone_matrix
from rsgame.eigen import (
    NonPositiveVector,
    NoConvergence,
    Reducible,
    collatz_wielandt_bounds,
    principal_eigenpair,
)
from rsgame.grid import build_grid, discretize
from rsgame.model import GameModel, MarkovStrategy


def test_scalar():
    ep = principal_eigenpair(np.array([[3.7]]))
    assert ep.lam == 3.7
    assert ep.psi.tolist() == [1.0]


def test_swap_matrix():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    for x0 in (0, 1):
        ep = principal_eigenpair(A, x0=x0)
        assert ep.lam == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(ep.psi, [1.0, 1.0], atol=1e-12)


def test_bounds_by_hand():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    lo, hi = collatz_wielandt_bounds(A, [1.0, 2.0])
    assert (lo, hi) == (0.5, 2.0)
    lo, hi = collatz_wielandt_bounds(A, [3.0, 3.0])
    assert lo == hi == 1.0


def test_bounds_reject_nonpositive():
    with pytest.raises(NonPositiveVector):
        collatz_wielandt_bounds(np.eye(2), [1.0, 0.0])


def test_reducible_is_rejected():
    A = np.array([[1.0, 0.0], [1.0, 2.0]])
    with pytest.raises(Reducible):
        principal_eigenpair(A)


def test_no_convergence_reports_bounds():
    rng = np.random.default_rng(0)
    A = random_monotone_matrix(rng, 40)
    with pytest.raises(NoConvergence) as info:
        principal_eigenpair(A, method="power", max_iter=3)
    assert info.value.lo <= info.value.hi


def _laplacian(R, h):
    g = build_grid(1, R, h)
    m = GameModel.from_strings(1, [[0.0]], [[0.0]], ["0"], ["0"], ["2^0.5"], [["0", "0"], ["0", "0"]])
    v1, v2 = MarkovStrategy.uniform(1, g, 1), MarkovStrategy.uniform(2, g, 1)
    return g, discretize(g, m, 1, v1, v2)


def test_laplacian_against_dense_oracle():
    g, M = _laplacian(1.0, 0.01)
    ep = principal_eigenpair(M, g.origin_interior)
    lam, vec = dense_perron(M)
    assert abs(ep.lam - lam) <= 1e-8
    # continuum value -(pi / 2R)^2 up to O(h^2)
    assert ep.lam == pytest.approx(-(math.pi / 2) ** 2, rel=1e-4)
    assert ep.psi[g.origin_interior] == 1.0
    assert np.allclose(ep.psi, vec / vec[g.origin_interior], atol=1e-8)


def test_exact_eigenvector_gives_tight_bracket():
    # the discrete Dirichlet Laplacian has sine eigenvectors
    g, M = _laplacian(1.0, 0.1)
    x = g.interior_coords[:, 0]
    psi = np.sin(np.pi * (x + 1.0) / 2.0)
    lo, hi = collatz_wielandt_bounds(M, psi)
    a = (2**0.5) ** 2 / 2  # diffusion coefficient as rounded by the model
    exact = -a * 2.0 / 0.1**2 * (1 - np.cos(np.pi * 0.1 / 2.0))
    assert hi - lo <= 1e-12 * abs(lo)
    assert lo == pytest.approx(exact, rel=1e-12)


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 200))
def test_random_matrices_match_dense_oracle(seed, n):
    rng = np.random.default_rng(seed)
    A = random_monotone_matrix(rng, n)
    lam, vec = dense_perron(A)
    ep = principal_eigenpair(sp.csr_matrix(A))
    assert abs(ep.lam - lam) <= 1e-8 * max(1.0, abs(lam))
    assert ep.lo <= lam + 1e-12 * max(1.0, abs(lam)) and lam <= ep.hi + 1e-12 * max(1.0, abs(lam))
    cos = abs(ep.psi @ vec) / (np.linalg.norm(ep.psi) * np.linalg.norm(vec))
    assert cos >= 1 - 1e-8
    assert np.all(ep.psi > 0)
    assert ep.hi - ep.lo <= 1e-10


@settings(max_examples=20)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30))
def test_power_bracket_shrinks_and_contains_root(seed, n):
    rng = np.random.default_rng(seed)
    A = random_monotone_matrix(rng, n)
    lam, _ = dense_perron(A)
    ep = principal_eigenpair(A, method="power", debug=True)
    widths = [hi - lo for lo, hi in ep.history]
    slack = 1e-12 * max(1.0, abs(lam))
    assert all(b <= a + slack for a, b in zip(widths, widths[1:]))
    assert all(lo - slack <= lam <= hi + slack for lo, hi in ep.history)


@pytest.mark.parametrize("shift", [-1.0, 0.5, 10.0])
def test_shift_equivariance(shift):
    rng = np.random.default_rng(7)
    A = random_monotone_matrix(rng, 60)
    base = principal_eigenpair(A)
    moved = principal_eigenpair(A + shift * np.eye(60))
    assert moved.lam == pytest.approx(base.lam + shift, abs=1e-9)
    assert np.max(np.abs(moved.psi - base.psi)) <= 1e-10 * np.max(base.psi)


def test_restarts_give_the_same_vector():
    rng = np.random.default_rng(3)
    A = random_monotone_matrix(rng, 80)
    ref = principal_eigenpair(A)
    for _ in range(5):
        start = rng.uniform(0.01, 10.0, 80)
        ep = principal_eigenpair(A, psi0=start)
        assert np.max(np.abs(ep.psi - ref.psi)) <= 1e-8 * np.max(ref.psi)


def test_start_vector_must_be_positive():
    with pytest.raises(NonPositiveVector):
        principal_eigenpair(np.eye(2) + 1, psi0=[1.0, -1.0])


def test_methods_agree_on_a_stencil():
    g = build_grid(1, 3.0, 0.05)
    m = GameModel.from_strings(1, [[0.0]], [[0.0]], ["-x0"], ["0"], ["1"], [["0.25*x0^2", "0"], ["0", "0"]])
    M = discretize(g, m, 1, MarkovStrategy.uniform(1, g, 1), MarkovStrategy.uniform(2, g, 1))
    a = principal_eigenpair(M, g.origin_interior, method="noda")
    b = principal_eigenpair(M, g.origin_interior, method="power")
    assert abs(a.lam - b.lam) <= 2e-10
    assert np.max(np.abs(a.psi - b.psi)) <= 1e-6
    assert a.residual <= 1e-9
