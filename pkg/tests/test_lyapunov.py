import numpy as np
import pytest

from oracles import ou_generator_on_gauss
from rsgame import exprlang
from rsgame.benchmarks import (
    V_GAUSS,
    constant_cost_lyapunov,
    constant_cost_model,
    coupled_2d_lyapunov,
    coupled_2d_model,
    game_lyapunov_1d,
    lq_lyapunov,
    lq_model,
    ou_lyapunov,
    ou_model,
    tug_of_war_model,
)
from rsgame.grid import build_grid
from rsgame.hjb import solve_semilinear_eigen
from rsgame.lyapunov import (
    LyapunovSpec,
    SpecInfeasible,
    check_lyapunov,
    cost_bound,
    generator_on_V,
    psi_over_V,
    sup_cost,
)
from rsgame.model import MarkovStrategy


def test_generator_matches_closed_form_to_second_order():
    m = ou_model()
    V = exprlang.parse(V_GAUSS)
    x = np.linspace(-3, 3, 25)[:, None]
    errs = []
    for h in (0.1, 0.05, 0.025):
        LV = generator_on_V(m, V, x, h)
        Vx = np.exp(0.25 * x[:, 0] ** 2)
        worst = 0.0
        for u, a in enumerate((-0.25, 0.25)):
            for w, b in enumerate((-0.25, 0.25)):
                exact = ou_generator_on_gauss(x[:, 0], a + b) * Vx
                worst = max(worst, np.max(np.abs(LV[u, w] - exact) / Vx))
        errs.append(worst)
    # central differences: the error drops by 4 per halving
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(3.5 < r < 4.5 for r in ratios)
    C = errs[-1] / 0.025**2
    print(f"observed constant C = {C:.3g}")
    assert errs[0] <= C * 0.1**2 * 1.2


def test_ou_passes():
    g = build_grid(1, 6.0, 0.05)
    rep = check_lyapunov(ou_model(), ou_lyapunov(), g)
    assert rep.ok and rep.cost_ok and rep.surrogate_ok
    assert rep.min_V >= 1.0
    assert rep.min_margin > 0
    assert rep.alpha >= 0


def test_outward_drift_is_rejected():
    g = build_grid(1, 6.0, 0.05)
    with pytest.raises(SpecInfeasible) as info:
        check_lyapunov(ou_model(drift_sign=1), ou_lyapunov(), g)
    w = info.value.witness
    assert w["check"] == "drift inequality"
    assert abs(w["x"][0]) > 3.0
    rep = check_lyapunov(ou_model(drift_sign=1), ou_lyapunov(), g, raise_on_failure=False)
    assert not rep.ok and rep.min_margin < 0


def test_bounded_case_with_zero_cost():
    g = build_grid(1, 5.0, 0.05)
    rep = check_lyapunov(constant_cost_model(0.0), constant_cost_lyapunov(0.0), g)
    assert rep.ok and rep.max_cost == 0.0
    assert rep.surrogate_ok is None


def test_bounded_case_rejects_cost_above_delta():
    g = build_grid(1, 5.0, 0.05)
    spec = LyapunovSpec.from_strings(V_GAUSS, "bounded", k_radius=3.0, delta=0.2)
    rep = check_lyapunov(constant_cost_model(0.3), spec, g, raise_on_failure=False)
    assert not rep.cost_ok and not rep.ok


def test_surrogate_flags_a_cost_that_outgrows_ell():
    g = build_grid(1, 6.0, 0.05)
    spec = LyapunovSpec.from_strings(V_GAUSS, "unbounded", "0.3*x0^2 - 1", k_radius=3.0)
    rep = check_lyapunov(ou_model(cost="x0^2"), spec, g, raise_on_failure=False)
    assert rep.surrogate_ok is False
    assert any(r["check"] == "surrogate outward growth" for r in rep.offending)


def test_spec_validation():
    with pytest.raises(ValueError):
        LyapunovSpec.from_strings(V_GAUSS, "bounded")
    with pytest.raises(ValueError):
        LyapunovSpec.from_strings(V_GAUSS, "unbounded")
    with pytest.raises(ValueError):
        LyapunovSpec.from_strings(V_GAUSS, "other", "1")
    g = build_grid(1, 2.0, 0.1)
    with pytest.raises(ValueError):
        check_lyapunov(ou_model(), ou_lyapunov(), g)  # K does not fit
    with pytest.raises(ValueError):
        check_lyapunov(ou_model(), ou_lyapunov(), build_grid(1, 6.0, 0.1), h_chk=0.2)


def test_sup_cost():
    m = tug_of_war_model()
    x = np.array([[0.0], [2.0]])
    # player 1: 0.1 (x-1)^2 + 0.2 * 0.25 + 0.05 * 1.0
    assert np.allclose(sup_cost(m, 1, x), [0.1 + 0.05 + 0.05, 0.1 + 0.05 + 0.05])


@pytest.mark.parametrize(
    "model, spec, R, h",
    [
        (lq_model(), lq_lyapunov(), 6.0, 0.05),
        (constant_cost_model(0.3), constant_cost_lyapunov(0.3), 5.0, 0.05),
        (tug_of_war_model(), game_lyapunov_1d(), 5.0, 0.05),
        (coupled_2d_model(), coupled_2d_lyapunov(), 4.0, 0.25),
    ],
)
def test_values_stay_below_the_cost_bound(model, spec, R, h):
    g = build_grid(model.dim, R, h)
    rep = check_lyapunov(model, spec, g)
    bound = cost_bound(model, spec, g, rep)
    for i in (1, 2):
        opp = MarkovStrategy.uniform(3 - i, g, model.n_actions(3 - i))
        sol = solve_semilinear_eigen(g, model, i, opp)
        assert sol.lam <= bound + 1e-6
        assert np.isfinite(psi_over_V(g, spec, sol.eigenpair.psi))


def test_psi_over_v_accepts_full_vectors():
    g = build_grid(1, 2.0, 0.5)
    spec = ou_lyapunov()
    full = np.ones(g.n_nodes)
    inner = np.ones(g.n_interior)
    assert psi_over_V(g, spec, full) == psi_over_V(g, spec, inner) == 1.0
