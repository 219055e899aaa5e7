import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisher_shadow.errors import BudgetExhausted
from fisher_shadow.fisher import FisherInfo, block_diag_C1, schur_restriction, transform_fim
from fisher_shadow.gamma import (
    Budget,
    conjugate_index,
    dual_min_over_p_sphere,
    gamma_for_fixed,
    inf_over_M,
    lp_norm,
    quad_max_over_q_ball,
    s_half_grid,
    sup_over_rho0,
    threshold_a_max,
    threshold_eta_bar,
    threshold_eta_ob,
    threshold_eta_ob_c,
)
from fisher_shadow.identities import random_admissible_transform, random_fisher_info, random_model
from fisher_shadow.measurement import random_povm, standard_povms
from fisher_shadow.operators import ObservableSet, StateModel, maximally_mixed

from helpers import z_model

SMALL = Budget(max_evals=120, restarts=2)


def test_conjugate_index():
    assert conjugate_index(1.0) == math.inf
    assert conjugate_index(math.inf) == 1.0
    assert conjugate_index(2.0) == 2.0
    assert conjugate_index(3.0) == pytest.approx(1.5)


@pytest.mark.parametrize(
    "r, q, value, alpha",
    [
        (np.diag([1.0, 4.0]), 1.0, 4.0, [0, 1]),
        (np.diag([1.0, 4.0]), 2.0, 4.0, [0, 1]),
        (np.diag([1.0, 0.25]), math.inf, 1.25, [1, 1]),
    ],
)
def test_quad_max_examples(r, q, value, alpha):
    res = quad_max_over_q_ball(r, q)
    assert res.value == pytest.approx(value, abs=1e-12)
    assert np.allclose(np.abs(res.alpha), alpha, atol=1e-9)
    assert res.bound == "exact"


def test_quad_max_general_q_is_lower_bound(rng):
    g = rng.normal(size=(4, 4))
    r = g @ g.T
    res = quad_max_over_q_ball(r, 3.0, seed=1)
    assert res.bound == "lower"
    assert lp_norm(res.alpha, 3.0) <= 1 + 1e-9
    assert res.value == pytest.approx(res.alpha @ r @ res.alpha, rel=1e-9)
    # q = 3 ball sits between the 2-ball and the inf-ball
    assert quad_max_over_q_ball(r, 2.0).value - 1e-9 <= res.value <= quad_max_over_q_ball(r, math.inf).value + 1e-9


def test_dual_min_diagonal():
    info = FisherInfo(np.diag([3.0, 0.7]), 2, 0)
    assert dual_min_over_p_sphere(info, 2.0).value == pytest.approx(0.7)


def _brute_l1_sphere_min(s: np.ndarray, n: int = 200001) -> float:
    # Independent oracle for m = 2: scan the four edges of the l1 unit sphere.
    t = np.linspace(-1, 1, n)
    best = math.inf
    for sign in (1.0, -1.0):
        th = np.stack([t, sign * (1 - np.abs(t))], axis=1)
        best = min(best, float(np.min(np.einsum("ki,ij,kj->k", th, s, th))))
    return best


@pytest.mark.parametrize("seed", range(5))
def test_dual_min_p1_against_grid_scan(seed):
    info = random_fisher_info(2, 2, np.random.default_rng(seed))
    res = dual_min_over_p_sphere(info, 1.0)
    s = schur_restriction(info).complement
    assert res.value == pytest.approx(_brute_l1_sphere_min(s), rel=1e-6)
    assert lp_norm(res.theta, 1.0) == pytest.approx(1.0)
    v = np.concatenate([res.theta, res.phi])
    assert v @ info.matrix @ v == pytest.approx(res.value, rel=1e-9)


def test_dual_min_general_p_is_upper_bound(rng):
    info = random_fisher_info(3, 2, rng)
    res = dual_min_over_p_sphere(info, 3.0, seed=0)
    assert res.bound == "upper"
    high = quad_max_over_q_ball(schur_restriction(info).matrix, 1.5, seed=0).value
    assert res.value * high == pytest.approx(1.0, rel=1e-3)


@given(st.integers(0, 2**32 - 1), st.sampled_from([(2.0, 2.0), (math.inf, 1.0), (1.0, math.inf)]))
def test_duality_product(seed, pq):
    rng = np.random.default_rng(seed)
    p, q = pq
    na = int(rng.integers(1, 9))
    info = random_fisher_info(na, int(rng.integers(0, 6)), rng)
    low = dual_min_over_p_sphere(info, p).value
    high = quad_max_over_q_ball(schur_restriction(info).matrix, q).value
    assert low * high == pytest.approx(1.0, abs=1e-6)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0, math.inf]))
def test_dual_min_invariant_under_basis_change(seed, p):
    rng = np.random.default_rng(seed)
    info = random_fisher_info(3, 3, rng)
    c1, c2 = random_admissible_transform(3, 3, rng)
    moved = transform_fim(info, c1, c2)
    assert dual_min_over_p_sphere(moved, p).value == pytest.approx(
        dual_min_over_p_sphere(info, p).value, rel=1e-7
    )


def test_dual_witness_phi_is_optimal_nuisance(rng):
    info = random_fisher_info(2, 3, rng)
    res = dual_min_over_p_sphere(info, 2.0)
    assert np.allclose(res.phi, block_diag_C1(info) @ res.theta)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, math.inf])
@pytest.mark.parametrize("variant", ["ob", "full"])
def test_gamma_single_z_computational(p, variant):
    assert gamma_for_fixed(z_model(), standard_povms(2, "computational"), p, variant) == pytest.approx(1.0)


def test_gamma_infinite_when_unidentifiable():
    obs = ObservableSet.pauli(1)
    model = StateModel.canonical(maximally_mixed(2), obs)
    assert gamma_for_fixed(model, standard_povms(2, "computational"), 2.0) == math.inf


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_simple_relation(seed, d):
    rng = np.random.default_rng(seed)
    model = random_model(d, int(rng.integers(1, min(d * d, 6))), rng)
    povm = random_povm(d, d * d + 1, seed=rng)
    for p in (1.0, 1.5, 2.0, 4.0):
        assert gamma_for_fixed(model, povm, p, "ob") <= gamma_for_fixed(model, povm, p, "full") * (1 + 1e-10)
    full, ob = gamma_for_fixed(model, povm, math.inf, "full"), gamma_for_fixed(model, povm, math.inf, "ob")
    assert ob == pytest.approx(full, rel=1e-10)


def test_sup_over_rho0_dominates_start_and_is_deterministic():
    obs = ObservableSet.pauli(1)
    sic = standard_povms(2, "sic_d2")
    at_center = gamma_for_fixed(StateModel.canonical(maximally_mixed(2), obs), sic, 2.0)
    rep = sup_over_rho0(obs, sic, 2.0, budget=SMALL, seed=4)
    assert rep.value >= at_center - 1e-12
    assert rep.bound == "lower"
    again = sup_over_rho0(obs, sic, 2.0, budget=SMALL, seed=4)
    assert again.value == rep.value and np.array_equal(again.witness_rho0, rep.witness_rho0)


def test_s_half_domain_within_mixing_bound():
    obs = ObservableSet.pauli(1, ["Z", "X"])
    povm = standard_povms(2, "sic_d2")
    half = sup_over_rho0(obs, povm, 2.0, domain="S_half", budget=SMALL).value
    full = sup_over_rho0(obs, povm, 2.0, domain="S_full_rank", budget=SMALL).value
    assert half <= 2 * full + 1e-6


def test_strict_budget_raises():
    obs = ObservableSet.pauli(1)
    with pytest.raises(BudgetExhausted) as info:
        sup_over_rho0(obs, standard_povms(2, "sic_d2"), 2.0, budget=Budget(4, 2, strict=True))
    assert info.value.best is not None and math.isfinite(info.value.best.value)


def test_inf_over_catalog_pauli():
    obs = ObservableSet.pauli(1)
    rep = inf_over_M(obs, math.inf, "ob", budget=SMALL)
    assert "computational" in rep.candidates
    assert rep.value <= rep.candidates["computational"]
    assert rep.bound == "upper"
    assert 2 / 3 <= rep.value <= 6


def test_parameterized_search_never_worse_than_catalog():
    obs = ObservableSet.pauli(1, ["Z"])
    budget = Budget(max_evals=60, restarts=2, outer_evals=6)
    cat = inf_over_M(obs, 2.0, "ob", "catalog", budget)
    par = inf_over_M(obs, 2.0, "ob", "parameterized", budget)
    assert par.value <= cat.value + 1e-12


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 4.0, math.inf])
def test_eta_ob_pauli_closed_form(n, p):
    d = 2**n
    obs = ObservableSet.pauli(n)
    grid = s_half_grid(d, seed=0, n_pure=4, n_mixed=4)
    q = conjugate_index(p)
    expect = (1 / 6) * (d * d - 1) ** (-1 / q) if math.isfinite(q) else 1 / 6
    assert threshold_eta_ob(obs, p, grid, standard_povms(d, "pauli_basis_uniform")) == pytest.approx(expect, abs=1e-12)


def test_eta_ob_single_qubit_inf():
    obs = ObservableSet.pauli(1)
    grid = s_half_grid(2, seed=0)
    assert threshold_eta_ob(obs, math.inf, grid, standard_povms(2, "sic_d2")) == pytest.approx(1 / 18, abs=1e-15)


@pytest.mark.parametrize("p", [1.0, 1.5])
def test_a_max_bound_below_two(p):
    obs = ObservableSet.pauli(1)
    grid = s_half_grid(2, seed=0)
    assert threshold_a_max(obs, p, grid, standard_povms(2, "pauli_basis_uniform")) <= 2 + 1e-9


def test_threshold_formulas():
    assert threshold_eta_bar(2.0, 2, 3, "ob") == pytest.approx(0.5)
    assert threshold_eta_bar(2.0, 2, 3, "full") == pytest.approx(math.sqrt(2 * math.log(3) / 8))
    assert threshold_eta_ob_c(4.0, 9.0, 2) == pytest.approx(min(1 / (6 * 4 * 3), 1 / (24 * 2)))
