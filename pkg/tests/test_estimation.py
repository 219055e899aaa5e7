import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisher_shadow.errors import CountMismatch, InvalidAlpha, SingularFim
from fisher_shadow.estimation import (
    ShadowConfig,
    build_local_estimator,
    calibrated_batches,
    coarse_tomography,
    default_k,
    distinguish,
    measure,
    mom_coordinatewise,
    msem_exact,
    regularize_estimate,
    run_oblivious,
    run_shadow_tomography,
)
from fisher_shadow.fisher import fim, schur_restriction
from fisher_shadow.gamma import gamma_for_fixed
from fisher_shadow.identities import random_model, random_neighborhood_params
from fisher_shadow.measurement import (
    outcome_probs,
    random_povm,
    sample_haar_measurement_outcomes,
    sample_outcomes,
    standard_povms,
)
from fisher_shadow.operators import (
    ObservableSet,
    StateModel,
    in_neighborhood,
    maximally_mixed,
    mix_with_maximally_mixed,
    parameterize,
    random_density_matrix,
)

from helpers import bloch_state, z_model

PAULIS = ObservableSet.pauli(1)
PAULI_POVM = standard_povms(2, "pauli_basis_uniform")
COMP = standard_povms(2, "computational")


def test_local_estimator_hand_values():
    est = build_local_estimator(z_model(), COMP)
    assert np.allclose(est.gamma_coeffs, [[1.0, -1.0]])


@pytest.mark.parametrize("theta", [0.0, 0.3, -0.7])
def test_msem_single_z(theta):
    model = z_model()
    est = build_local_estimator(model, COMP)
    assert msem_exact(est, parameterize(model, [theta]))[0, 0] == pytest.approx(1 - theta**2)


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_local_estimator_unbiased_and_bounded(seed, d):
    rng = np.random.default_rng(seed)
    model = random_model(d, None, rng)
    povm = random_povm(d, d * d + 2, seed=rng)
    est = build_local_estimator(model, povm)
    restr = schur_restriction(fim(model, povm)).matrix
    scale = max(1.0, np.abs(restr).max())
    assert np.abs(msem_exact(est, model.rho0) - restr).max() <= 1e-9 * scale
    for _ in range(5):
        theta, phi = random_neighborhood_params(model, rng)
        rho = parameterize(model, theta, phi)
        assert np.abs(est.gamma_coeffs @ outcome_probs(povm, rho) - theta).max() <= 1e-10 * scale
        assert np.linalg.eigvalsh(2 * restr - msem_exact(est, rho))[0] >= -1e-9 * scale


def test_local_estimator_rejects_unidentifiable_targets():
    model = StateModel.canonical(maximally_mixed(2), PAULIS)
    with pytest.raises(SingularFim):
        build_local_estimator(model, COMP)


def test_coarse_single_sample():
    assert np.allclose(coarse_tomography(np.array([[1.0, 0.0]]), 2), np.diag([2.0, -1.0]))


def test_coarse_tomography_unbiased():
    rho = random_density_matrix(2, seed=8)
    raw = coarse_tomography(sample_haar_measurement_outcomes(rho, 50000, seed=9), 2)
    assert np.abs(raw - rho).max() <= 0.02


def test_regularized_estimate_is_full_rank_state():
    out = regularize_estimate(np.diag([1.2, -0.2]))
    assert np.trace(out).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(out)[0] >= 1e-3 / 2 - 1e-12


def test_tomography_accuracy_in_s_half():
    rho = mix_with_maximally_mixed(bloch_state([0.3, -0.5, 0.6]))
    hits = 0
    for seed in range(100):
        raw = coarse_tomography(sample_haar_measurement_outcomes(rho, 4000, seed=seed), 2)
        if np.abs(np.linalg.eigvalsh(raw - rho)).max() <= 1 / 8:
            hits += 1
            assert in_neighborhood(rho, regularize_estimate(raw))
    assert hits >= 90


def test_mom_examples():
    assert mom_coordinatewise(np.full((6, 2), 0.25), 3, 2) == pytest.approx([0.25, 0.25])
    assert mom_coordinatewise(np.array([0.0, 1.0, 100.0]), 3, 1) == 1.0
    assert mom_coordinatewise(np.array([0.0, 1.0, 5.0, 100.0]), 4, 1) == 1.0
    with pytest.raises(CountMismatch):
        mom_coordinatewise(np.zeros(5), 2, 2)


def test_mom_gaussian_concentration():
    rng = np.random.default_rng(2024)
    m, sigma, eps = 4, 1.0, 0.2
    k = math.ceil(8 * math.log(m / 0.1))
    b = math.ceil(4 * sigma**2 / eps**2)
    mu = rng.normal(size=m)
    ok = 0
    for _ in range(200):
        out = mom_coordinatewise(mu + sigma * rng.normal(size=(k * b, m)), k, b)
        ok += np.abs(out - mu).max() <= 2 * sigma / math.sqrt(b)
    assert ok >= 180


def test_batch_sizes():
    assert default_k(3, 0.1) == math.ceil(8 * math.log(30))
    assert calibrated_batches(3.0, 0.1, 2.0) == 600


def test_unmixing_factor_two_is_exact():
    rho = random_density_matrix(4, seed=1)
    obs = ObservableSet.pauli(2)
    assert np.allclose(2 * obs.expectations(mix_with_maximally_mixed(rho)), obs.expectations(rho))


def _config(rho, eps, seed, b=None):
    b = b or calibrated_batches(3.0, eps)
    return ShadowConfig(PAULIS, rho, PAULI_POVM, math.inf, eps, 0.1, 4000, None, None, b, seed)


def test_maximally_mixed_input():
    runs = [run_shadow_tomography(_config(maximally_mixed(2), 0.1, s)) for s in range(100)]
    assert sum(r.success for r in runs) >= 90
    assert all(np.abs(r.estimates).max() <= 0.2 for r in runs)


def test_bloch_state_success_rate():
    rho = bloch_state([0.2, -0.1, 0.4])
    runs = [run_shadow_tomography(_config(rho, 0.05, s)) for s in range(100)]
    assert sum(r.success for r in runs) >= 90
    assert runs[0].samples_used[1] == runs[0].samples_used[2] * runs[0].samples_used[3]


def test_pipeline_is_deterministic():
    rho = bloch_state([0.2, -0.1, 0.4])
    a = run_shadow_tomography(_config(rho, 0.1, 17))
    b = run_shadow_tomography(_config(rho, 0.1, 17))
    assert np.array_equal(a.estimates, b.estimates) and a.to_dict() == b.to_dict()


def test_oblivious_one_hot_matches_coordinate_shots():
    rho = bloch_state([0.2, -0.1, 0.4])
    cfg = _config(rho, 0.1, 3)
    record = measure(cfg)
    for i in range(3):
        alpha = np.eye(3)[i]
        rep = run_oblivious(cfg, alpha, record)
        k, b = rep.samples_used[2], rep.samples_used[3]
        theta = mom_coordinatewise(record.shots[: k * b, i], k, b)
        assert rep.estimates[0] == pytest.approx(2 * (theta + PAULIS.expectations(record.rho0)[i]))
        # per-shot coefficients are exactly unbiased for the mixed input
        sigma = mix_with_maximally_mixed(rho)
        mean = record.estimator.gamma_coeffs[i] @ outcome_probs(PAULI_POVM, sigma)
        assert mean == pytest.approx(PAULIS.expectations(sigma - record.rho0)[i], abs=1e-10)


def test_oblivious_uniform_alpha_success():
    rho = bloch_state([0.2, -0.1, 0.4])
    alpha = np.full(3, 1 / 3)
    runs = [run_oblivious(_config(rho, 0.1, s), alpha) for s in range(100)]
    assert sum(r.success for r in runs) >= 90


def test_oblivious_variance_bound(rng):
    model = random_model(2, 3, rng)
    povm = random_povm(2, 6, seed=rng)
    est = build_local_estimator(model, povm)
    restr = schur_restriction(fim(model, povm)).matrix
    for _ in range(10):
        alpha = rng.normal(size=3)
        theta, phi = random_neighborhood_params(model, rng)
        rho = parameterize(model, theta, phi)
        var = alpha @ msem_exact(est, rho) @ alpha
        assert var <= 2 * alpha @ restr @ alpha + 1e-9


def test_oblivious_rejects_long_alpha():
    cfg = _config(maximally_mixed(2), 0.1, 0)
    with pytest.raises(InvalidAlpha):
        run_oblivious(cfg, np.ones(3))
    with pytest.raises(InvalidAlpha):
        run_oblivious(cfg, np.ones(2) / 2)


def test_distinguish_rule():
    assert distinguish(np.zeros(3), 0.1, math.inf) == "null"
    eps = 0.1
    assert distinguish(np.array([1.5 * eps, 0.0]), eps, math.inf) == "alternative"
    assert distinguish(np.array([np.nextafter(1.5 * eps, 0), 0.0]), eps, math.inf) == "null"
    assert distinguish(np.array([3 * eps, 0.0, 0.0]), eps, 2.0) == "alternative"


def test_distinguish_planted_alternative():
    eps, delta = 0.05, 0.1
    model = StateModel.canonical(maximally_mixed(2), PAULIS)
    est = build_local_estimator(model, PAULI_POVM)
    k = default_k(3, delta)
    b = calibrated_batches(gamma_for_fixed(model, PAULI_POVM, math.inf, "ob"), eps)
    hypotheses = {"null": model.rho0, "alternative": parameterize(model, [3 * eps, 0.0, 0.0])}
    rng = np.random.default_rng(77)
    for truth, rho in hypotheses.items():
        right = 0
        for _ in range(100):
            shots = est.estimates(sample_outcomes(PAULI_POVM, rho, k * b, rng).indices)
            right += distinguish(mom_coordinatewise(shots, k, b), eps, math.inf) == truth
        assert right >= 90
