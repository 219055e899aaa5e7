"""Randomized suites for the exact identities of the Fisher-information machinery.

Each suite returns an :class:`IdentityResult` holding the worst deviation
seen over its instances.  Instances are generated deterministically from a
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimation import build_local_estimator, msem_exact
from .fisher import (
    FisherInfo,
    c_copy_domination_gap,
    c_copy_first_order_check,
    chi2_divergence,
    fim,
    schur_restriction,
)
from .gamma import conjugate_index, dual_min_over_p_sphere, gamma_for_fixed, quad_max_over_q_ball
from .measurement import outcome_probs, random_povm, reduce_c_copy
from .operators import (
    ObservableSet,
    StateModel,
    basis_transform,
    build_dual_basis,
    mix_with_maximally_mixed,
    parameterize,
    random_density_matrix,
)

__all__ = [
    "IdentityResult",
    "SUITES",
    "random_admissible_transform",
    "random_fisher_info",
    "random_model",
    "random_neighborhood_params",
    "random_observables",
    "run_suites",
]


@dataclass(frozen=True)
class IdentityResult:
    name: str
    anchor: str
    max_deviation: float
    tolerance: float
    instances: int

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "identity": self.name,
            "anchor": self.anchor,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "instances": self.instances,
            "passed": self.passed,
        }


def random_observables(d: int, m: int, rng: np.random.Generator) -> ObservableSet:
    """``m`` random traceless Hermitian observables (independent almost surely)."""
    g = rng.normal(size=(m, d, d)) + 1j * rng.normal(size=(m, d, d))
    h = g + g.conj().transpose(0, 2, 1)
    h -= np.einsum("kaa->k", h)[:, None, None] * np.eye(d) / d
    return ObservableSet(h)


def random_model(d: int, m: int | None, rng: np.random.Generator) -> StateModel:
    m = m if m is not None else int(rng.integers(1, d * d))
    obs = random_observables(d, m, rng)
    return StateModel(random_density_matrix(d, seed=rng), build_dual_basis(obs), obs)


def random_neighborhood_params(
    model: StateModel, rng: np.random.Generator, scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Random ``(theta, phi)`` with ``rho0 +- delta`` both PSD, so the point lies in the neighborhood."""
    v = rng.normal(size=model.n_a + model.n_b)
    delta = parameterize(model, v[: model.n_a], v[model.n_a :]) - model.rho0
    lam = np.linalg.eigvalsh(model.rho0)[0]
    t = scale * rng.uniform(0.05, 1.0) * lam / np.max(np.abs(np.linalg.eigvalsh(delta)))
    v = t * v
    return v[: model.n_a], v[model.n_a :]


def random_admissible_transform(
    n_a: int, n_b: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    c1 = rng.normal(size=(n_b, n_a))
    c2 = rng.normal(size=(n_b, n_b)) + 2 * np.eye(n_b)
    while n_b and np.linalg.cond(c2) > 1e3:
        c2 = rng.normal(size=(n_b, n_b)) + 2 * np.eye(n_b)
    return c1, c2


def random_fisher_info(n_a: int, n_b: int, rng: np.random.Generator) -> FisherInfo:
    n = n_a + n_b
    g = rng.normal(size=(n, n))
    return FisherInfo(g @ g.T + 0.1 * np.eye(n), n_a, n_b)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def suite_chi2(dims, instances, rng, convention="derivative") -> float:
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, None, rng)
        povm = random_povm(d, int(rng.integers(d, d * d + 3)), seed=rng)
        theta, phi = random_neighborhood_params(model, rng)
        v = np.concatenate([theta, phi])
        quad = v @ fim(model, povm, convention).matrix @ v
        worst = max(worst, _rel(chi2_divergence(povm, parameterize(model, theta, phi), model.rho0), quad))
    return worst


def suite_duality(dims, instances, rng, convention="derivative") -> float:
    worst = 0.0
    for k in range(instances):
        p = (2.0, math.inf, 1.0)[k % 3]
        n_a = int(rng.integers(1, 11 if p == 1.0 else 13))
        n_b = int(rng.integers(0, 16 - n_a))
        info = random_fisher_info(n_a, n_b, rng)
        low = dual_min_over_p_sphere(info, p).value
        high = quad_max_over_q_ball(schur_restriction(info).matrix, conjugate_index(p)).value
        worst = max(worst, abs(low * high - 1.0))
    return worst


def suite_basis_invariance(dims, instances, rng, convention="derivative", transforms: int = 5) -> float:
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, int(rng.integers(1, d * d - 1)), rng)
        povm = random_povm(d, d * d + 2, seed=rng)
        ref = schur_restriction(fim(model, povm)).matrix
        for _ in range(transforms):
            c1, c2 = random_admissible_transform(model.n_a, model.n_b, rng)
            moved = model.with_basis(basis_transform(model.basis, c1, c2))
            new = schur_restriction(fim(moved, povm)).matrix
            worst = max(worst, float(np.max(np.abs(new - ref)) / max(1.0, np.max(np.abs(ref)))))
    return worst


def suite_c_to_1(dims, instances, rng, convention="derivative") -> float:
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, None, rng)
        povm = random_povm(d, int(rng.integers(2, 6)), copies=2, seed=rng)
        theta, phi = random_neighborhood_params(model, rng)
        lhs, rhs = c_copy_first_order_check(povm, model, theta, phi)
        if convention != "derivative":
            v = np.concatenate([theta, phi])
            rhs = float(v @ fim(model, reduce_c_copy(povm, model.rho0), convention).matrix @ v)
        worst = max(worst, _rel(lhs, rhs))
    return worst


def suite_c_copy_domination(dims, instances, rng, convention="derivative") -> float:
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, None, rng)
        povm = random_povm(d, int(rng.integers(2, 6)), copies=2, seed=rng)
        worst = max(worst, -c_copy_domination_gap(povm, model))
    return max(worst, 0.0)


def suite_simple_relation(dims, instances, rng, convention="derivative") -> float:
    """Worst of ``Gamma^ob_p - Gamma_p`` (must be <= 0) and ``|Gamma^ob_inf - Gamma_inf|``."""
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, int(rng.integers(1, min(d * d, 9))), rng)
        povm = random_povm(d, d * d + 1, seed=rng)
        p = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
        gap = gamma_for_fixed(model, povm, p, "ob") - gamma_for_fixed(model, povm, p, "full")
        eq = _rel(gamma_for_fixed(model, povm, math.inf, "ob"), gamma_for_fixed(model, povm, math.inf, "full"))
        worst = max(worst, gap / max(1.0, gamma_for_fixed(model, povm, p, "full")), eq)
    return max(worst, 0.0)


def suite_mixing_bound(dims, instances, rng, convention="derivative") -> float:
    """Largest eigenvalue of ``I(sigma/2 + I/2d) - 2 I(sigma)``, normalized; must be <= 0."""
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, None, rng)
        povm = random_povm(d, d * d, seed=rng)
        base = fim(model, povm).matrix
        mixed = fim(model.with_rho0(mix_with_maximally_mixed(model.rho0)), povm).matrix
        top = np.linalg.eigvalsh(mixed - 2 * base)[-1]
        worst = max(worst, top / max(1.0, np.abs(base).max()))
    return max(worst, 0.0)


def suite_local_estimator(dims, instances, rng, convention="derivative", points: int = 10) -> float:
    """Deviations are scaled by ``max(1, max |(I^-1)_AA|)``."""
    worst = 0.0
    for k in range(instances):
        d = dims[k % len(dims)]
        model = random_model(d, None, rng)
        povm = random_povm(d, d * d + 2, seed=rng)
        est = build_local_estimator(model, povm)
        restr = schur_restriction(fim(model, povm)).matrix
        scale = max(1.0, float(np.abs(restr).max()))
        worst = max(worst, float(np.max(np.abs(msem_exact(est, model.rho0) - restr))) / scale)
        for _ in range(points):
            theta, phi = random_neighborhood_params(model, rng)
            rho = parameterize(model, theta, phi)
            mean = est.gamma_coeffs @ outcome_probs(povm, rho)
            worst = max(worst, float(np.max(np.abs(mean - theta))) / scale)
            gap = np.linalg.eigvalsh(2 * restr - msem_exact(est, rho))[0]
            worst = max(worst, -float(gap) / scale)
    return max(worst, 0.0)


SUITES: dict[str, tuple[str, Callable, float]] = {
    "chi2_exactness": ("chi-square of a linear family equals its FIM quadratic form", suite_chi2, 1e-8),
    "duality": ("min over the p-sphere times max over the q-ball equals one", suite_duality, 1e-6),
    "basis_invariance": ("Schur restriction is invariant under (Q+TC1, TC2)", suite_basis_invariance, 1e-8),
    "c_to_1": ("c-copy first-order functional equals the reduced single-copy FIM", suite_c_to_1, 1e-8),
    "c_copy_domination": ("I(rho0^c, M) <= c^2 I(rho0, G)", suite_c_copy_domination, 1e-8),
    "simple_relation": ("Gamma^ob_p <= Gamma_p with equality at p = inf", suite_simple_relation, 1e-8),
    "mixing_bound": ("I(sigma/2 + I/2d, M) <= 2 I(sigma, M)", suite_mixing_bound, 1e-8),
    "local_estimator": ("locally optimal estimator: unbiased, MSEM <= 2 (I^-1)_AA", suite_local_estimator, 1e-8),
}


def run_suites(
    dims=(2, 3),
    instances: int = 20,
    seed: int = 0,
    convention: str = "derivative",
    names=None,
) -> list[IdentityResult]:
    out = []
    for k, name in enumerate(names or SUITES):
        anchor, fn, tol = SUITES[name]
        rng = np.random.default_rng([seed, k])
        dev = float(fn(list(dims), instances, rng, convention=convention))
        out.append(IdentityResult(name, anchor, dev, tol, instances))
    return out
