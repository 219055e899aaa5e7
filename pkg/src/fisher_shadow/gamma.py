"""Minimax quantities Gamma_p, Gamma_p^ob and the thresholds derived from them.

Optimized quantities carry an explicit bound direction.  A sup found by local
search is a lower bound on the true sup; a grid minimum is an upper bound on
the true inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import BudgetExhausted, SingularOutcome, UnsupportedDim
from .fisher import FisherInfo, block_diag_C1, fim, pinv_psd, schur_complement, schur_restriction
from .measurement import Povm, finite_haar_proxy, haar_random_states, standard_povms
from .operators import (
    ObservableSet,
    StateModel,
    build_dual_basis,
    maximally_mixed,
    mix_with_maximally_mixed,
    op_norm,
    random_density_matrix,
)
from .parallel import parallel_map

Variant = Literal["ob", "full"]
Domain = Literal["S_full_rank", "S_half"]

SIGN_ENUM_MAX = 20
N_ASCENT_STARTS = 32
RHO0_FLOOR = 1e-6

__all__ = [
    "Budget",
    "DualMin",
    "GammaReport",
    "QuadMax",
    "ThresholdReport",
    "catalog_povms",
    "compute_thresholds",
    "conjugate_index",
    "dual_min_over_p_sphere",
    "gamma_for_fixed",
    "inf_over_M",
    "lp_norm",
    "primed_duals",
    "quad_max_over_q_ball",
    "rho0_from_params",
    "s_half_grid",
    "sup_over_rho0",
    "threshold_a_max",
    "threshold_eta_bar",
    "threshold_eta_ob",
    "threshold_eta_ob_c",
]


def conjugate_index(p: float) -> float:
    """Hoelder conjugate with the limits ``1 <-> inf``."""
    p = float(p)
    if p < 1:
        raise ValueError("norm index must be >= 1")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


def lp_norm(x: np.ndarray, p: float) -> float:
    x = np.abs(np.asarray(x, dtype=float))
    if math.isinf(p):
        return float(x.max(initial=0.0))
    if p == 1:
        return float(x.sum())
    return float(np.sum(x**p) ** (1 / p))


def _sign_vectors(m: int, chunk: int = 1 << 14) -> Iterable[np.ndarray]:
    """All sign vectors with first entry +1, in chunks of rows."""
    total = 1 << (m - 1)
    bits = np.arange(m - 1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))[:, None]
        tail = 1 - 2 * ((idx >> bits) & 1)
        yield np.hstack([np.ones((len(idx), 1)), tail]).astype(float)


@dataclass(frozen=True)
class QuadMax:
    value: float
    alpha: np.ndarray
    method: str
    bound: str = "exact"


def _ascent(r: np.ndarray, q: float, rng: np.random.Generator, starts: int) -> tuple[float, np.ndarray]:
    """Conditional-gradient ascent of a convex quadratic on the q-ball.

    Each step moves to the q-ball point maximizing the linearization, which
    never decreases a convex objective.
    """
    m = r.shape[0]
    p = conjugate_index(q)
    best_val, best = -np.inf, np.zeros(m)
    for _ in range(starts):
        a = rng.normal(size=m)
        a /= lp_norm(a, q)
        val = a @ r @ a
        for _ in range(500):
            g = r @ a
            if not np.any(g):
                break
            if math.isinf(q):
                nxt = np.sign(g)
            elif q == 1:
                nxt = np.zeros(m)
                k = int(np.argmax(np.abs(g)))
                nxt[k] = np.sign(g[k])
            else:
                nxt = np.sign(g) * np.abs(g) ** (p - 1)
                nxt /= lp_norm(nxt, q)
            nv = nxt @ r @ nxt
            a, done = nxt, nv <= val * (1 + 1e-14)
            val = max(val, nv)
            if done:
                break
        if val > best_val:
            best_val, best = val, a
    return float(best_val), best


def quad_max_over_q_ball(r: np.ndarray, q: float, seed: int = 0) -> QuadMax:
    """``max_{||alpha||_q <= 1} alpha^T R alpha`` for symmetric PSD ``R``."""
    r = np.asarray(r, dtype=float)
    r = (r + r.T) / 2
    m = r.shape[0]
    q = float(q)
    if q == 2:
        ev, vec = np.linalg.eigh(r)
        return QuadMax(float(ev[-1]), vec[:, -1], "exact")
    if q == 1:
        k = int(np.argmax(np.diag(r)))
        return QuadMax(float(r[k, k]), np.eye(m)[k], "extreme-point")
    if math.isinf(q) and m <= SIGN_ENUM_MAX:
        best_val, best = -np.inf, None
        for signs in _sign_vectors(m):
            vals = np.einsum("ki,ij,kj->k", signs, r, signs)
            k = int(np.argmax(vals))
            if vals[k] > best_val:
                best_val, best = float(vals[k]), signs[k]
        return QuadMax(best_val, best, "extreme-point")
    val, alpha = _ascent(r, q, np.random.default_rng(seed), N_ASCENT_STARTS)
    return QuadMax(val, alpha, "multistart-ascent", "lower")


@dataclass(frozen=True)
class DualMin:
    value: float
    theta: np.ndarray
    phi: np.ndarray
    method: str
    bound: str = "exact"


def _min_fixed_coordinate(s: np.ndarray) -> tuple[float, np.ndarray]:
    """``min theta^T S theta`` subject to one coordinate equal to 1, over all coordinates."""
    m = s.shape[0]
    best_val, best = np.inf, None
    for a in range(m):
        rest = [i for i in range(m) if i != a]
        theta = np.zeros(m)
        theta[a] = 1.0
        if rest:
            sub = s[np.ix_(rest, rest)]
            theta[rest] = -pinv_psd(sub) @ s[rest, a]
        val = float(theta @ s @ theta)
        if val < best_val:
            best_val, best = val, theta
    return best_val, best


def _min_on_hyperplanes(s: np.ndarray) -> tuple[float, np.ndarray]:
    """``min theta^T S theta`` subject to ``sigma . theta = 1`` over sign vectors sigma.

    Each subproblem is solved through its bordered KKT system.
    """
    m = s.shape[0]
    rhs = np.zeros(m + 1)
    rhs[m] = 1.0
    best_val, best = np.inf, None
    for signs in _sign_vectors(m):
        kkt = np.zeros((len(signs), m + 1, m + 1))
        kkt[:, :m, :m] = 2 * s
        kkt[:, :m, m] = signs
        kkt[:, m, :m] = signs
        try:
            sol = np.linalg.solve(kkt, np.broadcast_to(rhs, (len(signs), m + 1))[..., None])[..., 0]
        except np.linalg.LinAlgError:
            sol = np.array([np.linalg.lstsq(k, rhs, rcond=None)[0] for k in kkt])
        thetas = sol[:, :m]
        vals = np.einsum("ki,ij,kj->k", thetas, s, thetas)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best = float(vals[k]), thetas[k]
    return best_val, best


def _descent(s: np.ndarray, p: float, rng: np.random.Generator, starts: int) -> tuple[float, np.ndarray]:
    m = s.shape[0]

    def f(x: np.ndarray) -> float:
        n = lp_norm(x, p)
        return float(x @ s @ x) / (n * n) if n > 0 else np.inf

    best_val, best = np.inf, None
    for _ in range(starts):
        res = minimize(f, rng.normal(size=m), method="Nelder-Mead" if m <= 3 else "BFGS")
        if res.fun < best_val:
            best_val, best = float(res.fun), res.x / lp_norm(res.x, p)
    return best_val, best


def dual_min_over_p_sphere(info: FisherInfo, p: float, seed: int = 0) -> DualMin:
    """``min_{||theta||_p >= 1, phi} (theta, phi)^T I (theta, phi)``.

    Minimizing over ``phi`` at fixed ``theta`` gives ``phi = C1 theta`` and
    leaves the Schur complement ``S``; the remaining problem is solved on the
    p-sphere.
    """
    s = schur_complement(info)
    c1 = block_diag_C1(info)
    m = s.shape[0]
    p = float(p)
    bound = "exact"
    if p == 2:
        ev, vec = np.linalg.eigh(s)
        val, theta, method = float(ev[0]), vec[:, 0], "exact"
    elif math.isinf(p):
        val, theta = _min_fixed_coordinate(s)
        method = "extreme-point"
    elif p == 1 and m <= SIGN_ENUM_MAX:
        val, theta = _min_on_hyperplanes(s)
        method = "extreme-point"
    else:
        val, theta = _descent(s, p, np.random.default_rng(seed), N_ASCENT_STARTS)
        method, bound = "multistart-descent", "upper"
    norm = lp_norm(theta, p)
    if norm > 0:
        theta = theta / norm
        val = float(theta @ s @ theta)
    return DualMin(val, theta, c1 @ theta, method, bound)


def gamma_for_fixed(model: StateModel, povm: Povm, p: float, variant: Variant = "ob") -> float:
    """Gamma at a fixed base state and measurement; ``inf`` if the Schur complement is singular."""
    rest = schur_restriction(fim(model, povm))
    return _gamma_from_restriction(rest.matrix, rest.full_rank, p, variant)


def _gamma_from_restriction(r: np.ndarray, full_rank: bool, p: float, variant: Variant) -> float:
    if not full_rank:
        return math.inf
    p = float(p)
    if variant == "full":
        s = np.clip(np.diag(r), 0, None)
        if math.isinf(p):
            return float(s.max())
        return float(np.sum(s ** (p / 2)) ** (2 / p))
    if variant == "ob":
        return quad_max_over_q_ball(r, conjugate_index(p)).value
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class Budget:
    """Evaluation limits for the nested searches."""

    max_evals: int = 4000
    restarts: int = 8
    outer_evals: int = 40
    strict: bool = False


@dataclass(frozen=True)
class GammaReport:
    value: float
    p: float
    variant: str
    witness_rho0: np.ndarray
    witness_povm: str
    method: str
    rho0_domain: str
    bound: str
    witness_alpha: np.ndarray | None = None
    witness_theta: np.ndarray | None = None
    evaluations: int = 0
    povm: Povm | None = field(default=None, repr=False, compare=False)
    candidates: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        from .serialization import op_to_json

        return {
            "value": self.value,
            "p": "inf" if math.isinf(self.p) else self.p,
            "variant": self.variant,
            "bound": self.bound,
            "method": self.method,
            "rho0_domain": self.rho0_domain,
            "witness_povm": self.witness_povm,
            "witness_rho0": op_to_json(self.witness_rho0),
            "witness_alpha": None if self.witness_alpha is None else list(map(float, self.witness_alpha)),
            "witness_theta": None if self.witness_theta is None else list(map(float, self.witness_theta)),
            "evaluations": self.evaluations,
            "candidates": self.candidates,
        }


def rho0_from_params(x: np.ndarray, d: int, domain: Domain) -> np.ndarray:
    """Map ``2 d^2`` reals to a full-rank state ``L L^dag / tr`` with an eigenvalue floor."""
    lmat = (x[: d * d] + 1j * x[d * d :]).reshape(d, d)
    rho = lmat @ lmat.conj().T
    tr = np.trace(rho).real
    rho = rho / tr if tr > 1e-300 else maximally_mixed(d)
    lam = np.linalg.eigvalsh(rho)[0]
    if lam < RHO0_FLOOR:
        t = (RHO0_FLOOR - lam) / (1 / d - lam)
        rho = (1 - t) * rho + t * maximally_mixed(d)
    if domain == "S_half":
        rho = mix_with_maximally_mixed(rho)
    return (rho + rho.conj().T) / 2


def _witnesses(model: StateModel, povm: Povm, p: float, variant: Variant):
    info = fim(model, povm)
    rest = schur_restriction(info)
    alpha = theta = None
    if rest.full_rank:
        alpha = quad_max_over_q_ball(rest.matrix, conjugate_index(p)).alpha
        theta = dual_min_over_p_sphere(info, p).theta
    return alpha, theta


def sup_over_rho0(
    obs: ObservableSet,
    povm: Povm,
    p: float,
    variant: Variant = "ob",
    domain: Domain = "S_full_rank",
    budget: Budget = Budget(),
    seed: int = 0,
) -> GammaReport:
    """Multi-start Nelder-Mead search for ``sup_rho0 Gamma(rho0, M)``; a lower bound."""
    d = obs.dim
    basis = build_dual_basis(obs)
    n_par = 2 * d * d
    per_start = max(1, budget.max_evals // budget.restarts)

    def value(x: np.ndarray) -> float:
        rho0 = rho0_from_params(x, d, domain)
        try:
            return gamma_for_fixed(StateModel(rho0, basis, obs), povm, p, variant)
        except SingularOutcome:
            return math.inf

    starts = [np.r_[np.eye(d).ravel(), np.zeros(d * d)]]
    seq = np.random.SeedSequence(seed)
    for child in seq.spawn(budget.restarts - 1):
        starts.append(np.random.default_rng(child).normal(size=n_par))

    def run(x0: np.ndarray):
        res = minimize(
            lambda x: -value(x),
            x0,
            method="Nelder-Mead",
            options={"maxfev": per_start, "xatol": 1e-6, "fatol": 1e-10, "adaptive": True},
        )
        return -float(res.fun), res.x, int(res.nfev), bool(res.success)

    results = parallel_map(run, starts)
    evals = sum(r[2] for r in results)
    best_k = max(range(len(results)), key=lambda k: (results[k][0], -k))
    best_val, best_x = results[best_k][0], results[best_k][1]
    rho0 = rho0_from_params(best_x, d, domain)
    model = StateModel(rho0, basis, obs)
    alpha, theta = _witnesses(model, povm, p, variant) if math.isfinite(best_val) else (None, None)
    report = GammaReport(
        value=best_val,
        p=float(p),
        variant=variant,
        witness_rho0=rho0,
        witness_povm=povm.name,
        method="multistart-nelder-mead",
        rho0_domain=domain,
        bound="lower",
        witness_alpha=alpha,
        witness_theta=theta,
        evaluations=evals,
        povm=povm,
    )
    if budget.strict and not any(r[3] for r in results):
        raise BudgetExhausted("no restart converged within the evaluation budget", report)
    return report


def catalog_povms(d: int, seed: int = 0, haar_factor: int = 50) -> list[Povm]:
    """Standard measurements available at dimension ``d`` plus a Haar proxy."""
    out = [standard_povms(d, "computational")]
    for kind in ("pauli_basis_uniform", "sic_d2", "mub_prime_d"):
        try:
            out.append(standard_povms(d, kind))
        except UnsupportedDim:
            continue
    out.append(finite_haar_proxy(d, haar_factor * d * d, seed))
    return out


def _isometry_povm(x: np.ndarray, d: int, k: int) -> Povm:
    z = (x[: k * d] + 1j * x[k * d :]).reshape(k, d)
    ev, u = np.linalg.eigh(z.conj().T @ z)
    v = z @ (u / np.sqrt(np.clip(ev, 1e-300, None))) @ u.conj().T
    w = v.conj()
    el = np.einsum("ka,kb->kab", w, w.conj())
    return Povm(el, d, name=f"isometry(K={k})")


def inf_over_M(
    obs: ObservableSet,
    p: float,
    variant: Variant = "ob",
    family: Literal["catalog", "parameterized"] = "catalog",
    budget: Budget = Budget(),
    seed: int = 0,
    domain: Domain = "S_full_rank",
    n_outcomes: int | None = None,
    catalog: Sequence[Povm] | None = None,
) -> GammaReport:
    """Search measurements for the smallest ``sup_rho0 Gamma``; reported as an upper bound."""
    d = obs.dim
    cands = list(catalog) if catalog is not None else catalog_povms(d, seed)
    best: GammaReport | None = None
    scores: dict[str, float] = {}
    evals = 0
    for povm in cands:
        rep = sup_over_rho0(obs, povm, p, variant, domain, budget, seed)
        evals += rep.evaluations
        scores[povm.name] = rep.value
        if best is None or rep.value < best.value:
            best = rep
    assert best is not None

    if family == "parameterized":
        k = n_outcomes or d * d
        inner = Budget(max(8, budget.max_evals // 8), max(1, budget.restarts // 2), budget.outer_evals)
        rng = np.random.default_rng(seed)

        def outer(x: np.ndarray) -> float:
            return sup_over_rho0(obs, _isometry_povm(x, d, k), p, variant, domain, inner, seed).value

        res = minimize(
            outer,
            rng.normal(size=2 * k * d),
            method="Nelder-Mead",
            options={"maxfev": budget.outer_evals, "adaptive": True},
        )
        evals += int(res.nfev)
        povm = _isometry_povm(res.x, d, k)
        rep = sup_over_rho0(obs, povm, p, variant, domain, budget, seed)
        scores[povm.name] = rep.value
        if rep.value < best.value:
            best = rep

    return GammaReport(
        value=best.value,
        p=float(p),
        variant=variant,
        witness_rho0=best.witness_rho0,
        witness_povm=best.witness_povm,
        method=f"{family}-search",
        rho0_domain=domain,
        bound="upper",
        witness_alpha=best.witness_alpha,
        witness_theta=best.witness_theta,
        evaluations=evals,
        povm=best.povm,
        candidates=scores,
    )


def s_half_grid(d: int, seed: int = 0, n_pure: int = 32, n_mixed: int = 32) -> list[np.ndarray]:
    """Deterministic sample of S_{1/2}: mixed images of pure, random mixed and maximally mixed states."""
    rng = np.random.default_rng(seed)
    sigmas = [np.outer(v, v.conj()) for v in haar_random_states(d, n_pure, rng)]
    sigmas += [random_density_matrix(d, seed=rng) for _ in range(n_mixed)]
    sigmas.append(maximally_mixed(d))
    return [mix_with_maximally_mixed(s) for s in sigmas]


def primed_duals(model: StateModel, povm: Povm) -> np.ndarray:
    """``Q' = Q + T C1`` with ``C1`` block-diagonalizing the FIM at ``model.rho0``."""
    if model.n_b == 0:
        return np.array(model.basis.q_ops)
    c1 = block_diag_C1(fim(model, povm))
    return model.basis.q_ops + np.einsum("ba,bxy->axy", c1, model.basis.t_ops)


def threshold_eta_ob(
    obs: ObservableSet, p: float, rho0_grid: Sequence[np.ndarray], m_star: Povm
) -> float:
    """Grid minimum of ``1 / (6 ||(||Q'_a||_inf)_a||_q)``; an upper bound on the infimum."""
    basis = build_dual_basis(obs)
    q = conjugate_index(p)
    vals = []
    for rho0 in rho0_grid:
        qp = primed_duals(StateModel(rho0, basis, obs), m_star)
        norms = np.array([op_norm(a) for a in qp])
        vals.append(1.0 / (6.0 * lp_norm(norms, q)))
    return float(min(vals))


def threshold_a_max(
    obs: ObservableSet, p: float, rho0_grid: Sequence[np.ndarray], m_star: Povm
) -> float:
    """Grid maximum of ``max_{||theta||_p = 1} theta^T G theta`` with ``G_ij = tr(Q'_i rho0^-1 Q'_j) / d^2``."""
    basis = build_dual_basis(obs)
    d = obs.dim
    best = 0.0
    for rho0 in rho0_grid:
        qp = primed_duals(StateModel(rho0, basis, obs), m_star)
        g = np.einsum("iab,bc,jca->ij", qp, np.linalg.inv(rho0), qp).real / d**2
        best = max(best, quad_max_over_q_ball(g, p).value)
    return float(best)


def threshold_eta_ob_c(a_max: float, gamma_ob: float, c: int) -> float:
    return float(min(1 / (3 * c * a_max * math.sqrt(gamma_ob)), 1 / (12 * c * math.sqrt(a_max))))


def threshold_eta_bar(gamma: float, d: int, m: int, variant: Variant = "full") -> float:
    """Upper-bound regime edge: ``sqrt(Gamma log m / d^3)`` or ``sqrt(Gamma^ob / d^3)``."""
    if variant == "ob":
        return math.sqrt(gamma / d**3)
    return math.sqrt(gamma * math.log(m) / d**3)


@dataclass(frozen=True)
class ThresholdReport:
    eta_ob: float
    eta_ob_c: float
    eta_bar: float
    eta_bar_ob: float
    a_max: float
    grid_size: int
    c: int
    p: float
    bounds: dict = field(
        default_factory=lambda: {
            "eta_ob": "upper",
            "a_max": "lower",
            "eta_ob_c": "estimate",
            "eta_bar": "estimate",
            "eta_bar_ob": "estimate",
        }
    )

    def to_dict(self) -> dict:
        return {
            "eta_ob": self.eta_ob,
            "eta_ob_c": self.eta_ob_c,
            "eta_bar": self.eta_bar,
            "eta_bar_ob": self.eta_bar_ob,
            "a_max": self.a_max,
            "grid_size": self.grid_size,
            "c": self.c,
            "p": "inf" if math.isinf(self.p) else self.p,
            "bounds": dict(self.bounds),
        }


def compute_thresholds(
    obs: ObservableSet,
    p: float,
    c: int,
    m_star: Povm,
    gamma_ob: float,
    gamma_full: float,
    grid: Sequence[np.ndarray] | None = None,
    seed: int = 0,
) -> ThresholdReport:
    grid = list(grid) if grid is not None else s_half_grid(obs.dim, seed)
    a_max = threshold_a_max(obs, p, grid, m_star)
    return ThresholdReport(
        eta_ob=threshold_eta_ob(obs, p, grid, m_star),
        eta_ob_c=threshold_eta_ob_c(a_max, gamma_ob, c),
        eta_bar=threshold_eta_bar(gamma_full, obs.dim, obs.m, "full"),
        eta_bar_ob=threshold_eta_bar(gamma_ob, obs.dim, obs.m, "ob"),
        a_max=a_max,
        grid_size=len(grid),
        c=c,
        p=float(p),
    )
