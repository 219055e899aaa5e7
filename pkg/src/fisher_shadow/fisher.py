"""Fisher information of POVM statistics for the linear state family.

Index order everywhere is ``(A, B)``: the ``m`` target directions ``Q_a``
followed by the nuisance directions ``T_b``.  The derivative of an outcome
probability along direction ``R_c`` is ``tr(M_x R_c) / d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from .errors import InvalidTree, SingularOutcome, SupportViolation
from .measurement import Povm, mixed_reduction, outcome_probs, partial_reduce, reduce_c_copy
from .operators import StateModel, parameterize

ZERO_PROB = 1e-14
ZERO_SCORE = 1e-12
PINV_RCOND = 1e-10

Convention = Literal["derivative", "d2_scaled"]

__all__ = [
    "AdaptiveNode",
    "FisherInfo",
    "SchurRestriction",
    "adaptive_fim",
    "block_diag_C1",
    "c_copy_domination_check",
    "c_copy_domination_gap",
    "c_copy_first_order_check",
    "chi2_divergence",
    "fim",
    "fim_from_scores",
    "fim_multi_copy",
    "flatten_adaptive",
    "pinv_psd",
    "schur_complement",
    "schur_restriction",
    "transform_fim",
]


def pinv_psd(a: np.ndarray) -> np.ndarray:
    """Pseudoinverse dropping singular values below ``1e-10 * sigma_max``."""
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    return np.linalg.pinv(a, rcond=PINV_RCOND, hermitian=True)


@dataclass(frozen=True)
class FisherInfo:
    """FIM in ``(A, B)`` block order.

    ``factor`` optionally holds a square root ``F`` with ``matrix = F^T F``
    (one row per live outcome).  When present, the Schur complement is
    computed from it by orthogonal projection, which is far less sensitive
    to an ill-conditioned nuisance block.
    """

    matrix: np.ndarray
    n_a: int
    n_b: int
    base: Mapping[str, object] = field(default_factory=dict, compare=False, repr=False)
    factor: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=float)
        n = self.n_a + self.n_b
        if mat.shape != (n, n):
            raise ValueError(f"FIM must be {n}x{n}, got {mat.shape}")
        mat = (mat + mat.T) / 2
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if self.factor is not None:
            f = np.array(self.factor, dtype=float)
            if f.ndim != 2 or f.shape[1] != n:
                raise ValueError(f"factor must have {n} columns")
            f.setflags(write=False)
            object.__setattr__(self, "factor", f)

    @property
    def aa(self) -> np.ndarray:
        return self.matrix[: self.n_a, : self.n_a]

    @property
    def ab(self) -> np.ndarray:
        return self.matrix[: self.n_a, self.n_a :]

    @property
    def bb(self) -> np.ndarray:
        return self.matrix[self.n_a :, self.n_a :]


@dataclass(frozen=True)
class SchurRestriction:
    """``(I^{-1})_AA`` computed as the (pseudo)inverse of the Schur complement."""

    matrix: np.ndarray
    support_rank: int
    complement: np.ndarray

    @property
    def full_rank(self) -> bool:
        return self.support_rank == self.matrix.shape[0]


def _scores(elements: np.ndarray, ops: np.ndarray) -> np.ndarray:
    return np.einsum("xab,cba->xc", elements, ops).real


def fim_from_scores(
    probs: np.ndarray, dscores: np.ndarray, n_a: int, base: Mapping[str, object] | None = None
) -> FisherInfo:
    """``sum_x g_x g_x^T / p_x`` from probabilities and probability derivatives ``g``."""
    probs = np.asarray(probs, dtype=float)
    dscores = np.asarray(dscores, dtype=float)
    dead = probs <= ZERO_PROB
    if np.any(np.abs(dscores[dead]) > ZERO_SCORE):
        raise SingularOutcome("an outcome with zero probability has a nonzero score")
    root = dscores[~dead] / np.sqrt(probs[~dead, None])
    return FisherInfo(root.T @ root, n_a, dscores.shape[1] - n_a, dict(base or {}), root)


def fim(model: StateModel, povm: Povm, convention: Convention = "derivative") -> FisherInfo:
    """FIM of ``povm`` at the model origin, ``I_cc' = sum_x tr(M_x R_c) tr(M_x R_c') / (d^2 p_x)``.

    ``convention="d2_scaled"`` drops the ``1/d^2``; it exists as a negative
    control and breaks the chi-square identity.
    """
    if povm.copies != 1:
        return fim_multi_copy(model, povm, convention)
    d = model.dim
    probs = outcome_probs(povm, model.rho0)
    dscores = _scores(povm.elements, model.basis.all_ops) / d
    if convention == "d2_scaled":
        dscores = dscores * d
    elif convention != "derivative":
        raise ValueError(f"unknown convention {convention!r}")
    return fim_from_scores(probs, dscores, model.n_a, {"povm": povm.name, "copies": 1})


def fim_multi_copy(model: StateModel, povm: Povm, convention: Convention = "derivative") -> FisherInfo:
    """FIM of a joint ``c``-copy POVM on ``rho_{theta,phi}^{x c}`` at the origin."""
    d, c = model.dim, povm.copies
    ops = model.basis.all_ops
    reduced = [partial_reduce(povm.elements, model.rho0, d, c, i) for i in range(c)]
    probs = np.einsum("sab,ba->s", reduced[0], model.rho0).real
    probs = np.where(probs < 0, 0.0, probs)
    dscores = sum(_scores(g, ops) for g in reduced) / d
    if convention == "d2_scaled":
        dscores = dscores * d
    return fim_from_scores(probs, dscores, model.n_a, {"povm": povm.name, "copies": c})


def schur_complement(info: FisherInfo) -> np.ndarray:
    """``I_AA - I_AB I_BB^+ I_BA``.

    With a square-root factor ``F = [F_A, F_B]`` this is ``R^T R`` where
    ``R`` is ``F_A`` with its projection on the range of ``F_B`` removed.
    Singular values of ``F_B`` below ``sqrt(rcond)`` of the largest are
    dropped, matching the ``rcond`` cut of the pseudoinverse on ``I_BB``.
    """
    na = info.n_a
    if info.n_b == 0:
        s = info.aa.copy()
    elif info.factor is not None:
        f_a, f_b = info.factor[:, :na], info.factor[:, na:]
        u, sv, _ = np.linalg.svd(f_b, full_matrices=False)
        keep = sv > np.sqrt(PINV_RCOND) * sv[0] if sv.size and sv[0] > 0 else np.zeros(sv.size, bool)
        u = u[:, keep]
        r = f_a - u @ (u.T @ f_a)
        s = r.T @ r
    else:
        s = info.aa - info.ab @ pinv_psd(info.bb) @ info.ab.T
    return (s + s.T) / 2


def schur_restriction(info: FisherInfo) -> SchurRestriction:
    s = schur_complement(info)
    rank = int(np.linalg.matrix_rank(s, tol=PINV_RCOND * max(np.abs(s).max(), 1e-300), hermitian=True))
    r = pinv_psd(s)
    return SchurRestriction((r + r.T) / 2, rank, s)


def block_diag_C1(info: FisherInfo) -> np.ndarray:
    """``C1 = -I_BB^+ I_BA``, shape ``(|B|, |A|)``; zeroes the off-diagonal block."""
    if info.n_b == 0:
        return np.zeros((0, info.n_a))
    return -pinv_psd(info.bb) @ info.ab.T


def transform_fim(info: FisherInfo, c1: np.ndarray, c2: np.ndarray) -> FisherInfo:
    """FIM in the basis ``(Q + T C1, T C2)``, by congruence."""
    na, nb = info.n_a, info.n_b
    jac = np.zeros((na + nb, na + nb))
    jac[:na, :na] = np.eye(na)
    jac[na:, :na] = np.asarray(c1).reshape(nb, na)
    jac[na:, na:] = np.asarray(c2).reshape(nb, nb)
    factor = None if info.factor is None else info.factor @ jac
    return FisherInfo(jac.T @ info.matrix @ jac, na, nb, info.base, factor)


def chi2_divergence(povm: Povm, rho: np.ndarray, rho0: np.ndarray) -> float:
    """``sum_x (p_x - p0_x)^2 / p0_x`` for the outcome distributions of ``povm``."""
    p = outcome_probs(povm, rho)
    p0 = outcome_probs(povm, rho0)
    dead0 = p0 <= ZERO_PROB
    if np.any(dead0 & (p > ZERO_PROB)):
        raise SupportViolation("rho puts mass on an outcome rho0 never produces")
    live = ~dead0
    return float(np.sum((p[live] - p0[live]) ** 2 / p0[live]))


def _kron_power(rho: np.ndarray, c: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for _ in range(c):
        out = np.kron(out, rho)
    return out


def c_copy_first_order_check(
    povm: Povm, model: StateModel, theta: np.ndarray, phi: np.ndarray | None = None
) -> tuple[float, float]:
    """Both sides of the c-copy to single-copy first-order identity.

    ``lhs = sum_s tr(M_s (A x rho0^{x(c-1)}))^2 / tr(M_s rho0^{xc})`` with
    ``A = rho_{theta,phi} - rho0`` placed on the first copy, evaluated with
    explicit Kronecker products.  ``rhs`` is the quadratic form of the
    single-copy FIM of the reduced POVM.
    """
    phi = np.zeros(model.n_b) if phi is None else np.asarray(phi, dtype=float)
    c = povm.copies
    a = parameterize(model, theta, phi) - model.rho0
    rest = _kron_power(model.rho0, c - 1)
    num = np.einsum("sab,ba->s", povm.elements, np.kron(a, rest)).real
    den = outcome_probs(povm, _kron_power(model.rho0, c))
    live = den > ZERO_PROB
    if np.any(np.abs(num[~live]) > ZERO_SCORE):
        raise SingularOutcome("zero-probability joint outcome with nonzero first-order term")
    lhs = float(np.sum(num[live] ** 2 / den[live]))
    g = reduce_c_copy(povm, model.rho0, 0)
    v = np.concatenate([np.asarray(theta, dtype=float), phi])
    rhs = float(v @ fim(model, g).matrix @ v)
    return lhs, rhs


def c_copy_domination_gap(povm: Povm, model: StateModel) -> float:
    """Smallest eigenvalue of ``c^2 I(rho0, G) - I(rho0^{xc}, M)`` with G the mixed reduction."""
    c = povm.copies
    joint = fim_multi_copy(model, povm).matrix
    single = fim(model, mixed_reduction(povm, model.rho0)).matrix
    return float(np.linalg.eigvalsh(c * c * single - joint)[0])


def c_copy_domination_check(povm: Povm, model: StateModel, tol: float = 1e-8) -> bool:
    return c_copy_domination_gap(povm, model) >= -tol


@dataclass(frozen=True)
class AdaptiveNode:
    """One round of an adaptive single-copy strategy.

    ``children`` maps an outcome index of ``povm`` to the node used in the
    next round.  Leaves have no children.  ``prob`` optionally states the
    probability of reaching this node under ``rho0``; it is verified.
    """

    povm: Povm
    children: Mapping[int, "AdaptiveNode"] = field(default_factory=dict)
    prob: float | None = None

    def depth(self) -> int:
        if not self.children:
            return 1
        depths = {child.depth() for child in self.children.values()}
        if len(depths) != 1:
            raise InvalidTree("all branches must have the same depth")
        return 1 + depths.pop()


def _walk(node: AdaptiveNode, rho0: np.ndarray, reach: float, prob_tol: float):
    """Yield ``(reach probability, node)`` for every node, checking stated probabilities."""
    if node.prob is not None and abs(node.prob - reach) > prob_tol:
        raise InvalidTree(f"stated branch probability {node.prob} but rho0 gives {reach}")
    yield reach, node
    if not node.children:
        return
    probs = outcome_probs(node.povm, rho0)
    if set(node.children) != set(range(len(node.povm))):
        raise InvalidTree("an internal node needs a child for every outcome")
    for x, child in node.children.items():
        yield from _walk(child, rho0, reach * probs[x], prob_tol)


def flatten_adaptive(
    tree: AdaptiveNode,
    rho0: np.ndarray,
    model: StateModel | None = None,
    prob_tol: float = 1e-9,
    tol: float = 1e-8,
) -> Povm:
    """Single-copy POVM ``{p_history M^{(r)}_{history, x} / N}`` of an adaptive strategy.

    When ``model`` is given, also verifies ``N I(rho0, flat) = I(adaptive)``.
    """
    n = tree.depth()
    parts, labels = [], []
    for k, (reach, node) in enumerate(_walk(tree, np.asarray(rho0, dtype=complex), 1.0, prob_tol)):
        parts.append(reach * node.povm.elements / n)
        labels += [(k, lab) for lab in node.povm.labels]
    flat = Povm(np.concatenate(parts), tree.povm.dim, labels=tuple(labels), name=f"flattened(depth={n})")
    if model is not None:
        lhs = n * fim(model, flat).matrix
        rhs = adaptive_fim(model, tree).matrix
        dev = float(np.max(np.abs(lhs - rhs)))
        if dev > tol * max(1.0, float(np.max(np.abs(rhs)))):
            raise ArithmeticError(f"flattening identity violated (deviation {dev:.3g})")
    return flat


def adaptive_fim(model: StateModel, tree: AdaptiveNode) -> FisherInfo:
    """FIM of the full outcome sequence of an adaptive strategy on ``rho^{xN}``.

    Enumerates every leaf history and differentiates its probability
    ``prod_r p(x_r | history)`` by the product rule.
    """
    tree.depth()
    d = model.dim
    ops = model.basis.all_ops
    n = ops.shape[0]
    total = np.zeros((n, n))

    def rec(node: AdaptiveNode, p: float, g: np.ndarray) -> None:
        nonlocal total
        probs = outcome_probs(node.povm, model.rho0)
        scores = _scores(node.povm.elements, ops) / d
        for x in range(len(node.povm)):
            p_new = p * probs[x]
            g_new = g * probs[x] + p * scores[x]
            if node.children:
                rec(node.children[x], p_new, g_new)
            elif p_new > ZERO_PROB:
                total = total + np.outer(g_new, g_new) / p_new
            elif np.any(np.abs(g_new) > ZERO_SCORE):
                raise SingularOutcome("zero-probability history with nonzero score")

    rec(tree, 1.0, np.zeros(n))
    return FisherInfo(total, model.n_a, model.n_b, {"adaptive_depth": tree.depth()})
