"""Hermitian operator algebra, dual bases and the linear state family.

Operators are plain ``numpy`` complex arrays of shape ``(d, d)``; stacks of
operators have shape ``(k, d, d)``.  The containers below validate their
invariants once at construction and are immutable afterwards.

The state family around a base state ``rho0`` is

    rho(theta, phi) = rho0 + (1/d) * sum_a theta_a Q_a + (1/d) * sum_b phi_b T_b

where ``tr(O_i Q_a) = d delta_ia`` and ``tr(O_i T_b) = 0``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, GramSingular, InvalidOperator, SingularC2

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
DUAL_TOL = 1e-9

__all__ = [
    "DualBasis",
    "ObservableSet",
    "StateModel",
    "as_density",
    "as_hermitian",
    "basis_transform",
    "build_dual_basis",
    "embed",
    "extract_params",
    "gell_mann_basis",
    "hs_coordinates",
    "in_neighborhood",
    "is_valid_state",
    "maximally_mixed",
    "mix_with_maximally_mixed",
    "op_norm",
    "parameterize",
    "pauli_operators",
    "random_density_matrix",
    "readonly",
]


def readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def as_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate a square Hermitian matrix and return it as complex128."""
    a = np.asarray(op, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol * max(1.0, np.max(np.abs(a))):
        raise InvalidOperator(f"matrix is not Hermitian (deviation {dev:.3g})")
    return a


def is_valid_state(op: np.ndarray) -> bool:
    a = np.asarray(op, dtype=complex)
    try:
        as_hermitian(a)
    except (InvalidOperator, DimensionMismatch):
        return False
    herm = (a + a.conj().T) / 2
    return bool(
        abs(np.trace(a).real - 1.0) <= TRACE_TOL
        and np.linalg.eigvalsh(herm)[0] >= -PSD_TOL
    )


def as_density(op: np.ndarray) -> np.ndarray:
    """Validate a density matrix (PSD, unit trace) and return it symmetrized."""
    a = as_hermitian(op, tol=1e-10)
    if not is_valid_state(a):
        raise InvalidOperator("not a density matrix (PSD, unit trace)")
    return (a + a.conj().T) / 2


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d


def mix_with_maximally_mixed(rho: np.ndarray) -> np.ndarray:
    """The depolarizing channel rho -> rho/2 + I/(2d); its image is S_{1/2}."""
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    return 0.5 * rho + np.eye(d) / (2 * d)


def in_neighborhood(rho: np.ndarray, rho0: np.ndarray, tol: float = PSD_TOL) -> bool:
    """True iff both ``rho`` and its reflection ``2 rho0 - rho`` are PSD."""
    rho = np.asarray(rho, dtype=complex)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho.shape != rho0.shape:
        raise DimensionMismatch("rho and rho0 differ in dimension")
    for a in (rho, 2 * rho0 - rho):
        if np.linalg.eigvalsh((a + a.conj().T) / 2)[0] < -tol:
            return False
    return True


def op_norm(op: np.ndarray) -> float:
    """Operator (spectral) norm of a Hermitian matrix."""
    return float(np.max(np.abs(np.linalg.eigvalsh(op))))


def random_density_matrix(
    d: int, rank: int | None = None, seed: int | np.random.Generator | None = None
) -> np.ndarray:
    """Random state from the induced (Ginibre) measure with the given rank."""
    rng = np.random.default_rng(seed)
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


@functools.lru_cache(maxsize=None)
def _gell_mann(d: int) -> np.ndarray:
    mats = []
    for j, k in itertools.combinations(range(d), 2):
        s = np.zeros((d, d), dtype=complex)
        s[j, k] = s[k, j] = 1 / np.sqrt(2)
        a = np.zeros((d, d), dtype=complex)
        a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
        mats += [s, a]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    out = np.array(mats).reshape(d * d - 1, d, d)
    out.setflags(write=False)
    return out


def gell_mann_basis(d: int) -> np.ndarray:
    """Traceless Hermitian basis, orthonormal under tr(A B)."""
    return _gell_mann(d)


def hs_coordinates(ops: np.ndarray) -> np.ndarray:
    """Real coordinates of (a stack of) traceless Hermitian operators.

    Coordinates are taken against :func:`gell_mann_basis`, so the Euclidean
    inner product of coordinates equals tr(A B).
    """
    ops = np.asarray(ops, dtype=complex)
    d = ops.shape[-1]
    return np.einsum("kij,...ji->...k", _gell_mann(d), ops).real


def _from_coordinates(coords: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("...k,kij->...ij", coords, _gell_mann(d))


_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_operators(
    n: int, labels: Iterable[str] | None = None
) -> tuple[list[str], np.ndarray]:
    """All non-identity n-qubit Pauli strings (or the requested subset)."""
    if labels is None:
        labels = [
            "".join(s)
            for s in itertools.product("IXYZ", repeat=n)
            if set(s) != {"I"}
        ]
    labels = list(labels)
    mats = []
    for lab in labels:
        if len(lab) != n or set(lab) - set("IXYZ"):
            raise ValueError(f"bad Pauli label {lab!r} for n={n}")
        m = np.ones((1, 1), dtype=complex)
        for ch in lab:
            m = np.kron(m, _PAULI_1Q[ch])
        mats.append(m)
    return labels, np.array(mats)


def embed(op: np.ndarray, position: int, others: np.ndarray, copies: int) -> np.ndarray:
    """Kronecker product with ``op`` at ``position`` and ``others`` elsewhere."""
    out = np.ones((1, 1), dtype=complex)
    for k in range(copies):
        out = np.kron(out, op if k == position else others)
    return out


@dataclass(frozen=True)
class ObservableSet:
    """Ordered, linearly independent traceless Hermitian observables."""

    obs: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ops = np.asarray(self.obs, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise DimensionMismatch(f"observables must have shape (m, d, d), got {ops.shape}")
        m, d, _ = ops.shape
        if m < 1 or m > d * d - 1:
            raise DimensionMismatch(f"need 1 <= m <= d^2-1, got m={m}, d={d}")
        for o in ops:
            as_hermitian(o, tol=1e-10)
            if abs(np.trace(o)) > TRACE_TOL:
                raise InvalidOperator("observables must be traceless")
        gram = self._gram(ops)
        ev = np.linalg.eigvalsh(gram)
        if ev[0] <= 1e-10 * ev[-1]:
            raise GramSingular(
                f"observable Gram matrix is singular (eigenvalues {ev[0]:.3g} .. {ev[-1]:.3g})"
            )
        object.__setattr__(self, "obs", readonly(ops))
        labels = tuple(self.labels) or tuple(f"O{i}" for i in range(m))
        if len(labels) != m:
            raise DimensionMismatch("one label per observable required")
        object.__setattr__(self, "labels", labels)

    @staticmethod
    def _gram(ops: np.ndarray) -> np.ndarray:
        g = np.einsum("iab,jba->ij", ops, ops).real
        return (g + g.T) / 2

    @property
    def dim(self) -> int:
        return self.obs.shape[1]

    @property
    def m(self) -> int:
        return self.obs.shape[0]

    @property
    def gram(self) -> np.ndarray:
        return self._gram(self.obs)

    @classmethod
    def pauli(cls, n: int, labels: Iterable[str] | None = None) -> "ObservableSet":
        labs, mats = pauli_operators(n, labels)
        return cls(mats, tuple(labs))

    def expectations(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("iab,ba->i", self.obs, rho).real


@dataclass(frozen=True)
class DualBasis:
    """Dual operators ``Q`` (one per observable) and nuisance operators ``T``."""

    q_ops: np.ndarray
    t_ops: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q_ops, dtype=complex)
        t = np.asarray(self.t_ops, dtype=complex)
        d = q.shape[-1]
        if t.size == 0:
            t = np.zeros((0, d, d), dtype=complex)
        if q.ndim != 3 or t.ndim != 3 or t.shape[1:] != q.shape[1:]:
            raise DimensionMismatch("Q and T stacks must share shape (., d, d)")
        if q.shape[0] + t.shape[0] != d * d - 1:
            raise DimensionMismatch("Q and T together must have d^2-1 elements")
        object.__setattr__(self, "q_ops", readonly(q))
        object.__setattr__(self, "t_ops", readonly(t))

    @property
    def dim(self) -> int:
        return self.q_ops.shape[-1]

    @property
    def n_a(self) -> int:
        return self.q_ops.shape[0]

    @property
    def n_b(self) -> int:
        return self.t_ops.shape[0]

    @property
    def all_ops(self) -> np.ndarray:
        """Stack ``(Q_1..Q_m, T_1..T_k)``; the index order used by every FIM."""
        return np.concatenate([self.q_ops, self.t_ops], axis=0)

    def check(self, obs: ObservableSet, tol: float = DUAL_TOL) -> None:
        """Raise if the duality relations against ``obs`` fail."""
        d = self.dim
        oq = np.einsum("iab,jba->ij", obs.obs, self.q_ops)
        if np.max(np.abs(oq - d * np.eye(obs.m))) > tol:
            raise InvalidOperator("tr(O_i Q_a) != d delta_ia")
        if self.n_b:
            ot = np.einsum("iab,jba->ij", obs.obs, self.t_ops)
            if np.max(np.abs(ot)) > tol:
                raise InvalidOperator("tr(O_i T_b) != 0")


def build_dual_basis(obs: ObservableSet) -> DualBasis:
    """Canonical dual basis: Q in span(O), T orthogonal to span(O) with tr(T T') = d delta."""
    d, m = obs.dim, obs.m
    gram = obs.gram
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= 1e-10 * ev[-1]:
        raise GramSingular("observable Gram matrix is singular")
    q = d * np.einsum("aj,jxy->axy", np.linalg.inv(gram), obs.obs)

    coords = hs_coordinates(obs.obs)
    # Orthonormal complement of span(O) inside the traceless subspace.
    _, _, vh = np.linalg.svd(coords, full_matrices=True)
    null = vh[m:]
    t = np.sqrt(d) * _from_coordinates(null, d)
    basis = DualBasis(q, t)
    basis.check(obs)
    return basis


def basis_transform(basis: DualBasis, c1: np.ndarray, c2: np.ndarray) -> DualBasis:
    """Return the basis ``(Q + T C1, T C2)``.

    ``C1`` has shape ``(|B|, |A|)`` and ``C2`` shape ``(|B|, |B|)``.  The
    resulting T is not renormalized.
    """
    nb, na = basis.n_b, basis.n_a
    c1 = np.asarray(c1, dtype=float).reshape(nb, na)
    c2 = np.asarray(c2, dtype=float).reshape(nb, nb)
    if nb and np.linalg.cond(c2) > 1e12:
        raise SingularC2("C2 is numerically singular")
    q = basis.q_ops + np.einsum("ba,bxy->axy", c1, basis.t_ops)
    t = np.einsum("bc,bxy->cxy", c2, basis.t_ops)
    return DualBasis(q, t)


@dataclass(frozen=True)
class StateModel:
    """A full-rank base state together with a dual basis for ``observables``."""

    rho0: np.ndarray
    basis: DualBasis
    observables: ObservableSet
    _coord_pinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        rho0 = as_density(self.rho0)
        if rho0.shape[0] != self.basis.dim or self.basis.dim != self.observables.dim:
            raise DimensionMismatch("rho0, basis and observables disagree on d")
        if self.basis.n_a != self.observables.m:
            raise DimensionMismatch("need one Q per observable")
        if np.linalg.eigvalsh(rho0)[0] <= 1e-12:
            raise InvalidOperator("rho0 must be full rank")
        object.__setattr__(self, "rho0", readonly(rho0))
        d = self.dim
        jac = hs_coordinates(self.basis.all_ops).T / d
        object.__setattr__(self, "_coord_pinv", readonly(np.linalg.inv(jac)))

    @classmethod
    def canonical(cls, rho0: np.ndarray, obs: ObservableSet) -> "StateModel":
        return cls(rho0, build_dual_basis(obs), obs)

    def with_rho0(self, rho0: np.ndarray) -> "StateModel":
        return StateModel(rho0, self.basis, self.observables)

    def with_basis(self, basis: DualBasis) -> "StateModel":
        return StateModel(self.rho0, basis, self.observables)

    @property
    def dim(self) -> int:
        return self.rho0.shape[0]

    @property
    def n_a(self) -> int:
        return self.basis.n_a

    @property
    def n_b(self) -> int:
        return self.basis.n_b


def parameterize(model: StateModel, theta: Sequence[float], phi: Sequence[float] | None = None) -> np.ndarray:
    """rho0 + (theta . Q + phi . T) / d, without a positivity check."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    phi = np.zeros(model.n_b) if phi is None else np.asarray(phi, dtype=float).reshape(-1)
    if theta.shape[0] != model.n_a or phi.shape[0] != model.n_b:
        raise DimensionMismatch(
            f"expected theta[{model.n_a}] and phi[{model.n_b}], got {theta.shape[0]}, {phi.shape[0]}"
        )
    d = model.dim
    delta = np.einsum("a,axy->xy", theta, model.basis.q_ops)
    if model.n_b:
        delta = delta + np.einsum("b,bxy->xy", phi, model.basis.t_ops)
    return model.rho0 + delta / d


def extract_params(model: StateModel, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`parameterize`.

    ``theta_a = tr(rho O_a) - tr(rho0 O_a)`` for any dual basis.  ``phi`` is
    read off by solving for the coordinates of ``rho - rho0``, which reduces
    to ``tr((rho - rho0) T_b)`` for the canonical basis.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != model.rho0.shape:
        raise DimensionMismatch("rho has the wrong dimension")
    obs = model.observables
    theta = obs.expectations(rho) - obs.expectations(model.rho0)
    if model.n_b == 0:
        return theta, np.zeros(0)
    coords = model._coord_pinv @ hs_coordinates(rho - model.rho0)
    return theta, coords[model.n_a :]
