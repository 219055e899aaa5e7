"""POVMs: validation, outcome statistics, standard families and copy reduction."""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import unitary_group

from .errors import DimensionMismatch, InvalidPovm, SingularFrame, UnsupportedDim
from .operators import readonly

PSD_TOL = 1e-10
COMPLETENESS_TOL = 1e-9

__all__ = [
    "OutcomeSample",
    "Povm",
    "finite_haar_proxy",
    "haar_random_state",
    "haar_random_states",
    "mixed_reduction",
    "outcome_probs",
    "partial_reduce",
    "povm_mixture",
    "random_povm",
    "reduce_c_copy",
    "sample_haar_measurement_outcome",
    "sample_haar_measurement_outcomes",
    "sample_outcomes",
    "standard_povms",
    "tensor_power",
]


@dataclass(frozen=True)
class Povm:
    """Finite POVM on ``copies`` copies of a ``dim``-dimensional system."""

    elements: np.ndarray
    dim: int
    copies: int = 1
    labels: tuple = ()
    name: str = ""

    def __post_init__(self) -> None:
        el = np.asarray(self.elements, dtype=complex)
        big = self.dim**self.copies
        if el.ndim != 3 or el.shape[1:] != (big, big):
            raise DimensionMismatch(
                f"elements must have shape (K, {big}, {big}), got {el.shape}"
            )
        el = (el + el.conj().transpose(0, 2, 1)) / 2
        if np.min(np.linalg.eigvalsh(el)) < -PSD_TOL:
            raise InvalidPovm("POVM element is not PSD")
        dev = np.max(np.abs(el.sum(axis=0) - np.eye(big)))
        if dev > COMPLETENESS_TOL:
            raise InvalidPovm(f"POVM elements do not sum to identity (deviation {dev:.3g})")
        labels = tuple(self.labels) or tuple(range(el.shape[0]))
        if len(labels) != el.shape[0]:
            raise DimensionMismatch("one label per element required")
        object.__setattr__(self, "elements", readonly(el))
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.elements.shape[0]

    @property
    def total_dim(self) -> int:
        return self.dim**self.copies


@dataclass(frozen=True)
class OutcomeSample:
    indices: np.ndarray
    seed: object = None


def outcome_probs(povm: Povm, rho: np.ndarray) -> np.ndarray:
    """Born probabilities ``tr(M_x rho)``, with tiny negatives clamped to zero."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (povm.total_dim, povm.total_dim):
        raise DimensionMismatch("state and POVM dimensions differ")
    p = np.einsum("xab,ba->x", povm.elements, rho).real
    return np.where(p < 0, 0.0, p)


def sample_outcomes(
    povm: Povm, rho: np.ndarray, n: int, seed: int | np.random.Generator | None = None
) -> OutcomeSample:
    """Draw ``n`` i.i.d. outcome indices by inverse CDF."""
    rng = np.random.default_rng(seed)
    p = outcome_probs(povm, rho)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return OutcomeSample(np.minimum(idx, len(p) - 1), seed)


def haar_random_states(d: int, n: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """``n`` Haar-random unit vectors, one per row."""
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, d)) + 1j * rng.normal(size=(n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def haar_random_state(d: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    return haar_random_states(d, 1, seed)[0]


def sample_haar_measurement_outcomes(
    rho: np.ndarray, n: int, seed: int | np.random.Generator | None = None
) -> np.ndarray:
    """Outcomes of the continuous Haar POVM ``{d |v><v| dv}`` applied ``n`` times.

    Rejection sampling: propose Haar ``v`` and accept with probability
    ``<v|rho|v> / lambda_max(rho)``.
    """
    rng = np.random.default_rng(seed)
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    lam = np.linalg.eigvalsh(rho)[-1]
    out = np.empty((n, d), dtype=complex)
    filled = 0
    while filled < n:
        want = n - filled
        batch = int(math.ceil(want * d * lam * 1.2)) + 8
        v = haar_random_states(d, batch, rng)
        w = np.einsum("ka,ab,kb->k", v.conj(), rho, v).real
        keep = v[rng.random(batch) * lam < w][:want]
        out[filled : filled + len(keep)] = keep
        filled += len(keep)
    return out


def sample_haar_measurement_outcome(
    rho: np.ndarray, seed: int | np.random.Generator | None = None
) -> np.ndarray:
    return sample_haar_measurement_outcomes(rho, 1, seed)[0]


def _rank_one(vecs: np.ndarray) -> np.ndarray:
    return np.einsum("ka,kb->kab", vecs, vecs.conj())


def finite_haar_proxy(d: int, k: int | None = None, seed: int | np.random.Generator | None = None) -> Povm:
    """Frame-corrected ``k``-outcome surrogate of the Haar POVM (default ``k = 50 d^2``)."""
    k = 50 * d * d if k is None else k
    if k < d * d:
        raise ValueError("need K >= d^2 outcomes")
    vecs = haar_random_states(d, k, seed)
    proj = (d / k) * _rank_one(vecs)
    frame = proj.sum(axis=0)
    ev, u = np.linalg.eigh(frame)
    if ev[0] <= 1e-12 * ev[-1]:
        raise SingularFrame("frame operator is rank deficient; use another seed")
    inv_sqrt = (u / np.sqrt(ev)) @ u.conj().T
    el = inv_sqrt @ proj @ inv_sqrt
    return Povm(el, d, name=f"haar_proxy(K={k})")


def _pauli_eigvecs() -> dict[str, np.ndarray]:
    s = 1 / np.sqrt(2)
    return {
        "X": np.array([[s, s], [s, -s]], dtype=complex),
        "Y": np.array([[s, 1j * s], [s, -1j * s]], dtype=complex),
        "Z": np.eye(2, dtype=complex),
    }


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % k for k in range(2, int(math.isqrt(n)) + 1))


def standard_povms(d: int, kind: str) -> Povm:
    """Named POVM families.

    ``computational``
        Diagonal projectors.
    ``pauli_basis_uniform``
        A uniformly random local Pauli basis on ``log2 d`` qubits, as one POVM
        with ``6^n`` weighted rank-one elements.
    ``sic_d2``
        The qubit tetrahedron.
    ``mub_prime_d``
        A complete set of ``d + 1`` mutually unbiased bases (``d`` prime).
    """
    if kind == "computational":
        el = np.array([np.diag(np.eye(d)[i]).astype(complex) for i in range(d)])
        return Povm(el, d, labels=tuple(str(i) for i in range(d)), name=kind)

    if kind == "pauli_basis_uniform":
        n = int(round(math.log2(d)))
        if 2**n != d:
            raise UnsupportedDim("pauli_basis_uniform needs d = 2^n")
        eig = _pauli_eigvecs()
        els, labels = [], []
        for bases in itertools.product("XYZ", repeat=n):
            for bits in itertools.product((0, 1), repeat=n):
                v = np.ones(1, dtype=complex)
                for b, s in zip(bases, bits):
                    v = np.kron(v, eig[b][s])
                els.append(np.outer(v, v.conj()) / 3**n)
                labels.append("".join(bases) + ":" + "".join(map(str, bits)))
        return Povm(np.array(els), d, labels=tuple(labels), name=kind)

    if kind == "sic_d2":
        if d != 2:
            raise UnsupportedDim("sic_d2 is defined for d = 2 only")
        bloch = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)
        paulis = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
        els = [(np.eye(2) + np.einsum("k,kab->ab", r, paulis)) / 4 for r in bloch]
        return Povm(np.array(els), 2, name=kind)

    if kind == "mub_prime_d":
        if not _is_prime(d):
            raise UnsupportedDim(f"mub_prime_d needs prime d, got {d}")
        bases = [np.eye(d, dtype=complex)]
        if d == 2:
            eig = _pauli_eigvecs()
            bases += [eig["X"], eig["Y"]]
        else:
            omega = np.exp(2j * np.pi / d)
            x = np.arange(d)
            for k in range(d):
                bases.append(
                    np.array([omega ** ((k * x * x + j * x) % d) for j in range(d)]) / np.sqrt(d)
                )
        els = [np.outer(v, v.conj()) / (d + 1) for b in bases for v in b]
        return Povm(np.array(els), d, name=kind)

    raise ValueError(f"unknown POVM kind {kind!r}")


def random_povm(
    d: int,
    n_outcomes: int,
    copies: int = 1,
    seed: int | np.random.Generator | None = None,
) -> Povm:
    """Random POVM from the block rows of a Haar isometry (Naimark construction)."""
    rng = np.random.default_rng(seed)
    big = d**copies
    u = unitary_group.rvs(big * n_outcomes, random_state=rng)
    v = u[:, :big].reshape(n_outcomes, big, big)
    el = np.einsum("kab,kac->kbc", v.conj(), v)
    return Povm(el, d, copies=copies, name=f"random(K={n_outcomes})")


def tensor_power(povm: Povm, c: int) -> Povm:
    """Product POVM ``{M_{s1} x ... x M_{sc}}``."""
    if povm.copies != 1:
        raise DimensionMismatch("tensor_power expects a single-copy POVM")
    els, labels = [], []
    for idx in itertools.product(range(len(povm)), repeat=c):
        m = np.ones((1, 1), dtype=complex)
        for i in idx:
            m = np.kron(m, povm.elements[i])
        els.append(m)
        labels.append(tuple(povm.labels[i] for i in idx))
    return Povm(np.array(els), povm.dim, copies=c, labels=tuple(labels), name=f"{povm.name}^{c}")


def partial_reduce(elements: np.ndarray, rho0: np.ndarray, d: int, c: int, i: int) -> np.ndarray:
    """``tr_{all but i}((rho0 on the other copies) M_s)`` for every element."""
    letters = string.ascii_letters
    row, col = letters[:c], letters[c : 2 * c]
    m_sub = "s" + row + col
    terms, ops = [m_sub], []
    for j in range(c):
        if j != i:
            terms.append(col[j] + row[j])
            ops.append(rho0)
    out = "s" + row[i] + col[i]
    k = elements.shape[0]
    t = elements.reshape((k,) + (d,) * (2 * c))
    return np.einsum(",".join(terms) + "->" + out, t, *ops)


def reduce_c_copy(povm: Povm, rho0: np.ndarray, i: int = 0) -> Povm:
    """Single-copy POVM ``G_s`` obtained by fixing every copy except ``i`` to ``rho0``.

    ``i`` is zero-based.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (povm.dim, povm.dim):
        raise DimensionMismatch("rho0 must act on a single copy")
    if not 0 <= i < povm.copies:
        raise DimensionMismatch(f"copy index {i} out of range")
    g = partial_reduce(povm.elements, rho0, povm.dim, povm.copies, i)
    return Povm(g, povm.dim, labels=povm.labels, name=f"reduce[{i}]({povm.name})")


def mixed_reduction(povm: Povm, rho0: np.ndarray) -> Povm:
    """The POVM ``{G^{[i]}_s / c}`` over outcome pairs ``(i, s)``."""
    c = povm.copies
    parts, labels = [], []
    for i in range(c):
        parts.append(partial_reduce(povm.elements, rho0, povm.dim, c, i) / c)
        labels += [(i, lab) for lab in povm.labels]
    return Povm(np.concatenate(parts), povm.dim, labels=tuple(labels), name=f"mixed({povm.name})")


def povm_mixture(povms: Sequence[Povm], weights: Sequence[float]) -> Povm:
    """Convex combination ``{w_k M^{(k)}_x}`` as a single POVM."""
    if abs(sum(weights) - 1) > 1e-12:
        raise ValueError("weights must sum to one")
    els = np.concatenate([w * p.elements for p, w in zip(povms, weights)])
    labels = tuple((k, lab) for k, p in enumerate(povms) for lab in p.labels)
    return Povm(els, povms[0].dim, copies=povms[0].copies, labels=labels)
