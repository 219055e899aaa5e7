"""Validated experiment configurations.  Unknown keys are rejected."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .gamma import Budget
from .measurement import Povm, finite_haar_proxy, standard_povms
from .operators import ObservableSet, as_density, maximally_mixed, pauli_operators, random_density_matrix
from .serialization import povm_from_json


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _parse_p(v: object) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "infinity"):
            return math.inf
        v = float(v)
    p = float(v)  # type: ignore[arg-type]
    if not p >= 1:
        raise ValueError("norm index p must be >= 1 or 'inf'")
    return p


PNorm = Union[float, Literal["inf"]]


class OperatorSpec(Strict):
    dim: int = Field(ge=1)
    re: list[list[float]]
    im: Optional[list[list[float]]] = None

    def array(self) -> np.ndarray:
        re = np.asarray(self.re, dtype=float)
        im = np.zeros_like(re) if self.im is None else np.asarray(self.im, dtype=float)
        if re.shape != (self.dim, self.dim) or im.shape != re.shape:
            raise ValueError("operator entries do not match dim")
        return re + 1j * im


class ObservablesSpec(Strict):
    kind: Literal["pauli_complete", "pauli", "explicit"] = "pauli_complete"
    n_qubits: Optional[int] = Field(default=None, ge=1, le=3)
    labels: Optional[list[str]] = None
    operators: Optional[list[OperatorSpec]] = None

    def build(self) -> ObservableSet:
        if self.kind == "explicit":
            if not self.operators:
                raise ValueError("explicit observables need 'operators'")
            return ObservableSet(np.array([o.array() for o in self.operators]))
        if self.n_qubits is None:
            raise ValueError("Pauli observables need 'n_qubits'")
        if self.kind == "pauli":
            if not self.labels:
                raise ValueError("kind 'pauli' needs 'labels'")
            return ObservableSet.pauli(self.n_qubits, self.labels)
        return ObservableSet.pauli(self.n_qubits)


class StateSpec(Strict):
    """Simulated unknown state.

    ``pauli_coefficients`` maps Pauli labels to ``c_P`` in ``(I + sum c_P P) / d``.
    """

    kind: Literal["maximally_mixed", "pauli_coefficients", "explicit", "random"] = "maximally_mixed"
    coefficients: Optional[dict[str, float]] = None
    operator: Optional[OperatorSpec] = None
    seed: int = 0

    def build(self, d: int) -> np.ndarray:
        if self.kind == "maximally_mixed":
            return maximally_mixed(d)
        if self.kind == "random":
            return random_density_matrix(d, seed=self.seed)
        if self.kind == "explicit":
            if self.operator is None:
                raise ValueError("explicit state needs 'operator'")
            return as_density(self.operator.array())
        n = int(round(math.log2(d)))
        coeffs = self.coefficients or {}
        labels, mats = pauli_operators(n, list(coeffs) or None)
        rho = np.eye(d, dtype=complex)
        for lab, mat in zip(labels, mats):
            rho = rho + coeffs.get(lab, 0.0) * mat
        return as_density(rho / d)


class PovmSpec(Strict):
    kind: Literal[
        "computational", "pauli_basis_uniform", "sic_d2", "mub_prime_d", "haar_proxy", "explicit"
    ] = "pauli_basis_uniform"
    haar_factor: int = Field(default=50, ge=1)
    seed: int = 0
    explicit: Optional[dict] = None

    def build(self, d: int) -> Povm:
        if self.kind == "haar_proxy":
            return finite_haar_proxy(d, self.haar_factor * d * d, self.seed)
        if self.kind == "explicit":
            if self.explicit is None:
                raise ValueError("explicit POVM needs 'explicit'")
            return povm_from_json(self.explicit)
        return standard_povms(d, self.kind)


class BudgetSpec(Strict):
    max_evals: int = Field(default=4000, ge=1)
    restarts: int = Field(default=8, ge=1)
    outer_evals: int = Field(default=40, ge=1)
    strict: bool = False

    def build(self) -> Budget:
        return Budget(self.max_evals, self.restarts, self.outer_evals, self.strict)


class _WithP(Strict):
    p: PNorm = 2.0

    @field_validator("p", mode="before")
    @classmethod
    def _p(cls, v: object) -> float:
        return _parse_p(v)


class GammaConfig(_WithP):
    observables: ObservablesSpec = ObservablesSpec(n_qubits=1)
    variant: Literal["ob", "full"] = "ob"
    family: Literal["catalog", "parameterized", "fixed"] = "catalog"
    povm: Optional[PovmSpec] = None
    domain: Literal["S_full_rank", "S_half"] = "S_full_rank"
    budget: BudgetSpec = BudgetSpec()
    n_outcomes: Optional[int] = None
    seed: int = 0


class IdentitiesConfig(Strict):
    dims: list[int] = [2, 3]
    instances: int = Field(default=20, ge=1)
    convention: Literal["derivative", "d2_scaled"] = "derivative"
    suites: Optional[list[str]] = None
    seed: int = 0


class EstimateConfig(_WithP):
    observables: ObservablesSpec = ObservablesSpec(n_qubits=1)
    state: StateSpec = StateSpec()
    povm: PovmSpec = PovmSpec()
    epsilon: float = Field(default=0.1, gt=0)
    delta: float = Field(default=0.1, gt=0, lt=1)
    n0: int = Field(default=4000, ge=1)
    b: Optional[int] = Field(default=None, ge=1)
    n1: Optional[int] = Field(default=None, ge=1)
    batch_constant: Optional[float] = Field(default=None, gt=0)
    trials: int = Field(default=1, ge=1)
    seed: int = 0


class ObliviousConfig(EstimateConfig):
    alpha: list[float]


class SweepConfig(_WithP):
    observables: ObservablesSpec = ObservablesSpec(n_qubits=1)
    state: StateSpec = StateSpec()
    povm: PovmSpec = PovmSpec()
    epsilons: list[float] = [0.8, 0.1, 0.05, 0.025]
    delta: float = Field(default=0.1, gt=0, lt=1)
    trials: int = Field(default=100, ge=1)
    n0: int = Field(default=4000, ge=1)
    b_min: int = Field(default=1, ge=1)
    b_max: int = Field(default=1 << 16, ge=1)
    seed: int = 0


class PauliConfig(_WithP):
    n_values: list[int] = [1, 2, 3]
    c: int = Field(default=2, ge=1)
    haar_factor: int = Field(default=50, ge=1)
    budget: BudgetSpec = BudgetSpec(max_evals=300, restarts=3)
    bracket_constant: float = 6.0
    seed: int = 0


class CcopyConfig(Strict):
    dims: list[int] = [2, 3]
    c: int = Field(default=2, ge=1, le=3)
    instances: int = Field(default=50, ge=1)
    n_outcomes: int = Field(default=4, ge=1)
    adaptive_depth: int = Field(default=3, ge=1, le=4)
    seed: int = 0


class ThresholdsConfig(_WithP):
    observables: ObservablesSpec = ObservablesSpec(n_qubits=1)
    c: int = Field(default=2, ge=1)
    m_star: Optional[PovmSpec] = None
    gamma_ob: Optional[float] = None
    gamma_full: Optional[float] = None
    n_pure: int = 32
    n_mixed: int = 32
    budget: BudgetSpec = BudgetSpec(max_evals=800, restarts=4)
    seed: int = 0


COMMAND_CONFIGS: dict[str, type[Strict]] = {
    "gamma": GammaConfig,
    "identities": IdentitiesConfig,
    "sweep": SweepConfig,
    "pauli": PauliConfig,
    "ccopy": CcopyConfig,
    "estimate": EstimateConfig,
    "oblivious": ObliviousConfig,
    "thresholds": ThresholdsConfig,
}


def load_config(command: str, path: str | Path | None, seed: int | None = None) -> Strict:
    raw = json.loads(Path(path).read_text()) if path else {}
    if seed is not None:
        raw["seed"] = seed
    return COMMAND_CONFIGS[command].model_validate(raw)
