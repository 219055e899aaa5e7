"""Small shared constructions for the test modules."""

import numpy as np

from fisher_shadow.operators import ObservableSet, StateModel, build_dual_basis, maximally_mixed

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def z_model(rho0=None) -> StateModel:
    obs = ObservableSet(np.array([Z]))
    rho0 = maximally_mixed(2) if rho0 is None else rho0
    return StateModel(rho0, build_dual_basis(obs), obs)


def bloch_state(r) -> np.ndarray:
    return (np.eye(2) + r[0] * X + r[1] * Y + r[2] * Z) / 2
