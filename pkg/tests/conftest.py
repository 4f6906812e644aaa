import dataclasses

import numpy as np
import pytest

from saddlemap.driver import ProblemDefinition
from saddlemap.geometry import GeometryField


def quadratic_saddle_field() -> GeometryField:
    """Exact identity chart of U = u1^2 - u2^2 on the flat plane."""

    def psi_derivatives(u):
        return np.asarray(u, dtype=float), np.eye(2), np.zeros((2, 2, 2))

    def force_derivatives(u):
        u = np.asarray(u, dtype=float)
        return np.array([-2.0 * u[0], 2.0 * u[1]]), np.array([[-2.0, 0.0], [0.0, 2.0]])

    return GeometryField(psi_derivatives, force_derivatives)


def flat_problem(dim: int = 2, force=None) -> ProblemDefinition:
    """Unconstrained plane: identity projection, optional force field."""
    if force is None:
        force = lambda x: np.zeros(dim)
    return ProblemDefinition(
        ambient_dim=dim,
        energy=lambda x: 0.0,
        force=force,
        project=lambda x: np.asarray(x, dtype=float),
        exact_chart=None,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_spd(rng, d=2, scale=1.0):
    a = rng.standard_normal((d, d))
    g = a @ a.T + scale * np.eye(d)
    return g


class LinearChartStub:
    """Duck-typed regressor computing a fixed linear map x -> A x + b."""

    def __init__(self, a, b=None, train_inputs=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.zeros(self.a.shape[0]) if b is None else np.asarray(b, dtype=float)
        self.train_inputs = (
            np.zeros((1, self.a.shape[1])) if train_inputs is None else train_inputs
        )

    def predict(self, x):
        return self.a @ np.asarray(x, dtype=float) + self.b

    def predict_with_derivatives(self, x, order=2):
        x = np.asarray(x, dtype=float)
        second = np.zeros((self.a.shape[0], x.size, x.size)) if order >= 2 else None
        jac = self.a.copy() if order >= 1 else None
        return self.a @ x + self.b, jac, second
