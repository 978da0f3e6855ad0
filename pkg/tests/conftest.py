import numpy as np
import pytest

from heterodimer_ldg import ldg_ops, model
from heterodimer_ldg.dgspace import DGSpace
from heterodimer_ldg.mesh import Rectangle, build_structured_mesh


@pytest.fixture(scope="session")
def unit_square_mesh():
    return build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 4, 4)


@pytest.fixture(scope="session")
def two_element_mesh():
    return build_structured_mesh(Rectangle(0.0, 1.0, 0.0, 1.0), 1, 1)


@pytest.fixture(scope="session")
def wave_coefficients():
    return model.ProblemCoefficients(
        lambda_p=0.1, lambda_q=0.1, mu_pq=1.0, kappa_p=0.1,
        D=ldg_ops.DiffusionTensor.isotropic(0.0375),
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240801)
