import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from app.models.Povm import FinitePovm
from app.schemas.Scenario import SearchBudget
from app.services.PovmService import PovmService
from app.services.SmearingService import SmearingService
from app.services.SphereService import SphereService
from app.services.ToeplitzService import ToeplitzService

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

finite = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False)
seeds = st.integers(min_value=0, max_value=2 ** 31 - 1)


def cube_vectors(n: int):
    return arrays(np.float64, (n,), elements=finite)


def hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (a + a.conj().T)


def qubit_povm() -> FinitePovm:
    # weights 1/3 keep the third element PSD (with 1/2 it has eigenvalue -sqrt(2)/4)
    eye = np.eye(2)
    a1 = (eye + 0.5 * SIGMA_X) / 3.0
    a2 = (eye + 0.5 * SIGMA_Z) / 3.0
    return FinitePovm([a1, a2, eye - a1 - a2])


@pytest.fixture
def povm_service():
    return PovmService(workers=1)


@pytest.fixture
def smearing_service(povm_service):
    return SmearingService(povm_service)


@pytest.fixture
def sphere_service():
    return SphereService()


@pytest.fixture
def toeplitz_service(sphere_service):
    return ToeplitzService(sphere_service)


@pytest.fixture
def small_budget():
    return SearchBudget(starts=8, iterations=50)
