import numpy as np
import pytest

from greybox.model import LtiSystem, TrueUncertainty
from greybox.scenario import two_mass_spring_damper


@pytest.fixture(scope="session")
def bench():
    """The shipped two-mass-spring-damper plant (with hidden truth)."""
    return two_mass_spring_damper()


@pytest.fixture()
def small_sys():
    """Stable 2-state plant with one uncertainty channel and one output."""
    return LtiSystem(A=[[-0.5, 1.0], [-1.0, -0.8]], B_u=[[0.0], [1.0]],
                     S_eta=[[0.0], [1.0]], B_omega=[[0.2], [0.1]],
                     C=[[1.0, 0.0]], D_nu=[[1.0]])


def random_hurwitz(rng, n, margin=0.3):
    """Dense matrix shifted until its spectral abscissa is <= -margin."""
    A = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(A).real) + margin
    return A - shift * np.eye(n)
