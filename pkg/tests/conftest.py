import numpy as np
import pytest

from clusterbispec.kernels import Exponential, Lomax, SymmetricLaplace, TabulatedSymmetric, UniformHalf


def builtin_kernels():
    """The closed-form built-in families at representative parameters."""
    x = np.linspace(0.0, 8.0, 2049)
    tab = TabulatedSymmetric(np.exp(-x) / 2.0 / (1.0 - np.exp(-8.0)), x[1] - x[0])
    return {
        "exp": Exponential(1.0),
        "exp2": Exponential(2.0),
        "lomax15": Lomax(1.5),
        "lomax3": Lomax(3.0),
        "uhalf": UniformHalf(2.0),
        "slap": SymmetricLaplace(1.0),
        "tab": tab,
    }


@pytest.fixture(scope="session")
def kernels():
    return builtin_kernels()


@pytest.fixture
def rng():
    return np.random.default_rng(20240911)
