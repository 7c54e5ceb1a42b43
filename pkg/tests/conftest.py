import pytest

from rdspill.funcspace import ModelSpec, constant, polynomial


@pytest.fixture(scope="session")
def benchmark_model():
    """Linear baselines with constant spillover coefficients.

    tau_d = 1 and, because every structural piece is linear or constant, the
    total effect equals (tau_d + gamma0)/(1 - delta0) = 2.5 at any radius.
    """
    return ModelSpec(
        m_plus=polynomial([1.0, 0.3]),
        m_minus=polynomial([0.0, 0.2]),
        delta=constant(0.4),
        gamma=constant(0.5),
        noise_sd=constant(0.1),
    )


@pytest.fixture(scope="session")
def noiseless_benchmark():
    return ModelSpec(
        m_plus=polynomial([1.0, 0.3]),
        m_minus=polynomial([0.0, 0.2]),
        delta=constant(0.4),
        gamma=constant(0.5),
        noise_sd=constant(0.0),
    )
