import numpy as np
import pytest

from nlshift.dataset import PanelDataset
from nlshift.synthetic import DgpSpec, generate


@pytest.fixture(scope="session")
def linear_data():
    return generate(DgpSpec(kind="linear_gaussian", n=5000, j=2, p=1, seed=11))


@pytest.fixture(scope="session")
def het_data():
    return generate(DgpSpec(kind="heteroskedastic_qr", n=5000, seed=7))


@pytest.fixture(scope="session")
def quad_data():
    return generate(DgpSpec(kind="quadratic", n=5000, seed=21))


@pytest.fixture()
def small_panel():
    rng = np.random.default_rng(0)
    n = 60
    w = rng.uniform(0.0, 2.0, (n, 2))
    x = w @ np.array([1.0, 0.5]) + rng.standard_normal(n)
    y = 1.0 + 2.0 * x + 0.1 * rng.standard_normal(n)
    return PanelDataset(y=y, x=x, w=w, d=np.empty((n, 0)))
