import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from switched_ioss.conditions import certify, eval_estimator_conditions  # noqa: E402
from switched_ioss.loader import builtin_paper_example, load_family_text  # noqa: E402


SCALAR_FAMILY = """
[family]
delta = 1
Delta = 1.5
lambda_s = 2
lambda_u = 0.5
mu = 1
gamma1 = r**2
gamma2 = r**2
alpha_lower = 0.5*r**2
alpha_upper = 0.5*r**2
edges =
input_dim = 0

[system 1]
class = stable
f = [-x1]
h = [x1]
V = 0.5*x1**2
"""

# one stable, one unstable scalar mode with a common V (mu = 1)
TWO_MODE_FAMILY = """
[family]
delta = 1
Delta = 1.5
lambda_s = 2
lambda_u = 0.5
mu = 1
gamma1 = 2*r**2
gamma2 = 2*r**2
alpha_lower = 0.5*r**2
alpha_upper = 0.5*r**2
edges = (1, 2), (2, 1)
input_dim = 1

[system 1]
class = stable
f = [-x1 + 0.1*v1]
h = [x1]
V = 0.5*x1**2

[system 2]
class = unstable
f = [0.25*x1 + 0.1*v1]
h = [x1]
V = 0.5*x1**2
"""


@pytest.fixture(scope="session")
def example_family():
    return builtin_paper_example()


@pytest.fixture(scope="session")
def example_cert(example_family):
    return certify(example_family)


@pytest.fixture(scope="session")
def example_params(example_family, example_cert):
    return eval_estimator_conditions(example_family, example_cert, 3.0, 0.75, 3.0, 4.2)


@pytest.fixture(scope="session")
def scalar_family():
    return load_family_text(SCALAR_FAMILY, origin="scalar")


@pytest.fixture(scope="session")
def two_mode_family():
    return load_family_text(TWO_MODE_FAMILY, origin="two-mode")
