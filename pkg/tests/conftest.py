import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rilab.flowfield import FlowField  # noqa: E402
from rilab.integrator import assemble_gamma, recover_x, trace_sigma, trace_sigma_prime  # noqa: E402
from rilab.params import GasParams  # noqa: E402

REF = (3, 1.4, 1.05)
ELL = 21.4


@pytest.fixture(scope="session")
def ref():
    return GasParams.isentropic(*REF)


@pytest.fixture(scope="session")
def sigma_ref(ref):
    return recover_x(trace_sigma(ref), (np.inf, 1.0))


@pytest.fixture(scope="session")
def sigma_prime_ref(ref):
    return recover_x(trace_sigma_prime(ref), (-np.inf, 1.0))


@pytest.fixture(scope="session")
def gamma_vertical(ref, sigma_prime_ref):
    return assemble_gamma(ref, None, sigma_prime=sigma_prime_ref)


@pytest.fixture(scope="session")
def gamma_case1(ref, sigma_prime_ref):
    return assemble_gamma(ref, ELL, sigma_prime=sigma_prime_ref)


@pytest.fixture(scope="session")
def gamma_case2(ref, sigma_prime_ref):
    return assemble_gamma(ref, -ELL, sigma_prime=sigma_prime_ref)


@pytest.fixture(scope="session")
def field_vertical(ref, gamma_vertical):
    return FlowField(gamma_vertical, ref)


@pytest.fixture(scope="session")
def field_case1(ref, gamma_case1):
    return FlowField(gamma_case1, ref)


@pytest.fixture(scope="session")
def field_case2(ref, gamma_case2):
    return FlowField(gamma_case2, ref)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        name, ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {name}  ({detail})")
