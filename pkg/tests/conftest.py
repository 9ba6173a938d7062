import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from uniembed.synthdata import GenSpec, generate

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def default_data():
    return generate(GenSpec())


@pytest.fixture(scope="session")
def small_data():
    # 3 verticals x 4 products x 6 items, 16-d: quick to train on
    return generate(GenSpec(verticals=3, products_per_vertical=4, items_per_product=6, input_dim=16, seed=5))


def rows(rng, n, d):
    return np.array(rng.normals(n * d)).reshape(n, d)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(mod.RESULTS):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
