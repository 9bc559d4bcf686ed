import hypothesis
import numpy as np
import pytest

from fairshift.dataset import validate_dataset

hypothesis.settings.register_profile(
    "ci", deadline=None, max_examples=50,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.load_profile("ci")


def assert_valid(ds):
    """Shared dataset validator: every test funnels emitted Datasets here."""
    validate_dataset(ds)
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(0)
