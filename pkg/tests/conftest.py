import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kkperturb.metrics import MetricConfig

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@st.composite
def complex_matrices(draw, n=None, min_n=1, max_n=4):
    n = n or draw(st.integers(min_n, max_n))
    re = draw(arrays(np.float64, (n, n), elements=finite))
    im = draw(arrays(np.float64, (n, n), elements=finite))
    return re + 1j * im


@pytest.fixture
def fast_cfg():
    return MetricConfig(restarts=6, inner_iterations=60, outer_steps=8)
