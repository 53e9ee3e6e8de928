import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jitter_reflect import JitterSpec
from jitter_reflect.jitter import jitter_gcd


def test_gcd_excludes_zero_offset():
    assert jitter_gcd(10, [-3, -2, -1, 0, 1, 2, 3]) == 1
    assert jitter_gcd(3, [-2, 0, 2]) == 2


def test_flip_masses():
    spec = JitterSpec.flip(0.25)
    assert dict(spec.masses) == {-1: 0.25, 0: 0.5, 1: 0.25}


@pytest.mark.parametrize(
    "spec",
    [
        JitterSpec.uniform(),
        JitterSpec.discrete({-2: 0.1, -1: 0.2, 0: 0.4, 1: 0.2, 2: 0.1}),
        JitterSpec.piecewise([[-0.1, -0.05, 2.0], [-0.05, 0.05, 8.0], [0.05, 0.1, 2.0]]),
    ],
)
def test_dict_roundtrip(spec):
    assert JitterSpec.from_dict(spec.to_dict()) == spec


def test_negative_mass_named():
    names = [n for n, _ in JitterSpec.discrete({-1: -0.2, 0: 1.4, 1: -0.2}).errors("discrete", 4, 2)]
    assert "negative_mass" in names


def test_piecewise_in_discrete_mode_rejected():
    spec = JitterSpec.piecewise([[-1, 1, 0.5]])
    assert "wrong_jitter_kind" in [n for n, _ in spec.errors("discrete", 4, 1)]


def test_symmetric_piecewise_accepted():
    spec = JitterSpec.piecewise([[-0.1, 0.0, 5.0], [0.0, 0.1, 5.0]])
    assert spec.errors("continuous", 1.0, 0.1) == []


def test_discrete_sampling_inverse_cdf():
    law = JitterSpec.uniform().law("discrete", 3)
    u = (np.arange(7) + 0.5) / 7
    assert law.sample(u).tolist() == [-3, -2, -1, 0, 1, 2, 3]


@given(st.floats(0, 1, exclude_max=True))
def test_uniform_sample_in_support(u):
    v = JitterSpec.uniform().law("continuous", 0.3).sample(u)
    assert -0.3 <= v <= 0.3


def test_uniform_fourier_is_sinc():
    law = JitterSpec.uniform().law("continuous", 0.1)
    for k in range(1, 10):
        x = math.pi * k * 0.1
        assert law.fourier(k, 1.0) == pytest.approx(math.sin(x) / x, abs=1e-14)


def test_piecewise_sampling_matches_cdf():
    spec = JitterSpec.piecewise([[-0.1, -0.05, 2.0], [-0.05, 0.05, 8.0], [0.05, 0.1, 2.0]])
    assert spec.errors("continuous", 1.0, 0.1) == []
    law = spec.law("continuous", 0.1)
    u = np.linspace(0.001, 0.999, 999)
    np.testing.assert_allclose(law.cdf(law.sample(u)), u, atol=1e-12)
