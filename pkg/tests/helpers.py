import numpy as np
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from sgflow.spectral import random_field
from sgflow.state import ControlTrajectory


def random_control(K, n_intervals, T, rng, scale=1.0):
    return ControlTrajectory(np.stack([random_field(K, rng, scale).coeff for _ in range(n_intervals)]), T)


def coeffs(K, bound=1.0):
    """Strategy for finite (K, K) coefficient arrays."""
    return arrays(np.float64, (K, K), elements=st.floats(-bound, bound, allow_nan=False, allow_infinity=False))


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)
