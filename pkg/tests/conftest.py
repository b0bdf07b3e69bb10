"""Shared oracle helpers: independent real-space evaluation and finite differences.

The oracles avoid the library's grid machinery: fields are evaluated by direct
summation over their stored modes, and derivatives come from 6th-order central
differences on a dense periodic grid.
"""

import numpy as np
import pytest


def direct_eval(field, n_grid: int) -> np.ndarray:
    """Evaluate a SpectralField on an n_grid^2 periodic grid by direct mode sum."""
    x = 2.0 * np.pi * np.arange(n_grid) / n_grid
    X, Y = np.meshgrid(x, x, indexing="ij")
    vals = np.zeros((2, n_grid, n_grid), dtype=np.complex128)
    b = field.band
    for kx in range(-b, b + 1):
        for ky in range(-b, b + 1):
            c = field.coeffs[:, b + kx, b + ky]
            if c[0] == 0 and c[1] == 0:
                continue
            phase = np.exp(1j * (kx * X + ky * Y))
            vals[0] += c[0] * phase
            vals[1] += c[1] * phase
    return vals


def fd_derivative(vals: np.ndarray, axis: int) -> np.ndarray:
    """6th-order central difference along a periodic axis (unit circumference 2*pi)."""
    n = vals.shape[axis]
    h = 2.0 * np.pi / n

    def sh(k):
        return np.roll(vals, -k, axis=axis)

    return (-sh(-3) + 9 * sh(-2) - 45 * sh(-1) + 45 * sh(1) - 9 * sh(2) + sh(3)) / (60.0 * h)


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
