"""Quintic polynomial interpolation between full boundary states.

Used by the training-time augmentation: the perturbed ego state and the
untouched state two seconds later are joined by a quintic per axis so the
replaced trajectory prefix stays C2-smooth at the seam.
"""

from __future__ import annotations

import numpy as np


def quintic_fit(p0, v0, a0, p1, v1, a1, horizon: float) -> np.ndarray:
    """Solve for coefficients c[0..5] with p(t) = sum c_k t^k on [0, horizon].

    Boundary conditions: position/velocity/acceleration at both ends match
    exactly. Inputs may be scalars or equal-length vectors (one polynomial
    per axis); returns shape (6,) or (6, naxes).
    """
    if horizon <= 0:
        raise ValueError(f"quintic_fit: horizon must be positive, got {horizon}")
    T = float(horizon)
    A = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, T, T**2, T**3, T**4, T**5],
        [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
        [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
    ], dtype=np.float64)
    b = np.stack([np.atleast_1d(np.asarray(v, dtype=np.float64))
                  for v in (p0, v0, a0, p1, v1, a1)])
    coeffs = np.linalg.solve(A, b)
    return coeffs[:, 0] if np.ndim(p0) == 0 else coeffs


def quintic_eval(coeffs: np.ndarray, t, order: int = 0) -> np.ndarray:
    """Evaluate the polynomial (or its velocity/acceleration) at times ``t``."""
    c = np.asarray(coeffs, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    k = np.arange(6)
    if order == 0:
        basis = t[..., None] ** k
    elif order == 1:
        basis = np.concatenate([np.zeros(t.shape + (1,)),
                                k[1:] * t[..., None] ** (k[1:] - 1)], axis=-1)
    elif order == 2:
        basis = np.concatenate([np.zeros(t.shape + (2,)),
                                k[2:] * (k[2:] - 1) * t[..., None] ** (k[2:] - 2)], axis=-1)
    else:
        raise ValueError(f"quintic_eval: order {order} unsupported")
    return basis @ c
