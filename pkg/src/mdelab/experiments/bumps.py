"""Compactly supported C^2 test functions with closed-form gradients."""

from __future__ import annotations

import math

import numpy as np

# sup norms of the cubic B-spline and its first two derivatives on [-2, 2]
_B_MAX, _DB_MAX, _D2B_MAX = 2.0 / 3.0, 2.0 / 3.0, 2.0


def _spline(s):
    a = np.abs(s)
    return np.where(a < 1, 2.0 / 3.0 - a**2 + 0.5 * a**3, np.where(a < 2, (2 - a) ** 3 / 6.0, 0.0))


def _spline_deriv(s):
    a = np.abs(s)
    d = np.where(a < 1, -2 * a + 1.5 * a**2, np.where(a < 2, -0.5 * (2 - a) ** 2, 0.0))
    return np.sign(s) * d


class SplineBump:
    """Tensor product of cubic B-splines centred at ``center``.

    Supported on the cube of half-width ``radius`` around the center.
    """

    def __init__(self, center, radius: float, name: str | None = None):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        self.scale = 2.0 / self.radius
        self.name = name or f"bump{tuple(self.center)}r{self.radius:g}"

    @property
    def dim(self):
        return self.center.size

    def __call__(self, x):
        s = (np.atleast_2d(x) - self.center) * self.scale
        return np.prod(_spline(s), axis=1)

    def grad(self, x):
        s = (np.atleast_2d(x) - self.center) * self.scale
        b = _spline(s)
        db = _spline_deriv(s) * self.scale
        out = np.empty_like(s)
        for i in range(s.shape[1]):
            others = np.prod(np.delete(b, i, axis=1), axis=1) if s.shape[1] > 1 else 1.0
            out[:, i] = db[:, i] * others
        return out

    def grad_sup(self) -> float:
        """Upper bound on sup |grad g|."""
        n = self.dim
        return math.sqrt(n) * self.scale * _DB_MAX * _B_MAX ** (n - 1)

    def grad_lipschitz(self) -> float:
        """Upper bound on Lip(grad g) via the Frobenius norm of the Hessian."""
        n = self.dim
        diag = _D2B_MAX * _B_MAX ** (n - 1)
        off = _DB_MAX**2 * _B_MAX ** max(n - 2, 0)
        return self.scale**2 * math.sqrt(n * diag**2 + n * (n - 1) * off**2)


def bump_from_document(doc: dict) -> SplineBump:
    return SplineBump(doc["center"], doc["radius"], doc.get("name"))
