"""Exact optimal transport between atomic measures.

All transport problems are small dense linear programs solved with the
HiGHS simplex through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance as _cdf_distance

from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptySet,
    FiberKindMismatch,
    SolverFailure,
    UnknownControlPoint,
)
from .measures import DiscreteMeasure, FiberedMeasure, _canonical

METRIC_TOL = 1e-12
# relative reduced-cost threshold separating optimal-face pairs
FACE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GroundMetric:
    """Ground distance for transport problems.

    kind is one of ``euclidean_state``, ``control_metric`` (a distance
    matrix indexed by the rows of ``points``) or ``product_sum`` (the sum
    ``|x1 - x2| + d_fiber(u1, u2)`` on points split after ``split``
    coordinates).
    """

    kind: str = "euclidean_state"
    matrix: np.ndarray | None = None
    points: np.ndarray | None = None
    labels: tuple | None = None
    split: int | None = None
    fiber: "GroundMetric | None" = None

    def pairwise(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        if self.kind == "euclidean_state":
            return np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=-1)
        if self.kind == "control_metric":
            return self.matrix[np.ix_(self.index_of(P), self.index_of(Q))]
        if self.kind == "product_sum":
            s = self.split
            base = np.linalg.norm(P[:, None, :s] - Q[None, :, :s], axis=-1)
            return base + self.fiber.pairwise(P[:, s:], Q[:, s:])
        raise ValueError(f"unknown metric kind {self.kind!r}")

    def index_of(self, P: np.ndarray) -> np.ndarray:
        lookup = self._lookup()
        out = np.empty(P.shape[0], dtype=int)
        for r, p in enumerate(P):
            try:
                out[r] = lookup[tuple(p.tolist())]
            except KeyError:
                raise UnknownControlPoint(f"{tuple(p)} is not a control point") from None
        return out

    def _lookup(self):
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {tuple((p + 0.0).tolist()): i for i, p in enumerate(self.points)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache


EUCLIDEAN = GroundMetric()


def _as_point_array(points) -> np.ndarray:
    """(k, d) array; a flat sequence is read as k scalar points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def control_metric(points, matrix, labels=None) -> GroundMetric:
    """Validated finite metric on control points (symmetric, zero diagonal, triangle)."""
    points = _as_point_array(points)
    D = np.asarray(matrix, dtype=float)
    k = points.shape[0]
    if D.shape != (k, k):
        raise ConfigError(f"metric matrix shape {D.shape} does not match {k} controls", "control_metric.d")
    if np.any(D < 0):
        raise ConfigError("negative distance", "control_metric.d")
    if not np.allclose(D, D.T, rtol=0, atol=METRIC_TOL):
        raise ConfigError("matrix is not symmetric", "control_metric.d")
    if np.any(np.abs(np.diag(D)) > 0):
        raise ConfigError("nonzero diagonal", "control_metric.d")
    # d[i,j] <= d[i,h] + d[h,j] for all h
    if np.any(D[:, None, :] > D[:, :, None] + D[None, :, :] + METRIC_TOL):
        raise ConfigError("triangle inequality fails", "control_metric.d")
    off = D + np.eye(k)
    if k > 1 and np.any(off <= 0):
        raise ConfigError("distinct controls at distance zero", "control_metric.d")
    return GroundMetric("control_metric", D, points, tuple(labels) if labels is not None else None)


def product_sum(split: int, fiber: GroundMetric = EUCLIDEAN) -> GroundMetric:
    return GroundMetric("product_sum", split=split, fiber=fiber)


def load_control_metric(path_or_doc, points) -> GroundMetric:
    doc = path_or_doc
    if not isinstance(doc, dict):
        doc = json.loads(Path(doc).read_text())
    try:
        return control_metric(points, doc["d"], doc.get("labels"))
    except KeyError:
        raise ConfigError("missing 'd'", "control_metric") from None


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling of two measures stored as a joint measure on the product."""

    joint: DiscreteMeasure
    left_marginal: DiscreteMeasure
    right_marginal: DiscreteMeasure
    cost: float

    @property
    def split(self) -> int:
        return self.left_marginal.dim

    def rows(self):
        """Plan as ``(x, y, weight)`` triples."""
        s = self.split
        return [(p[:s], p[s:], w) for p, w in zip(self.joint.points, self.joint.weights)]


def _transport_constraints(k1: int, k2: int):
    rows = sparse.kron(sparse.eye(k1), np.ones((1, k2)))
    cols = sparse.kron(np.ones((1, k1)), sparse.eye(k2))
    return sparse.vstack([rows, cols]).tocsr()


def _linprog(c, **kw):
    res = linprog(c, method="highs", **kw)
    if res.status != 0:
        raise SolverFailure(f"linear program failed: {res.message}")
    return res


def _solve_plan(a, b, C, allowed=None):
    """Min <C, T> over couplings of a and b; returns the (k1, k2) plan.

    ``allowed`` optionally masks the entries that may be nonzero.
    """
    k1, k2 = C.shape
    if k1 == 1 or k2 == 1:
        T = np.outer(a, b)
        if allowed is not None and np.any(T[~allowed] > 0):
            raise SolverFailure("the only coupling uses a forbidden pair")
        return T
    bounds = (0, None)
    if allowed is not None:
        upper = np.where(allowed.ravel(), np.inf, 0.0)
        bounds = np.column_stack([np.zeros(k1 * k2), upper])
    res = _linprog(C.ravel(), A_eq=_transport_constraints(k1, k2), b_eq=np.concatenate([a, b]), bounds=bounds)
    return np.clip(res.x.reshape(k1, k2), 0.0, None)


def _plan_from_matrix(m1, m2, T, cost) -> TransportPlan:
    i, j = np.nonzero(T > 0)
    pts = np.hstack([m1.points[i], m2.points[j]])
    return TransportPlan(_canonical(pts, T[i, j]), m1, m2, cost)


def wasserstein(m1: DiscreteMeasure, m2: DiscreteMeasure, g: GroundMetric = EUCLIDEAN):
    """Order-1 Wasserstein distance; returns ``(value, plan)``."""
    if m1.dim != m2.dim:
        raise DimensionMismatch(f"dimensions {m1.dim} and {m2.dim} differ")
    C = g.pairwise(m1.points, m2.points)
    T = _solve_plan(m1.weights, m2.weights, C)
    cost = float(np.sum(T * C))
    return cost, _plan_from_matrix(m1, m2, T, cost)


def wasserstein_value(m1: DiscreteMeasure, m2: DiscreteMeasure, g: GroundMetric = EUCLIDEAN) -> float:
    if m1.dim != m2.dim:
        raise DimensionMismatch(f"dimensions {m1.dim} and {m2.dim} differ")
    if m1 == m2:
        return 0.0
    if m1.dim == 1 and g.kind == "euclidean_state":
        # on the line W1 is the L1 distance between distribution functions
        return float(_cdf_distance(m1.points[:, 0], m2.points[:, 0], m1.weights, m2.weights))
    C = g.pairwise(m1.points, m2.points)
    return float(np.sum(_solve_plan(m1.weights, m2.weights, C) * C))


def dual_wasserstein(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Kantorovich-Rubinstein dual: sup of int f d(m1 - m2) over 1-Lipschitz f.

    Potentials live on the union of both supports; the constraints are
    ``f(z_i) - f(z_j) <= |z_i - z_j|`` for every ordered pair.
    """
    if m1.dim != m2.dim:
        raise DimensionMismatch(f"dimensions {m1.dim} and {m2.dim} differ")
    Z, inv = np.unique(np.vstack([m1.points, m2.points]) + 0.0, axis=0, return_inverse=True)
    inv = inv.ravel()
    K = Z.shape[0]
    signed = np.zeros(K)
    np.add.at(signed, inv[: m1.size], m1.weights)
    np.add.at(signed, inv[m1.size :], -m2.weights)
    if K == 1:
        return 0.0
    D = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    ii, jj = np.nonzero(~np.eye(K, dtype=bool))
    n = ii.size
    A = sparse.csr_matrix(
        (np.r_[np.ones(n), -np.ones(n)], (np.r_[np.arange(n), np.arange(n)], np.r_[ii, jj])),
        shape=(n, K),
    )
    bounds = [(0, 0)] + [(None, None)] * (K - 1)
    res = _linprog(-signed, A_ub=A, b_ub=D[ii, jj], bounds=bounds)
    return float(-res.fun)


def _optimal_support(a, b, C) -> np.ndarray:
    """Boolean mask of base pairs that may carry mass in an optimal plan.

    For any optimal dual pair (phi, psi) a feasible plan is optimal exactly
    when it vanishes wherever ``C - phi - psi > 0``.
    """
    k1, k2 = C.shape
    if k1 == 1 or k2 == 1:
        return np.ones_like(C, dtype=bool)
    res = _linprog(C.ravel(), A_eq=_transport_constraints(k1, k2), b_eq=np.concatenate([a, b]), bounds=(0, None))
    y = res.eqlin.marginals
    reduced = C - y[:k1, None] - y[None, k1:]
    return reduced <= FACE_TOL * (1.0 + np.abs(C).max())


def pseudo_distance(
    j1: FiberedMeasure,
    j2: FiberedMeasure,
    secondary: GroundMetric = EUCLIDEAN,
    constrained: bool = True,
    return_plan: bool = False,
):
    """Minimal fiber transport cost over plans whose base part is optimal.

    Stage 1 solves the base transport problem and keeps the pairs of base
    atoms with zero reduced cost; stage 2 minimizes the fiber cost over
    couplings of the flattened joints supported on those pairs. With
    ``constrained=False`` every pair is allowed.
    """
    if j1.kind != j2.kind:
        raise FiberKindMismatch(f"{j1.kind} fibers vs {j2.kind} fibers")
    if j1.base.dim != j2.base.dim or j1.fiber_dim != j2.fiber_dim:
        raise DimensionMismatch("fibered measures live on different spaces")
    n = j1.base.dim
    P, a = j1._product_arrays()
    Q, b = j2._product_arrays()
    Cf = secondary.pairwise(P[:, n:], Q[:, n:])
    allowed = None
    if constrained:
        if j1.base == j2.base:
            # W(mu, mu) = 0 is attained only by the diagonal coupling
            base_pairs = np.eye(j1.base.size, dtype=bool)
        else:
            base_pairs = _optimal_support(
                j1.base.weights, j2.base.weights, EUCLIDEAN.pairwise(j1.base.points, j2.base.points)
            )
        owner1 = np.repeat(np.arange(j1.base.size), [f.size for f in j1.fibers])
        owner2 = np.repeat(np.arange(j2.base.size), [f.size for f in j2.fibers])
        allowed = base_pairs[np.ix_(owner1, owner2)]
    T = _solve_plan(a, b, Cf, allowed=allowed)
    value = float(np.sum(T * Cf))
    if return_plan:
        i, k = np.nonzero(T > 0)
        joint = _canonical(np.hstack([P[i], Q[k]]), T[i, k])
        return value, joint
    return value


def hausdorff(s1, s2) -> float:
    """Hausdorff distance between two finite point sets."""
    A = _as_point_array(s1)
    B = _as_point_array(s2)
    if A.size == 0 or B.size == 0:
        raise EmptySet("Hausdorff distance needs nonempty sets")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch("point sets differ in dimension")
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
