"""Finitely atomic probability measures and their disintegrations.

A :class:`DiscreteMeasure` stores its atoms sorted lexicographically by
coordinate, with exactly-equal points merged, so two measures are equal
precisely when their arrays are equal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyMeasure,
    FiberCountMismatch,
    MassMismatch,
    NegativeWeight,
)

MASS_TOL = 1e-9
PRUNE_THRESHOLD = 1e-15

FIBER_KINDS = ("control", "velocity")


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure ``sum_i w_i delta_{x_i}`` on R^dim.

    ``points`` has shape (k, dim) and ``weights`` shape (k,). Use
    :func:`make_measure` to build one from raw atoms.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def support(self) -> np.ndarray:
        return self.points[self.weights > PRUNE_THRESHOLD]

    def radius(self) -> float:
        """Largest Euclidean norm over the support."""
        return float(np.linalg.norm(self.points, axis=1).max())

    def integrate(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of a vectorized function ``fn((k, dim)) -> (k,)``."""
        return float(np.dot(self.weights, fn(self.points)))

    def atoms(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(map(float, p)), float(w)) for p, w in zip(self.points, self.weights)]

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None

    def allclose(self, other: "DiscreteMeasure", atol: float = 1e-12) -> bool:
        return (
            self.points.shape == other.points.shape
            and np.allclose(self.points, other.points, rtol=0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )

    def __repr__(self):
        body = ", ".join(f"{w:.6g}@{tuple(np.round(p, 6).tolist())}" for p, w in zip(self.points, self.weights))
        return f"DiscreteMeasure(dim={self.dim}, [{body}])"


def _canonical(points: np.ndarray, weights: np.ndarray) -> DiscreteMeasure:
    """Merge equal points, sort, prune tiny atoms and renormalize.

    No validation beyond emptiness; callers are trusted to pass
    nonnegative weights of (near) unit total mass.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    # -0.0 + 0.0 == +0.0, so signed zeros merge
    points = points + 0.0
    weights = np.asarray(weights, dtype=float)
    if points.shape[0] == 0:
        raise EmptyMeasure("measure has no atoms")
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=weights, minlength=uniq.shape[0])
    keep = merged >= PRUNE_THRESHOLD
    if not keep.any():
        raise EmptyMeasure("every atom fell below the prune threshold")
    uniq, merged = uniq[keep], merged[keep]
    merged = merged / merged.sum()
    return DiscreteMeasure(np.ascontiguousarray(uniq), merged)


def make_measure(raw_atoms: Sequence[tuple[Sequence[float] | float, float]]) -> DiscreteMeasure:
    """Validate a list of ``(point, weight)`` pairs and build a measure."""
    if len(raw_atoms) == 0:
        raise EmptyMeasure("no atoms given")
    points = np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in raw_atoms])
    weights = np.array([float(w) for _, w in raw_atoms])
    return measure_from_arrays(points, weights)


def measure_from_arrays(points, weights) -> DiscreteMeasure:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    weights = np.asarray(weights, dtype=float)
    if points.shape[0] != weights.shape[0]:
        raise DimensionMismatch("points and weights differ in length")
    if not np.all(np.isfinite(points)) or not np.all(np.isfinite(weights)):
        raise ValueError("non-finite coordinate or weight")
    if np.any(weights < 0):
        raise NegativeWeight(f"negative weight {weights.min()!r}")
    total = weights.sum()
    if abs(total - 1.0) > MASS_TOL:
        raise MassMismatch(f"weights sum to {total!r}, expected 1")
    return _canonical(points, weights)


def dirac(point) -> DiscreteMeasure:
    return make_measure([(point, 1.0)])


class AffineMap:
    """x -> A x + b, usable with :func:`pushforward`."""

    def __init__(self, A, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.zeros(self.A.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
        self.in_dim = self.A.shape[1]

    def __call__(self, points):
        return points @ self.A.T + self.b


def pushforward(m: DiscreteMeasure, fn) -> DiscreteMeasure:
    """Image measure ``fn # m``.

    ``fn`` maps a (k, dim) array to a (k, dim') array. An ``in_dim``
    attribute on ``fn``, when present, is checked against ``m.dim``.
    """
    in_dim = getattr(fn, "in_dim", None)
    if in_dim is not None and in_dim != m.dim:
        raise DimensionMismatch(f"map expects dimension {in_dim}, measure has {m.dim}")
    images = np.asarray(fn(np.array(m.points)), dtype=float)
    if images.ndim == 1:
        images = images[:, None]
    if images.shape[0] != m.size:
        raise DimensionMismatch("map changed the number of atoms")
    return _canonical(images, np.array(m.weights))


@dataclass(frozen=True, eq=False)
class FiberedMeasure:
    """A base measure together with one conditional measure per base atom.

    ``fibers[i]`` lives over ``base.points[i]``. ``kind`` is ``"control"``
    for control fibers and ``"velocity"`` for tangent-vector fibers.
    """

    base: DiscreteMeasure
    fibers: tuple
    kind: str

    def __post_init__(self):
        if self.kind not in FIBER_KINDS:
            raise ValueError(f"unknown fiber kind {self.kind!r}")
        if len(self.fibers) != self.base.size:
            raise FiberCountMismatch(f"{len(self.fibers)} fibers for {self.base.size} base atoms")
        dims = {f.dim for f in self.fibers}
        if len(dims) > 1:
            raise DimensionMismatch(f"fibers have mixed dimensions {sorted(dims)}")

    @property
    def fiber_dim(self) -> int:
        return self.fibers[0].dim

    def flatten(self) -> DiscreteMeasure:
        """Joint measure with atoms (x, y) of weight w_base * w_fiber."""
        pts, wts = self._product_arrays()
        return _canonical(pts, wts)

    def _product_arrays(self):
        rows, wts = [], []
        for x, wx, fib in zip(self.base.points, self.base.weights, self.fibers):
            rows.append(np.hstack([np.broadcast_to(x, (fib.size, x.size)), fib.points]))
            wts.append(wx * fib.weights)
        return np.vstack(rows), np.concatenate(wts)

    def __eq__(self, other):
        if not isinstance(other, FiberedMeasure):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.base == other.base
            and all(a == b for a, b in zip(self.fibers, other.fibers))
        )

    __hash__ = None


def fiber_product(base: DiscreteMeasure, fibers: Sequence[DiscreteMeasure], kind: str = "velocity") -> FiberedMeasure:
    return FiberedMeasure(base, tuple(fibers), kind)


def disintegrate(joint: DiscreteMeasure, split_dim: int, kind: str = "velocity") -> FiberedMeasure:
    """Split a joint measure on R^split x R^(dim-split) into base and fibers."""
    if not 0 < split_dim < joint.dim:
        raise DimensionMismatch(f"split {split_dim} outside (0, {joint.dim})")
    heads = joint.points[:, :split_dim]
    # atoms are lexicographically sorted, so equal heads are contiguous
    starts = np.flatnonzero(np.r_[True, np.any(heads[1:] != heads[:-1], axis=1)])
    ends = np.r_[starts[1:], joint.size]
    base_pts, base_w, fibers = [], [], []
    for s, e in zip(starts, ends):
        w = joint.weights[s:e]
        total = w.sum()
        base_pts.append(heads[s])
        base_w.append(total)
        fibers.append(DiscreteMeasure(np.ascontiguousarray(joint.points[s:e, split_dim:]), w / total))
    base = DiscreteMeasure(np.array(base_pts), np.array(base_w))
    return FiberedMeasure(base, tuple(fibers), kind)


def mixture(measures: Sequence[DiscreteMeasure], coefficients: Sequence[float]) -> DiscreteMeasure:
    pts = np.vstack([m.points for m in measures])
    wts = np.concatenate([c * m.weights for m, c in zip(measures, coefficients)])
    return measure_from_arrays(pts, wts)


# -- serialization ---------------------------------------------------------


def measure_to_document(m: DiscreteMeasure) -> dict:
    return {"dim": m.dim, "atoms": [[*map(float, p), float(w)] for p, w in zip(m.points, m.weights)]}


def measure_from_document(doc: dict) -> DiscreteMeasure:
    try:
        dim = int(doc["dim"])
        rows = doc["atoms"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"measure document needs 'dim' and 'atoms' ({exc})") from None
    atoms = []
    for i, row in enumerate(rows):
        if len(row) != dim + 1:
            raise DimensionMismatch(f"atoms[{i}] has {len(row)} entries, expected {dim + 1}")
        atoms.append((row[:dim], row[dim]))
    return make_measure(atoms)


def save_measure(m: DiscreteMeasure, path) -> None:
    # json writes floats with repr, i.e. the shortest round-tripping form
    Path(path).write_text(json.dumps(measure_to_document(m), indent=1))


def load_measure(path) -> DiscreteMeasure:
    return measure_from_document(json.loads(Path(path).read_text()))
