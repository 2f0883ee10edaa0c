"""Build measure controls that reproduce a given measure vector field.

For each base atom x the reachable set F(x) is covered by a greedy
farthest-point net of radius eps/2, the velocity fiber is collapsed onto
the net centers (Voronoi cells, ties to the earliest center) and every
center is realized by the lowest-index control attaining it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import ControlSystem, MeasureControl, VectorFieldRule, control_to_mvf, reachable_velocities
from .errors import NotAssociated, UnknownVelocity
from .measures import DiscreteMeasure, FiberedMeasure, _canonical, fiber_product, measure_to_document
from .transport import pseudo_distance

ASSOCIATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class VelocityNet:
    velocities: np.ndarray  # the covered set, sorted lexicographically
    centers: np.ndarray  # indices into velocities, in selection order
    cells: np.ndarray  # center slot (0..len(centers)-1) for every velocity
    epsilon: float

    @property
    def center_points(self) -> np.ndarray:
        return self.velocities[self.centers]

    def cell_diameters(self) -> np.ndarray:
        out = np.zeros(len(self.centers))
        for c in range(len(self.centers)):
            members = self.velocities[self.cells == c]
            if len(members) > 1:
                out[c] = np.linalg.norm(members[:, None] - members[None, :], axis=-1).max()
        return out

    def covering_radius(self) -> float:
        d = np.linalg.norm(self.velocities - self.center_points[self.cells], axis=1)
        return float(d.max())


def epsilon_net(velocities, eps: float) -> VelocityNet:
    """Greedy farthest-point net with every point strictly within eps/2 of a center.

    The first center is the lexicographically smallest velocity; each new
    center is the point farthest from the current centers (first in
    lexicographic order on ties).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    V = np.asarray(velocities, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] == 0:
        raise ValueError("empty velocity set")
    V = np.unique(V + 0.0, axis=0)
    centers = [0]
    dist = np.linalg.norm(V - V[0], axis=1)
    while dist.max() >= eps / 2:
        k = int(np.argmax(dist))
        centers.append(k)
        dist = np.minimum(dist, np.linalg.norm(V - V[k], axis=1))
    C = V[centers]
    to_centers = np.linalg.norm(V[:, None, :] - C[None, :, :], axis=-1)
    cells = np.argmin(to_centers, axis=1)
    return VelocityNet(V, np.array(centers), cells, float(eps))


def quantize_fiber(net: VelocityNet, fiber: DiscreteMeasure) -> DiscreteMeasure:
    """Move each velocity atom's mass to the center of its cell."""
    lookup = {tuple(v.tolist()): i for i, v in enumerate(net.velocities)}
    slots = []
    for v in fiber.points:
        try:
            slots.append(net.cells[lookup[tuple((v + 0.0).tolist())]])
        except KeyError:
            raise UnknownVelocity(f"velocity {tuple(v)} is not in the net") from None
    return _canonical(net.center_points[slots], np.array(fiber.weights))


def select_control(sys: ControlSystem, x, target) -> int:
    """Lowest-index control minimizing |f_hat(x, u) - target|."""
    d = np.linalg.norm(sys.velocities(x) - target, axis=1)
    return int(np.argmin(d))


class TableControl(MeasureControl):
    """Measure control synthesized from a vector field, one entry per base point."""

    rule = "table"

    def __init__(self, sys: ControlSystem, target: VectorFieldRule, eps: float, domain_box=None):
        self.sys = sys
        self.target = target
        self.eps = float(eps)
        self.domain_box = None if domain_box is None else np.asarray(domain_box, dtype=float)
        self.table: dict = {}

    def describe(self):
        return f"table(eps={self.eps:g}, mvf={getattr(self.target, 'name', 'mvf')})"

    def __call__(self, mu: DiscreteMeasure) -> FiberedMeasure:
        if self.domain_box is not None:
            box = self.domain_box.reshape(mu.dim, 2)
            if np.any(mu.points < box[:, 0]) or np.any(mu.points > box[:, 1]):
                raise ValueError("measure leaves the synthesis domain box")
        V = self.target(mu)
        if not V.base == mu:
            raise ValueError("vector field rule changed the base measure")
        fibers = [self._fiber(x, nu) for x, nu in zip(mu.points, V.fibers)]
        return fiber_product(mu, fibers, "control")

    def _fiber(self, x, nu: DiscreteMeasure) -> DiscreteMeasure:
        key = (tuple(x.tolist()), nu.points.tobytes(), nu.weights.tobytes())
        hit = self.table.get(key)
        if hit is not None:
            return hit
        F = reachable_velocities(self.sys, x)
        # snap every atom onto F(x); the offset is bounded by the association check
        d = np.linalg.norm(nu.points[:, None, :] - F[None, :, :], axis=-1)
        nearest = np.argmin(d, axis=1)
        offset = d[np.arange(len(nearest)), nearest]
        if np.any(offset > ASSOCIATION_TOL + self.eps / 2):
            raise NotAssociated(
                f"velocity {tuple(nu.points[np.argmax(offset)])} is {offset.max():.3g} away from F(x) at x={tuple(x)}"
            )
        snapped = _canonical(F[nearest], np.array(nu.weights))
        net = epsilon_net(F, self.eps)
        alpha = quantize_fiber(net, snapped)
        chosen = [select_control(self.sys, x, v) for v in alpha.points]
        beta = _canonical(self.sys.controls[chosen], np.array(alpha.weights))
        self.table[key] = beta
        return beta

    def to_document(self) -> dict:
        return {
            "rule": "table",
            "epsilon": self.eps,
            "entries": [
                {"x": list(key[0]), "fiber": measure_to_document(beta)} for key, beta in self.table.items()
            ],
        }


def synthesize_control(sys: ControlSystem, vfield_rule: VectorFieldRule, eps: float, domain_box=None) -> TableControl:
    """Control whose induced field is within eps of ``vfield_rule``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return TableControl(sys, vfield_rule, eps, domain_box)


def certificate(sys: ControlSystem, vfield_rule: VectorFieldRule, control: MeasureControl, probes) -> list[float]:
    """Pseudo-distance between the target field and the synthesized one on each probe."""
    return [pseudo_distance(vfield_rule(mu), control_to_mvf(sys, control, mu)) for mu in probes]
