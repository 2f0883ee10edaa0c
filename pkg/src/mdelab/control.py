"""Control systems with finite control sets, relaxed and measure controls.

Dynamics come from a closed registry of parametric families, each able to
report its own Lipschitz constant on a state box so the declared ``L_f``
can be audited when a system is loaded.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, UnknownControlPoint
from .measures import (
    DiscreteMeasure,
    FiberedMeasure,
    _canonical,
    fiber_product,
    measure_from_arrays,
    measure_from_document,
)
from .transport import EUCLIDEAN, GroundMetric, control_metric, hausdorff, pseudo_distance, wasserstein_value

LIPSCHITZ_RTOL = 1e-12


# -- dynamics registry -----------------------------------------------------


class Dynamics:
    """Section ``f_hat(x, u)`` of a controlled vector field.

    ``__call__`` broadcasts over leading axes: x is (..., n), u is (..., m).
    """

    family: str = ""

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def lipschitz_x(self, controls: np.ndarray, box: np.ndarray) -> float:
        """sup over u and x != y in the box of |f(x,u) - f(y,u)| / |x - y|."""
        raise NotImplementedError

    def control_gap(self, ui: np.ndarray, uj: np.ndarray, box: np.ndarray) -> float:
        """sup over x in the box of |f(x,ui) - f(x,uj)|."""
        raise NotImplementedError

    def coefficients(self) -> dict:
        return {}


def _box_corners(box: np.ndarray) -> np.ndarray:
    return np.array(list(itertools.product(*box)))


class Affine(Dynamics):
    family = "affine"

    def __init__(self, A, B, c=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        n = self.A.shape[0]
        self.c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise ConfigError("A must be n x n and B must have n rows", "coefficients")

    def __call__(self, x, u):
        return x @ self.A.T + u @ self.B.T + self.c

    def lipschitz_x(self, controls, box):
        return float(np.linalg.norm(self.A, 2))

    def control_gap(self, ui, uj, box):
        return float(np.linalg.norm(self.B @ (ui - uj)))

    def coefficients(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "c": self.c.tolist()}


class ControlTranslation(Dynamics):
    """f_hat(x, u) = u."""

    family = "control-translation"

    def __call__(self, x, u):
        return np.broadcast_to(u, np.broadcast_shapes(np.shape(x), np.shape(u))) + 0.0

    def lipschitz_x(self, controls, box):
        return 0.0

    def control_gap(self, ui, uj, box):
        return float(np.linalg.norm(ui - uj))


class DampedDrive(Dynamics):
    """f_hat(x, u) = -x + u."""

    family = "damped-drive"

    def __call__(self, x, u):
        return u - x

    def lipschitz_x(self, controls, box):
        return 1.0

    def control_gap(self, ui, uj, box):
        return float(np.linalg.norm(ui - uj))


class Bilinear(Dynamics):
    """f_hat(x, u) = (A + u_1 D) x + b, with u_1 the first control coordinate."""

    family = "bilinear"

    def __init__(self, A, D, b=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.D = np.atleast_2d(np.asarray(D, dtype=float))
        n = self.A.shape[0]
        self.b = np.zeros(n) if b is None else np.asarray(b, dtype=float).reshape(n)
        if self.A.shape != (n, n) or self.D.shape != (n, n):
            raise ConfigError("A and D must be n x n", "coefficients")

    def __call__(self, x, u):
        return x @ self.A.T + u[..., :1] * (x @ self.D.T) + self.b

    def lipschitz_x(self, controls, box):
        return max(float(np.linalg.norm(self.A + u[0] * self.D, 2)) for u in controls)

    def control_gap(self, ui, uj, box):
        # |D x| is convex in x, so its max over the box sits at a corner
        reach = np.linalg.norm(_box_corners(box) @ self.D.T, axis=1).max()
        return float(abs(ui[0] - uj[0]) * reach)

    def coefficients(self):
        return {"A": self.A.tolist(), "D": self.D.tolist(), "b": self.b.tolist()}


def make_dynamics(family: str, coefficients: dict | None = None) -> Dynamics:
    coefficients = coefficients or {}
    try:
        if family == "affine":
            return Affine(coefficients["A"], coefficients["B"], coefficients.get("c"))
        if family == "control-translation":
            return ControlTranslation()
        if family == "damped-drive":
            return DampedDrive()
        if family == "bilinear":
            return Bilinear(coefficients["A"], coefficients["D"], coefficients.get("b"))
    except KeyError as exc:
        raise ConfigError(f"missing coefficient {exc}", "coefficients") from None
    raise ConfigError(f"unknown dynamics family {family!r}", "family")


# -- control systems -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """Dynamics on R^dim driven by a finite control set.

    The declared Lipschitz constant is checked against the family's own
    constant on ``state_box`` at construction.
    """

    dim: int
    dynamics: Dynamics
    controls: np.ndarray
    metric: GroundMetric
    lipschitz: float
    u0: int
    state_box: np.ndarray
    labels: tuple | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.controls.ndim != 2 or self.controls.shape[0] == 0:
            raise ConfigError("control set must be a nonempty list of points", "controls")
        if self.state_box.shape != (self.dim, 2) or np.any(self.state_box[:, 0] > self.state_box[:, 1]):
            raise ConfigError(f"need one [lo, hi] pair per axis ({self.dim})", "state_box")
        if not 0 <= self.u0 < len(self.controls):
            raise ConfigError(f"u0 index {self.u0} out of range", "u0")
        if not self.lipschitz > 0:
            raise ConfigError("L_f must be positive", "L_f")
        if np.unique(self.controls + 0.0, axis=0).shape[0] != self.controls.shape[0]:
            raise ConfigError("duplicate control points", "controls")
        self.controls.setflags(write=False)
        for i, u in enumerate(self.controls):
            self._index[tuple((u + 0.0).tolist())] = i
        probe = self.dynamics(np.zeros((1, self.dim)), self.controls[:1])
        if probe.shape != (1, self.dim):
            raise ConfigError(
                f"dynamics maps into dimension {probe.shape[-1]}, state dimension is {self.dim}", "family"
            )
        needed = analytic_lipschitz(self)
        if self.lipschitz < needed * (1 - LIPSCHITZ_RTOL):
            raise ConfigError(
                f"declared L_f={self.lipschitz} is below the family constant {needed:.12g} on the state box",
                "L_f",
            )

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    def control_index(self, u) -> int:
        key = tuple((np.atleast_1d(np.asarray(u, dtype=float)) + 0.0).tolist())
        try:
            return self._index[key]
        except KeyError:
            raise UnknownControlPoint(f"{key} is not in the control set") from None

    def velocities(self, x) -> np.ndarray:
        """``f_hat(x, u)`` for every control, shape (p, n)."""
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return np.ascontiguousarray(self.dynamics(np.repeat(x, len(self.controls), axis=0), self.controls))

    def diameter(self) -> float:
        return float(self.metric.pairwise(self.controls, self.controls).max())

    def in_box(self, points: np.ndarray) -> bool:
        return bool(np.all(points >= self.state_box[:, 0]) and np.all(points <= self.state_box[:, 1]))


def analytic_lipschitz(sys: ControlSystem) -> float:
    """Lipschitz constant of the family on the state box.

    ``max(Lx, Lu)`` bounds ``|f(x,u1) - f(y,u2)| / (|x-y| + d(u1,u2))``,
    with Lu computed exactly over all pairs of the finite control set.
    """
    lx = sys.dynamics.lipschitz_x(sys.controls, sys.state_box)
    D = sys.metric.pairwise(sys.controls, sys.controls)
    lu = 0.0
    p = len(sys.controls)
    for i in range(p):
        for j in range(i + 1, p):
            lu = max(lu, sys.dynamics.control_gap(sys.controls[i], sys.controls[j], sys.state_box) / D[i, j])
    return max(lx, lu)


def reachable_velocities(sys: ControlSystem, x) -> np.ndarray:
    """The finite set F(x) = {f_hat(x, u) : u in U}, duplicates removed."""
    return np.unique(sys.velocities(x) + 0.0, axis=0)


def hausdorff_lipschitz_check(sys: ControlSystem, samples) -> float:
    """Largest observed d_H(F(x), F(y)) / |x - y| over the sample pairs."""
    worst = 0.0
    for x, y in samples:
        x = np.asarray(x, dtype=float).reshape(sys.dim)
        y = np.asarray(y, dtype=float).reshape(sys.dim)
        gap = float(np.linalg.norm(x - y))
        if gap == 0:
            continue
        worst = max(worst, hausdorff(reachable_velocities(sys, x), reachable_velocities(sys, y)) / gap)
    return worst


def relaxed_vector_field(sys: ControlSystem, x, rc: DiscreteMeasure) -> np.ndarray:
    """Average velocity sum_i w_i f_hat(x, u_i) under a relaxed control."""
    idx = [sys.control_index(u) for u in rc.points]
    return rc.weights @ sys.velocities(x)[idx]


def sublinear_constant(sys: ControlSystem) -> float:
    """Growth constant max{L_f, L_f diam(U) + |f_hat(0, u0)|}."""
    drift = float(np.linalg.norm(sys.velocities(np.zeros(sys.dim))[sys.u0]))
    return max(sys.lipschitz, sys.lipschitz * sys.diameter() + drift)


# -- measure controls ------------------------------------------------------


class MeasureControl:
    """Map mu -> fibered measure with control fibers and base mu."""

    rule = ""

    def __call__(self, mu: DiscreteMeasure) -> FiberedMeasure:
        return fiber_product(mu, [self.fiber_at(x) for x in mu.points], "control")

    def fiber_at(self, x: np.ndarray) -> DiscreteMeasure:
        raise NotImplementedError

    def is_deterministic(self) -> bool:
        """True when every fiber is a single Dirac."""
        return False

    def feedback(self, x: np.ndarray) -> np.ndarray:
        """Control value at x for deterministic rules, vectorized over rows."""
        raise NotImplementedError

    def describe(self) -> str:
        return self.rule


class ConstantFiber(MeasureControl):
    rule = "constant"

    def __init__(self, fiber: DiscreteMeasure, name: str | None = None):
        self.fiber = fiber
        self.name = name

    def fiber_at(self, x):
        return self.fiber

    def is_deterministic(self):
        return self.fiber.size == 1

    def feedback(self, x):
        return np.broadcast_to(self.fiber.points[0], (x.shape[0], self.fiber.dim))

    def describe(self):
        return self.name or f"constant{self.fiber.atoms()}"


class Feedback(MeasureControl):
    """Dirac fiber at the control nearest to clip(K x + k0, lo, hi).

    Ties between equally near controls go to the lowest control index.
    """

    rule = "feedback"

    def __init__(self, controls: np.ndarray, gain, offset=None, lo=None, hi=None, name=None):
        self.controls = np.asarray(controls, dtype=float)
        m = self.controls.shape[1]
        self.gain = np.atleast_2d(np.asarray(gain, dtype=float))
        self.offset = np.zeros(m) if offset is None else np.asarray(offset, dtype=float).reshape(m)
        self.lo = self.controls.min(axis=0) if lo is None else np.asarray(lo, dtype=float)
        self.hi = self.controls.max(axis=0) if hi is None else np.asarray(hi, dtype=float)
        self.name = name

    def feedback(self, x):
        x = np.atleast_2d(x)
        raw = np.clip(x @ self.gain.T + self.offset, self.lo, self.hi)
        d = np.linalg.norm(raw[:, None, :] - self.controls[None, :, :], axis=-1)
        return self.controls[np.argmin(d, axis=1)]

    def fiber_at(self, x):
        u = self.feedback(np.asarray(x)[None, :])[0]
        return DiscreteMeasure(u[None, :].copy(), np.ones(1))

    def is_deterministic(self):
        return True

    def describe(self):
        return self.name or "feedback"


class StateMixed(MeasureControl):
    """lambda(x) fiber_a + (1 - lambda(x)) fiber_b, lambda(x) = logistic(g.x + c)."""

    rule = "state-mixed"

    def __init__(self, fiber_a: DiscreteMeasure, fiber_b: DiscreteMeasure, gain, bias=0.0, name=None):
        self.fiber_a = fiber_a
        self.fiber_b = fiber_b
        self.gain = np.asarray(gain, dtype=float).reshape(-1)
        self.bias = float(bias)
        self.name = name

    def weight(self, x) -> float:
        return float(1.0 / (1.0 + np.exp(-(np.dot(self.gain, x) + self.bias))))

    def fiber_at(self, x):
        lam = self.weight(x)
        pts = np.vstack([self.fiber_a.points, self.fiber_b.points])
        wts = np.concatenate([lam * self.fiber_a.weights, (1 - lam) * self.fiber_b.weights])
        return _canonical(pts, wts)

    def describe(self):
        return self.name or "state-mixed"


def control_to_mvf(sys: ControlSystem, mc: MeasureControl, mu: DiscreteMeasure) -> FiberedMeasure:
    """Measure vector field V[mu] = f # (mc[mu]) with velocity fibers.

    Velocities are read from ``sys.velocities`` by control index, so every
    velocity atom is bitwise an element of ``reachable_velocities``.
    """
    controlled = mc(mu)
    return push_controls(sys, controlled)


def push_controls(sys: ControlSystem, controlled: FiberedMeasure) -> FiberedMeasure:
    fibers = []
    for x, beta in zip(controlled.base.points, controlled.fibers):
        idx = [sys.control_index(u) for u in beta.points]
        fibers.append(_canonical(sys.velocities(x)[idx], np.array(beta.weights)))
    return fiber_product(controlled.base, fibers, "velocity")


def wlipschitz_estimate(mc: MeasureControl, sys: ControlSystem, sample_pairs) -> float:
    """Largest observed pseudo-distance(mc[mu], mc[nu]) / W(mu, nu)."""
    worst = 0.0
    for mu, nu in sample_pairs:
        w = wasserstein_value(mu, nu)
        if w == 0:
            continue
        worst = max(worst, pseudo_distance(mc(mu), mc(nu), sys.metric) / w)
    return worst


# -- measure vector field rules --------------------------------------------


class VectorFieldRule:
    """Map mu -> fibered measure with velocity fibers and base mu."""

    name = ""

    def __call__(self, mu: DiscreteMeasure) -> FiberedMeasure:
        raise NotImplementedError


class ConstantVelocityFiber(VectorFieldRule):
    """Every atom carries the same velocity measure."""

    name = "relaxed-constant"

    def __init__(self, fiber: DiscreteMeasure):
        self.fiber = fiber

    def __call__(self, mu):
        return fiber_product(mu, [self.fiber] * mu.size, "velocity")


class Splitting(ConstantVelocityFiber):
    """Half the mass moves with velocity +s e_1, half with -s e_1."""

    name = "splitting"

    def __init__(self, dim: int, speed: float = 1.0):
        e = np.zeros((2, dim))
        e[0, 0], e[1, 0] = -speed, speed
        super().__init__(measure_from_arrays(e, [0.5, 0.5]))
        self.speed = speed


class ControlInduced(VectorFieldRule):
    """The field V^u generated by a measure control through the system."""

    name = "control"

    def __init__(self, sys: ControlSystem, mc: MeasureControl):
        self.sys = sys
        self.mc = mc

    def __call__(self, mu):
        return control_to_mvf(self.sys, self.mc, mu)


# -- documents -------------------------------------------------------------


def _field(doc: dict, key: str, path: str):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise ConfigError("required field missing", f"{path}.{key}" if path else key) from None


def system_from_document(doc: dict, path: str = "system") -> ControlSystem:
    """Build a system from ``{dim, family, coefficients, controls,
    control_metric, L_f, u0, state_box}``."""
    dim = int(_field(doc, "dim", path))
    controls = np.asarray(_field(doc, "controls", path), dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None]
    dynamics = make_dynamics(_field(doc, "family", path), doc.get("coefficients"))
    metric_doc = doc.get("control_metric", "euclidean")
    labels = None
    if metric_doc == "euclidean":
        metric = EUCLIDEAN
    elif isinstance(metric_doc, (dict, str)):
        if isinstance(metric_doc, str):
            metric_doc = json.loads(Path(metric_doc).read_text())
        labels = metric_doc.get("labels")
        metric = control_metric(controls, _field(metric_doc, "d", f"{path}.control_metric"), labels)
    else:
        raise ConfigError("expected 'euclidean' or a {labels, d} document", f"{path}.control_metric")
    box = np.asarray(doc.get("state_box", [[-1e6, 1e6]] * dim), dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (dim, 1))
    u0 = doc.get("u0", 0)
    if isinstance(u0, str):
        if not labels or u0 not in labels:
            raise ConfigError(f"unknown control label {u0!r}", f"{path}.u0")
        u0 = list(labels).index(u0)
    try:
        return ControlSystem(
            dim=dim,
            dynamics=dynamics,
            controls=controls,
            metric=metric,
            lipschitz=float(_field(doc, "L_f", path)),
            u0=int(u0),
            state_box=box,
            labels=tuple(labels) if labels else None,
        )
    except ConfigError as exc:
        if exc.path and not exc.path.startswith(path):
            raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.path}") from None
        raise


def system_to_document(sys: ControlSystem) -> dict:
    doc = {
        "dim": sys.dim,
        "family": sys.dynamics.family,
        "coefficients": sys.dynamics.coefficients(),
        "controls": sys.controls.tolist(),
        "L_f": sys.lipschitz,
        "u0": sys.u0,
        "state_box": sys.state_box.tolist(),
    }
    if sys.metric.kind == "control_metric":
        doc["control_metric"] = {"labels": list(sys.labels or []), "d": sys.metric.matrix.tolist()}
    else:
        doc["control_metric"] = "euclidean"
    return doc


def _fiber_doc(doc, path, sys: ControlSystem) -> DiscreteMeasure:
    if isinstance(doc, dict) and "labels" in doc and "atoms" not in doc:
        if not sys.labels:
            raise ConfigError("labelled fiber needs a labelled control metric", path)
        pts, wts = [], []
        for label, w in doc["labels"].items():
            if label not in sys.labels:
                raise ConfigError(f"unknown control label {label!r}", path)
            pts.append(sys.controls[sys.labels.index(label)])
            wts.append(w)
        fib = measure_from_arrays(np.array(pts), wts)
    else:
        try:
            fib = measure_from_document(doc)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), path) from None
    for u in fib.points:
        try:
            sys.control_index(u)
        except UnknownControlPoint as exc:
            raise ConfigError(str(exc), path) from None
    return fib


def control_from_document(doc: dict, sys: ControlSystem, path: str = "control") -> MeasureControl:
    rule = _field(doc, "rule", path)
    name = doc.get("name")
    if rule == "constant":
        return ConstantFiber(_fiber_doc(_field(doc, "fiber", path), f"{path}.fiber", sys), name)
    if rule == "feedback":
        law = doc.get("law", "affine-clip")
        if law == "constant":
            u = np.asarray(_field(doc, "value", path), dtype=float).reshape(1, -1)
            return ConstantFiber(measure_from_arrays(u, [1.0]), name)
        if law != "affine-clip":
            raise ConfigError(f"unknown feedback law {law!r}", f"{path}.law")
        return Feedback(sys.controls, _field(doc, "gain", path), doc.get("offset"), doc.get("lo"), doc.get("hi"), name)
    if rule == "state-mixed":
        return StateMixed(
            _fiber_doc(_field(doc, "fiber_a", path), f"{path}.fiber_a", sys),
            _fiber_doc(_field(doc, "fiber_b", path), f"{path}.fiber_b", sys),
            _field(doc, "gain", path),
            doc.get("bias", 0.0),
            name,
        )
    if rule == "table":
        from .synthesis import synthesize_control

        target = vector_field_from_document(_field(doc, "mvf", path), sys, f"{path}.mvf")
        return synthesize_control(sys, target, float(_field(doc, "epsilon", path)), doc.get("domain_box"))
    raise ConfigError(f"unknown control rule {rule!r}", f"{path}.rule")


def vector_field_from_document(doc: dict, sys: ControlSystem, path: str = "mvf") -> VectorFieldRule:
    rule = _field(doc, "rule", path)
    if rule == "splitting":
        return Splitting(sys.dim, float(doc.get("speed", 1.0)))
    if rule == "relaxed-constant":
        try:
            fib = measure_from_document(_field(doc, "fiber", path))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), f"{path}.fiber") from None
        if fib.dim != sys.dim:
            raise ConfigError("velocity fiber dimension differs from the state dimension", f"{path}.fiber")
        return ConstantVelocityFiber(fib)
    if rule == "control":
        return ControlInduced(sys, control_from_document(_field(doc, "control", path), sys, f"{path}.control"))
    raise ConfigError(f"unknown vector field rule {rule!r}", f"{path}.rule")


def make_system(
    family: str,
    controls: Sequence,
    lipschitz: float,
    state_box,
    coefficients: dict | None = None,
    dim: int | None = None,
    metric: GroundMetric = EUCLIDEAN,
    u0: int = 0,
    labels=None,
) -> ControlSystem:
    """Convenience constructor used by tests and scenarios."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None]
    box = np.asarray(state_box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    dim = dim or box.shape[0]
    if box.shape[0] != dim:
        box = np.tile(box[0], (dim, 1))
    return ControlSystem(dim, make_dynamics(family, coefficients), controls, metric, float(lipschitz), u0, box, labels)
