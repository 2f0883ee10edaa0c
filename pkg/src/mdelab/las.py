"""Lattice Approximate Solutions of measure differential equations.

Positions live on the lattice Z^n / N^2 intersected with [-N, N]^n and
velocities are snapped to the grid Z^n / N, so one full step of length
1/N moves lattice index i to i + j exactly. All full-step arithmetic is
done on integer indices; floats are produced only as ``index / N**2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .control import ControlSystem, MeasureControl, control_to_mvf, sublinear_constant
from .errors import SupportEscapesLattice
from .measures import DiscreteMeasure, FiberedMeasure, _canonical
from .transport import wasserstein_value

log = logging.getLogger(__name__)

# coordinates within this relative distance of a grid line count as on it
SNAP_TOL = 1e-9


def grid_floor(values: np.ndarray, scale: int) -> np.ndarray:
    """Integer k with ``values`` in [k, k+1) / scale (component-wise floor).

    Values that are grid points up to float round-off snap to that point
    instead of falling into the cell below.
    """
    s = np.asarray(values, dtype=float) * scale
    r = np.round(s)
    on_line = np.abs(s - r) <= SNAP_TOL * np.maximum(1.0, np.abs(s))
    return np.where(on_line, r, np.floor(s)).astype(np.int64)


@dataclass(frozen=True)
class LASConfig:
    """Resolution N (time step 1/N, cell side 1/N^2) and horizon T."""

    N: int
    horizon_T: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not self.horizon_T > 0:
            raise ValueError("horizon must be positive")

    @property
    def steps(self) -> int:
        return int(math.floor(self.horizon_T * self.N + 1e-9))

    @property
    def remainder(self) -> float:
        """Part of the horizon dropped to make T*N an integer."""
        return max(0.0, self.horizon_T - self.steps / self.N)

    @property
    def tau(self) -> float:
        return 1.0 / self.N

    @property
    def half_width(self) -> int:
        """Lattice indices run over [-N^3, N^3] per axis."""
        return self.N**3


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: list
    states: list
    config: LASConfig
    provenance: str
    fields: list = field(repr=False, default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def final(self) -> DiscreteMeasure:
        return self.states[-1]

    def at(self, t: float) -> DiscreteMeasure:
        """State at an arbitrary time, displacing atoms inside the step.

        Intermediate times are for output only and never re-quantized.
        """
        N = self.config.N
        ell = min(int(math.floor(t * N + 1e-12)), len(self.states) - 1)
        tau = t - ell / N
        if ell == len(self.states) - 1 or tau <= 0:
            return self.states[ell]
        return las_step(self.states[ell], self.fields[ell], N, tau)


def _check_range(idx: np.ndarray, N: int, step=None):
    bad = np.abs(idx) > N**3
    if bad.any():
        row = np.argmax(bad.any(axis=1))
        raise SupportEscapesLattice(
            f"atom at {tuple(idx[row] / N**2)} outside the lattice box [-{N}, {N}]^n", step
        )


def lattice_quantize(mu: DiscreteMeasure, N: int) -> DiscreteMeasure:
    """Move each atom's mass to the lattice point whose cell [0, 1/N^2)^n contains it."""
    idx = grid_floor(mu.points, N * N)
    _check_range(idx, N)
    return _canonical(idx / (N * N), np.array(mu.weights))


def _lattice_index(state: DiscreteMeasure, N: int) -> np.ndarray:
    idx = grid_floor(state.points, N * N)
    if np.any(np.abs(idx / (N * N) - state.points) > SNAP_TOL * np.maximum(1.0, np.abs(state.points))):
        raise ValueError("state is not supported on the lattice; quantize it first")
    return idx


def las_step(state: DiscreteMeasure, vfield: FiberedMeasure, N: int, tau: float | None = None) -> DiscreteMeasure:
    """Advance ``state`` by ``tau`` (default 1/N) along snapped velocities.

    Each velocity v in the fiber over x is replaced by the grid point v_j
    with v in v_j + [0, 1/N)^n and its mass moves to x + tau v_j.
    """
    if vfield.kind != "velocity":
        raise ValueError("las_step needs velocity fibers")
    if not vfield.base == state:
        raise ValueError("vector field base differs from the state")
    n = state.dim
    P, w = vfield._product_arrays()
    j = grid_floor(P[:, n:], N)
    if tau is None or tau == 1.0 / N:
        counts = [f.size for f in vfield.fibers]
        i = np.repeat(_lattice_index(state, N), counts, axis=0)
        dest = i + j
        _check_range(dest, N)
        return _canonical(dest / (N * N), w)
    if not 0 < tau <= 1.0 / N:
        raise ValueError(f"tau must lie in (0, 1/N], got {tau}")
    return _canonical(P[:, :n] + tau * (j / N), w)


def apriori_radius(sys: ControlSystem, mu0: DiscreteMeasure, T: float) -> float:
    """Growth bound 1 + R(t) <= (1 + R0) e^{C t} plus the snapping drift."""
    C = sublinear_constant(sys)
    return (1.0 + mu0.radius()) * math.exp(C * T) - 1.0


def solve_las(
    sys: ControlSystem,
    mc: MeasureControl | None,
    mu0: DiscreteMeasure,
    cfg: LASConfig,
    vfield_rule=None,
    provenance: str | None = None,
) -> Trajectory:
    """Lattice approximate solution driven by ``V[mu] = f # mc[mu]``.

    ``vfield_rule`` (mu -> velocity-fibered measure) overrides the
    control-induced field when given.
    """
    N = cfg.N
    if cfg.remainder > 0:
        log.warning("horizon %.6g is not a multiple of 1/%d; dropping %.3g", cfg.horizon_T, N, cfg.remainder)
    if sys is not None:
        reach = apriori_radius(sys, mu0, cfg.steps / N)
        if reach > N:
            log.info("a-priori support radius %.4g exceeds the lattice half-width %d", reach, N)
    if vfield_rule is None:
        if mc is None:
            raise ValueError("need a measure control or a vector field rule")

        def vfield_rule(mu):
            return control_to_mvf(sys, mc, mu)

    if provenance is None:
        provenance = mc.describe() if mc is not None else getattr(vfield_rule, "name", "mvf")
    state = lattice_quantize(mu0, N)
    states, fields = [state], []
    mass_error = abs(state.mass - 1.0)
    max_atoms = state.size
    for ell in range(cfg.steps):
        V = vfield_rule(state)
        try:
            state = lattice_quantize(las_step(state, V, N), N)
        except SupportEscapesLattice as exc:
            raise SupportEscapesLattice(str(exc), ell + 1) from None
        fields.append(V)
        states.append(state)
        mass_error += abs(state.mass - 1.0)
        max_atoms = max(max_atoms, state.size)
    times = [ell / N for ell in range(len(states))]
    stats = {"mass_error": mass_error, "max_atom_count": max_atoms, "remainder": cfg.remainder}
    return Trajectory(times, states, cfg, provenance, fields, stats)


def time_modulus_check(traj: Trajectory, sys: ControlSystem | None = None) -> float:
    """max over l < l' of W(states[l], states[l']) / ((l' - l) / N)."""
    N = traj.config.N
    worst = 0.0
    S = traj.states
    for a in range(len(S)):
        for b in range(a + 1, len(S)):
            worst = max(worst, wasserstein_value(S[a], S[b]) * N / (b - a))
    return worst


def time_modulus_bound(traj: Trajectory, sys: ControlSystem) -> float:
    """C exp(C T) (R + 1) + 2/N, R the radius of the initial state."""
    C = sublinear_constant(sys)
    T = traj.times[-1]
    R = traj.states[0].radius()
    return C * math.exp(C * T) * (R + 1.0) + 2.0 / traj.config.N
