"""Lattice approximate solutions of controlled measure differential equations."""

from .control import (
    ConstantFiber,
    ConstantVelocityFiber,
    ControlInduced,
    ControlSystem,
    Feedback,
    MeasureControl,
    Splitting,
    StateMixed,
    analytic_lipschitz,
    control_to_mvf,
    make_system,
    reachable_velocities,
    sublinear_constant,
)
from .las import LASConfig, Trajectory, lattice_quantize, las_step, solve_las
from .measures import (
    DiscreteMeasure,
    FiberedMeasure,
    dirac,
    disintegrate,
    fiber_product,
    make_measure,
    pushforward,
)
from .synthesis import certificate, epsilon_net, synthesize_control
from .transport import dual_wasserstein, hausdorff, pseudo_distance, wasserstein, wasserstein_value

__version__ = "0.1.0"
