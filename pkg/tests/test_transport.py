import numpy as np
import pytest

from mdelab.errors import ConfigError, DimensionMismatch, EmptySet, FiberKindMismatch, UnknownControlPoint
from mdelab.measures import dirac, fiber_product, make_measure, measure_from_arrays
from mdelab.transport import (
    control_metric,
    dual_wasserstein,
    hausdorff,
    product_sum,
    pseudo_distance,
    wasserstein,
    wasserstein_value,
)
from oracles import cdf_distance, matching_cost, random_measure, scalar_face_pseudo


def _rand(rng, kmax=5, dim=None, equal=False):
    k = int(rng.integers(1, kmax + 1))
    d = dim or int(rng.integers(1, 4))
    return measure_from_arrays(*random_measure(rng, k, d, equal=equal))


def test_wasserstein_examples():
    assert wasserstein(dirac(0.0), dirac(1.0))[0] == 1.0
    m = make_measure([(0, 0.25), (3, 0.75)])
    assert wasserstein(m, m)[0] == 0.0
    value, plan = wasserstein(make_measure([(0, 0.5), (2, 0.5)]), dirac(1.0))
    assert abs(value - 1.0) < 1e-12
    assert len(plan.rows()) == 2


def test_plan_marginals_and_cost():
    rng = np.random.default_rng(3)
    for _ in range(30):
        d = int(rng.integers(1, 4))
        m1, m2 = _rand(rng, dim=d), _rand(rng, dim=d)
        value, plan = wasserstein(m1, m2)
        rows = plan.rows()
        cost = sum(w * np.linalg.norm(x - y) for x, y, w in rows)
        assert abs(cost - value) <= 1e-9
        for m, side in ((m1, 0), (m2, 1)):
            for p, w in zip(m.points, m.weights):
                got = sum(r[2] for r in rows if np.array_equal(r[side], p))
                assert abs(got - w) <= 1e-9


def test_matches_permutation_oracle():
    rng = np.random.default_rng(4)
    for _ in range(60):
        k, d = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        P, Q = rng.normal(size=(k, d)), rng.normal(size=(k, d))
        w = np.full(k, 1.0 / k)
        got = wasserstein(measure_from_arrays(P, w), measure_from_arrays(Q, w))[0]
        assert abs(got - matching_cost(P, Q)) <= 1e-9


def test_line_shortcut_matches_lp_and_cdf_oracle():
    rng = np.random.default_rng(5)
    for _ in range(60):
        m1, m2 = _rand(rng, 6, dim=1), _rand(rng, 6, dim=1)
        lp = wasserstein(m1, m2)[0]
        ref = cdf_distance(m1.points[:, 0], m1.weights, m2.points[:, 0], m2.weights)
        assert abs(lp - ref) <= 1e-9
        assert abs(wasserstein_value(m1, m2) - lp) <= 1e-9


def test_dual_examples():
    assert abs(dual_wasserstein(dirac(0.0), dirac(1.0)) - 1.0) < 1e-12
    m = make_measure([(0, 0.5), (1, 0.5)])
    assert dual_wasserstein(m, m) == 0.0
    assert abs(dual_wasserstein(make_measure([(0, 0.5), (2, 0.5)]), dirac(1.0)) - 1.0) < 1e-9


def test_metric_axioms():
    rng = np.random.default_rng(6)
    for _ in range(40):
        d = int(rng.integers(1, 4))
        a, b, c = (_rand(rng, 6, dim=d) for _ in range(3))
        ab, ba = wasserstein(a, b)[0], wasserstein(b, a)[0]
        assert ab >= 0 and abs(ab - ba) <= 1e-9
        assert wasserstein(a, a)[0] == 0.0
        assert ab <= wasserstein(a, c)[0] + wasserstein(c, b)[0] + 1e-8


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        wasserstein(dirac(0.0), dirac([0.0, 0.0]))


def test_control_metric_validation():
    pts = [[0.0], [1.0], [2.0]]
    g = control_metric(pts, [[0, 1, 2], [1, 0, 1], [2, 1, 0]], ["a", "b", "c"])
    m1, m2 = dirac(0.0), dirac(2.0)
    assert wasserstein(m1, m2, g)[0] == 2.0
    with pytest.raises(ConfigError):
        control_metric(pts, [[0, 1, 5], [1, 0, 1], [5, 1, 0]])  # triangle
    with pytest.raises(ConfigError):
        control_metric(pts, [[0, 1, 2], [1, 0, 1], [2, 2, 0]])  # symmetry
    with pytest.raises(ConfigError):
        control_metric(pts, [[1, 1, 2], [1, 0, 1], [2, 1, 0]])  # diagonal
    with pytest.raises(UnknownControlPoint):
        wasserstein(dirac(0.0), dirac(7.0), g)


def test_pseudo_distance_examples():
    g = control_metric([[0.0], [1.0]], [[0, 2], [2, 0]])
    j1 = fiber_product(dirac(0.0), [dirac(0.0)], "control")
    j2 = fiber_product(dirac(0.0), [dirac(1.0)], "control")
    assert pseudo_distance(j1, j2, g) == 2.0
    assert pseudo_distance(j1, j1, g) == 0.0


def test_pseudo_distance_face_is_binding():
    base = make_measure([(0, 0.5), (1, 0.5)])
    a, b = dirac(0.0), dirac(1.0)
    j1 = fiber_product(base, [a, b], "control")
    j2 = fiber_product(base, [b, a], "control")
    assert abs(pseudo_distance(j1, j2) - 1.0) <= 1e-9
    assert pseudo_distance(j1, j2, constrained=False) == 0.0


def test_pseudo_distance_errors():
    j1 = fiber_product(dirac(0.0), [dirac(0.0)], "control")
    j2 = fiber_product(dirac(0.0), [dirac(0.0)], "velocity")
    with pytest.raises(FiberKindMismatch):
        pseudo_distance(j1, j2)
    j3 = fiber_product(dirac(0.0), [dirac([0.0, 0.0])], "control")
    with pytest.raises(DimensionMismatch):
        pseudo_distance(j1, j3)


def _rand_fibered(rng, n=1, m=1):
    k = int(rng.integers(1, 4))
    base = measure_from_arrays(*random_measure(rng, k, n))
    fibers = [measure_from_arrays(*random_measure(rng, int(rng.integers(1, 3)), m)) for _ in range(base.size)]
    return fiber_product(base, fibers)


def test_pseudo_distance_properties():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n, m = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        j1, j2 = _rand_fibered(rng, n, m), _rand_fibered(rng, n, m)
        d12, d21 = pseudo_distance(j1, j2), pseudo_distance(j2, j1)
        assert d12 >= 0 and abs(d12 - d21) <= 1e-9
        assert pseudo_distance(j1, j1) == 0.0
        # one-sided bound against the product-sum distance of the joints
        ps = wasserstein(j1.flatten(), j2.flatten(), product_sum(n))[0]
        assert d12 + wasserstein(j1.base, j2.base)[0] >= ps - 1e-8
        # the scalar cost-row formulation of the face gives the same value
        ref = scalar_face_pseudo(*j1._product_arrays(), *j2._product_arrays(), n)
        assert abs(d12 - ref) <= 1e-6


def test_pseudo_distance_plan_is_coupling():
    rng = np.random.default_rng(8)
    j1, j2 = _rand_fibered(rng), _rand_fibered(rng)
    value, joint = pseudo_distance(j1, j2, return_plan=True)
    assert abs(joint.mass - 1) < 1e-12
    cost = joint.integrate(lambda p: np.abs(p[:, 1] - p[:, 3]))
    assert abs(cost - value) < 1e-9


def test_hausdorff_examples():
    assert hausdorff([0], [1, 2]) == 2.0
    C = np.random.default_rng(9).normal(size=(4, 2))
    assert hausdorff(C, C) == 0.0
    assert hausdorff([0, 1], [0]) == 1.0
    with pytest.raises(EmptySet):
        hausdorff(np.zeros((0, 1)), [0])


def test_hausdorff_metric():
    rng = np.random.default_rng(10)
    for _ in range(100):
        A, B, C = (rng.normal(size=(int(rng.integers(1, 5)), 2)) for _ in range(3))
        ab = hausdorff(A, B)
        assert ab >= 0 and ab == hausdorff(B, A)
        assert ab <= hausdorff(A, C) + hausdorff(C, B) + 1e-12
